"""Command-line entry point.

Subcommands:
  design <features-file> [--anchor I] [--fw-tol X]   print policy + certificate
  run --config FILE [--mode M] [--seed S] [--reps N] [--out DIR] [--workers W]
  validate --config FILE

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .design import FeatureSet, deo
from .errors import ConfigError, SemibanditError
from .harness import ExperimentConfig, fmt, run_experiment


def _cmd_design(args) -> int:
    feats = FeatureSet.from_file(args.features_file)
    policy, cert = deo(feats, anchor=args.anchor, fw_tol=args.fw_tol)
    print("arm_index,probability")
    for i, p in enumerate(policy.probabilities):
        print(f"{i},{fmt(p)}")
    print(
        f"# certificate: max_anchor_norm={fmt(cert.max_anchor_norm)} "
        f"max_centered_norm={fmt(cert.max_centered_norm)} "
        f"support={cert.support_size} dim={cert.dim}"
    )
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.mode is not None:
        cfg.mode = args.mode
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.reps is not None:
        cfg.replications = args.reps
    if args.out is not None:
        cfg.output = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.validate()
    result = run_experiment(cfg)
    for key, value in result.items():
        if key not in ("certificate", "policy"):
            print(f"{key}: {value}")
    return 0


def _cmd_validate(args) -> int:
    ExperimentConfig.from_file(args.config)
    print("config ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semibandit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="compute the anchored design for a feature file")
    p_design.add_argument("features_file")
    p_design.add_argument("--anchor", type=int, default=0)
    p_design.add_argument("--fw-tol", type=float, default=1e-3, dest="fw_tol")
    p_design.set_defaults(func=_cmd_design)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--mode", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--reps", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SemibanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
