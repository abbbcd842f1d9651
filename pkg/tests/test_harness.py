import json
import math

import numpy as np
import pytest

from semibandit.cli import main
from semibandit.design import DesignCertificate, DesignPolicy, deo
from semibandit.environment import make_gap_instance
from semibandit.errors import ConfigError
from semibandit.estimator import EstimatorState
from semibandit.harness import (
    SUMMARY_COLUMNS,
    TRAJECTORY_COLUMNS,
    ExperimentConfig,
    build_environment,
    compute_metrics,
    fmt,
    run_experiment,
)
from semibandit.sbe import PhaseState, RunRecord, SbeConfig, run_pure_exploration, run_sbe


def base_config(tmp_path, **overrides):
    raw = {
        "mode": "regret",
        "environment": {
            "kind": "gap_instance",
            "d": 3,
            "K": 5,
            "gap": 0.5,
            "seed": 11,
            "shift": {"kind": "sine"},
            "noise": {"kind": "gaussian", "scale": 1.0},
        },
        "algorithm": {"delta": 0.05, "horizon": 2_000, "c2": 1.0},
        "replications": 2,
        "base_seed": 100,
        "output": str(tmp_path / "out"),
        "workers": 1,
    }
    raw.update(overrides)
    return raw


def manual_record(env, arms, phases=(), kind="sbe", declared=None, declared_at=None):
    arms = np.asarray(arms, dtype=np.int64)
    n = arms.shape[0]
    inst = env.values[env.best_arm] - env.values[arms]
    return RunRecord(
        seed=0,
        horizon=n,
        arm=arms,
        reward=env.values[arms].astype(float),
        inst_regret=inst,
        cum_regret=np.cumsum(inst),
        phase=np.ones(n, dtype=np.int64),
        phases=list(phases),
        declared_best=declared,
        declared_at=declared_at,
        kind=kind,
    )


class TestComputeMetrics:
    def test_always_best_zero_regret(self):
        env = make_gap_instance(3, 5, 0.5, seed=1)
        record = manual_record(env, [env.best_arm] * 10)
        table = compute_metrics(record, env)
        assert np.all(table.inst_regret == 0.0)
        assert np.all(table.cum_regret == 0.0)

    def test_alternating_regret(self):
        env = make_gap_instance(3, 5, 0.5, seed=1)
        runner_up = int(np.argsort(env.values)[-2])
        arms = [env.best_arm, runner_up] * 5
        table = compute_metrics(manual_record(env, arms), env)
        assert np.isclose(table.cum_regret[-1], 2.5)

    def test_perfect_estimate_zero_error(self):
        env = make_gap_instance(3, 5, 0.5, seed=2)
        policy, cert = deo(env.features)
        phase = PhaseState(
            index=1,
            active=tuple(range(env.K)),
            epsilon=0.5,
            length=4,
            policy=policy,
            certificate=cert,
            anchor=0,
            estimator=EstimatorState.zeros(env.d),
            taken=4,
            theta_hat=env.theta_star.copy(),
        )
        record = manual_record(env, [0, 1, 2, 3, 0, 1, 2, 3], phases=[phase])
        table = compute_metrics(record, env)
        assert np.all(np.isnan(table.e_t[:4]))  # before the first snapshot
        assert np.all(table.e_t[4:] == 0.0)

    def test_sqrt_column_identity(self):
        env = make_gap_instance(3, 6, 0.4, seed=3)
        record = run_sbe(env, SbeConfig(delta=0.1, horizon=3_000), run_seed=0)
        table = compute_metrics(record, env)
        mask = ~np.isnan(table.e_t)
        lhs = table.sqrt_t_e_t[mask]
        rhs = np.sqrt(table.t[mask]) * table.e_t[mask]
        assert np.abs(lhs - rhs).max() <= 1e-12

    def test_pure_exploration_per_step_error(self):
        env = make_gap_instance(3, 5, 0.4, seed=4)
        _, _, record = run_pure_exploration(env, 200, 0.1, run_seed=0)
        table = compute_metrics(record, env, delta=0.1)
        assert not np.isnan(table.e_t).any()
        # spot-check one step against a direct reconstruction
        t_check = 150
        x = env.features.features
        xbar = record.phases[0].policy.probabilities @ x
        centered = x[record.arm[:t_check]] - xbar
        gram = centered.T @ centered
        moment = centered.T @ record.reward[:t_check]
        theta_hat = np.linalg.solve(gram + math.log(t_check / 0.1) * np.eye(env.d), moment)
        expected = np.abs((x - x[0]) @ (theta_hat - env.theta_star)).max()
        assert np.isclose(table.e_t[t_check - 1], expected, rtol=1e-8)

    def test_regret_monotone_and_total(self):
        env = make_gap_instance(3, 6, 0.4, seed=5)
        record = run_sbe(env, SbeConfig(delta=0.1, horizon=4_000), run_seed=1)
        table = compute_metrics(record, env)
        assert np.all(np.diff(table.cum_regret) >= -1e-12)
        assert abs(table.cum_regret[-1] - table.inst_regret.sum()) <= 1e-9


class TestConfig:
    def test_valid(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config(tmp_path))
        assert cfg.mode == "regret"

    def test_unknown_field(self, tmp_path):
        with pytest.raises(ConfigError, match="bogus"):
            ExperimentConfig.from_dict(base_config(tmp_path, bogus=1))

    def test_bad_mode(self, tmp_path):
        with pytest.raises(ConfigError, match="mode"):
            ExperimentConfig.from_dict(base_config(tmp_path, mode="explore"))

    def test_missing_horizon(self, tmp_path):
        with pytest.raises(ConfigError, match="horizon"):
            ExperimentConfig.from_dict(base_config(tmp_path, algorithm={"delta": 0.1}))

    def test_pac_needs_epsilon(self, tmp_path):
        raw = base_config(tmp_path, mode="pac", algorithm={"delta": 0.1})
        with pytest.raises(ConfigError, match="epsilon"):
            ExperimentConfig.from_dict(raw)

    def test_bad_replications(self, tmp_path):
        with pytest.raises(ConfigError, match="replications"):
            ExperimentConfig.from_dict(base_config(tmp_path, replications=0))

    def test_bad_environment_kind(self, tmp_path):
        raw = base_config(tmp_path)
        raw["environment"] = {"kind": "mystery"}
        with pytest.raises(ConfigError, match="environment.kind"):
            ExperimentConfig.from_dict(raw)

    def test_features_environment(self):
        env = build_environment(
            {"kind": "features", "features": [[1.0, 0.0], [0.0, 0.5]], "theta": [0.8, 0.1]}
        )
        assert env.K == 2 and env.best_arm == 0

    def test_mab_environment(self):
        env = build_environment({"kind": "mab", "mu": [0.2, 0.7]})
        assert env.best_arm == 1


class TestRunExperiment:
    def test_design_cert_golden(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            {
                "mode": "design-cert",
                "environment": {
                    "kind": "features",
                    "features": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                    "theta": [0.6, 0.3],
                },
                "output": str(tmp_path / "gold"),
            }
        )
        result = run_experiment(cfg)
        cert = result["certificate"]
        assert cert.max_anchor_norm <= 2 * math.sqrt(2)
        golden = (
            "max_anchor_norm,max_centered_norm,support_size,dim\n"
            "2.4494897427831779,1.732050807568877,3,2\n"
        )
        assert (tmp_path / "gold" / "certificate.csv").read_text() == golden
        assert (tmp_path / "gold" / "policy.csv").read_text() == (
            "arm_index,probability\n0,0.5\n1,0.25\n2,0.25\n"
        )

    def test_determinism(self, tmp_path):
        raw1 = base_config(tmp_path, output=str(tmp_path / "a"))
        raw2 = base_config(tmp_path, output=str(tmp_path / "b"))
        run_experiment(ExperimentConfig.from_dict(raw1))
        run_experiment(ExperimentConfig.from_dict(raw2))
        for name in ("trajectory.csv", "summary.csv", "trajectory_mean.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_worker_count_independence(self, tmp_path):
        raw1 = base_config(tmp_path, output=str(tmp_path / "w1"), workers=1)
        raw2 = base_config(tmp_path, output=str(tmp_path / "w2"), workers=2)
        run_experiment(ExperimentConfig.from_dict(raw1))
        run_experiment(ExperimentConfig.from_dict(raw2))
        for name in ("trajectory.csv", "summary.csv"):
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()

    def test_schema(self, tmp_path):
        raw = base_config(tmp_path, output=str(tmp_path / "s"), replications=1)
        raw["algorithm"]["horizon"] = 300
        run_experiment(ExperimentConfig.from_dict(raw))
        header = (tmp_path / "s" / "trajectory.csv").read_text().splitlines()[0]
        assert header == ",".join(TRAJECTORY_COLUMNS)
        lines = (tmp_path / "s" / "trajectory.csv").read_text().splitlines()
        assert len(lines) == 1 + 300
        header = (tmp_path / "s" / "summary.csv").read_text().splitlines()[0]
        assert header == ",".join(SUMMARY_COLUMNS)
        manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
        assert manifest["seeds"] == [100]
        assert manifest["mode"] == "regret"

    def test_pac_mode_summary(self, tmp_path):
        raw = base_config(
            tmp_path,
            mode="pac",
            output=str(tmp_path / "pac"),
            algorithm={"epsilon": 0.25, "delta": 0.1, "c2": 1.0},
            replications=2,
        )
        result = run_experiment(ExperimentConfig.from_dict(raw))
        assert result["successes"] >= 1
        lines = (tmp_path / "pac" / "summary.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_seventeen_digit_roundtrip(self):
        values = [math.pi, 1 / 3, 1e-17, 123456.789012345678]
        for v in values:
            assert float(fmt(v)) == v


class TestCli:
    def test_validate_ok(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base_config(tmp_path)))
        assert main(["validate", "--config", str(path)]) == 0

    def test_validate_bad(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base_config(tmp_path, mode="nope")))
        assert main(["validate", "--config", str(path)]) == 2

    def test_missing_config(self):
        assert main(["validate", "--config", "/no/such/file.json"]) == 2

    def test_run_and_design(self, tmp_path, capsys):
        feats = tmp_path / "feats.txt"
        feats.write_text("2 3\n0 0\n1 0\n0 1\n")
        assert main(["design", str(feats)]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "arm_index,probability"
        assert "max_anchor_norm" in out

        path = tmp_path / "cfg.json"
        cfgdict = base_config(tmp_path, output=str(tmp_path / "cli_out"), replications=1)
        cfgdict["algorithm"]["horizon"] = 300
        path.write_text(json.dumps(cfgdict))
        assert main(["run", "--config", str(path)]) == 0
        assert (tmp_path / "cli_out" / "trajectory.csv").exists()

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        path = tmp_path / "cfg.json"
        cfgdict = base_config(tmp_path, output=str(blocker / "sub"), replications=1)
        cfgdict["algorithm"]["horizon"] = 100
        path.write_text(json.dumps(cfgdict))
        assert main(["run", "--config", str(path)]) == 3
