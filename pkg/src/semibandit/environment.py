"""Semiparametric reward simulation: r_t = x_a' theta* + nu_t + eta_t.

The shift nu_t depends only on the round index (never on the chosen arm),
and the noise stream is keyed by (seed, t) so that two algorithms facing
the same environment and seed see identical disturbances regardless of how
many other random draws they consume.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .design import FeatureSet
from .errors import DimError, GenerationError, InvalidArm

SHIFT_KINDS = ("none", "sine", "log_alternating", "log_alternating_min", "constant", "custom")
NOISE_KINDS = ("gaussian", "bounded_uniform", "none")

_NOISE_CHUNK = 4096


@dataclass(frozen=True)
class ShiftSpec:
    """Round-indexed additive reward shift.

    Kinds: ``none``; ``sine`` = 1 + sin(2t); ``log_alternating`` =
    max(ln(t+1)/5, 2) * (-1)^(t mod 3), exactly as printed in the source
    experiments (the max keeps it at magnitude 2 until t ~ e^10, violating
    the |nu| <= 1 assumption -- the audit flags this); ``log_alternating_min``
    swaps max for min; ``constant``; ``custom`` with an explicit table for
    t = 1..len(table).
    """

    kind: str = "none"
    constant: float = 0.0
    table: np.ndarray | None = None
    clip_to_unit: bool = False

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.kind == "custom":
            if self.table is None:
                raise ValueError("custom shift needs a table")
            object.__setattr__(self, "table", np.asarray(self.table, dtype=float))


def shift_values(spec: ShiftSpec, ts: np.ndarray) -> np.ndarray:
    """Shift values for an array of round indices (t >= 1)."""
    ts = np.asarray(ts)
    if ts.size and ts.min() < 1:
        raise ValueError("round indices start at 1")
    tf = ts.astype(float)
    if spec.kind == "none":
        out = np.zeros_like(tf)
    elif spec.kind == "sine":
        out = 1.0 + np.sin(2.0 * tf)
    elif spec.kind == "log_alternating":
        out = np.maximum(np.log(tf + 1.0) / 5.0, 2.0) * (-1.0) ** (ts % 3)
    elif spec.kind == "log_alternating_min":
        out = np.minimum(np.log(tf + 1.0) / 5.0, 2.0) * (-1.0) ** (ts % 3)
    elif spec.kind == "constant":
        out = np.full_like(tf, spec.constant)
    else:
        if ts.size and ts.max() > spec.table.shape[0]:
            raise ValueError("custom shift table shorter than requested horizon")
        out = spec.table[ts - 1]
    if spec.clip_to_unit:
        out = np.clip(out, -1.0, 1.0)
    return out


def shift_value(spec: ShiftSpec, t: int) -> float:
    """Shift value at a single round."""
    return float(shift_values(spec, np.array([t]))[0])


@dataclass(frozen=True)
class NoiseSpec:
    """Reward noise: gaussian(sigma), uniform on [-scale, scale], or none."""

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be nonnegative")

    @property
    def variance_proxy(self) -> float:
        if self.kind == "none":
            return 0.0
        return self.scale


class NoiseStream:
    """Counter-based noise draws keyed by (seed, t).

    Values are generated in fixed-size chunks, each chunk from its own
    deterministically derived generator, so value(t) is independent of how
    the stream is traversed.
    """

    def __init__(self, spec: NoiseSpec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._chunks: dict[int, np.ndarray] = {}

    def _chunk(self, index: int) -> np.ndarray:
        cached = self._chunks.get(index)
        if cached is not None:
            return cached
        if self.spec.kind == "none":
            block = np.zeros(_NOISE_CHUNK)
        else:
            gen = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy=(self.seed & (2**64 - 1), 0x6E6F6973, index)))
            )
            if self.spec.kind == "gaussian":
                block = gen.standard_normal(_NOISE_CHUNK) * self.spec.scale
            else:
                block = gen.uniform(-self.spec.scale, self.spec.scale, _NOISE_CHUNK)
        self._chunks[index] = block
        return block

    def value(self, t: int) -> float:
        if t < 1:
            raise ValueError("round indices start at 1")
        return float(self._chunk(t // _NOISE_CHUNK)[t % _NOISE_CHUNK])

    def values(self, t0: int, n: int) -> np.ndarray:
        """Noise for rounds t0, t0+1, ..., t0+n-1."""
        if t0 < 1 or n < 0:
            raise ValueError("invalid round range")
        out = np.empty(n)
        pos = 0
        t = t0
        while pos < n:
            ci, off = divmod(t, _NOISE_CHUNK)
            take = min(_NOISE_CHUNK - off, n - pos)
            out[pos : pos + take] = self._chunk(ci)[off : off + take]
            pos += take
            t += take
        return out


@dataclass
class Environment:
    """Fixed feature set, hidden parameter, shift and noise specification."""

    features: FeatureSet
    theta_star: np.ndarray
    shift: ShiftSpec = field(default_factory=ShiftSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rng_seed: int = 0
    strict_ties: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        if theta.shape != (self.features.d,):
            raise DimError(f"theta shape {theta.shape} vs feature dim {self.features.d}")
        self.theta_star = theta
        if np.linalg.norm(theta) > 1.0 + 1e-12:
            warnings.warn(
                f"||theta*|| = {np.linalg.norm(theta):.6g} exceeds 1; bounds assume a unit ball",
                stacklevel=2,
            )
        self.values = self.features.features @ theta
        self.best_arm = int(np.argmax(self.values))
        others = np.delete(self.values, self.best_arm)
        self.gap = float(self.values[self.best_arm] - others.max()) if others.size else math.inf
        if others.size and self.gap == 0.0:
            if self.strict_ties:
                raise ValueError("best arm is not unique")
            warnings.warn("best arm is not unique; gap-dependent results are undefined", stacklevel=2)

    @property
    def K(self) -> int:
        return self.features.K

    @property
    def d(self) -> int:
        return self.features.d

    def noise_stream(self, run_seed: int | None = None) -> NoiseStream:
        """Noise stream for one run; distinct run seeds give independent streams."""
        base = self.rng_seed if run_seed is None else (self.rng_seed * 0x9E3779B9 + run_seed) & (2**63 - 1)
        return NoiseStream(self.noise, base)

    def action_rng(self, run_seed: int | None = None) -> np.random.Generator:
        """Arm-sampling RNG, independent of the noise stream."""
        entropy = (self.rng_seed & (2**64 - 1), 0x616374, 0 if run_seed is None else run_seed & (2**64 - 1))
        return np.random.default_rng(np.random.SeedSequence(entropy=entropy))


def step(env: Environment, arm: int, t: int, noise_stream: NoiseStream) -> float:
    """One reward draw: x_arm' theta* + nu_t + eta_t.

    The shift and noise depend only on t (and the stream seed), never on
    the arm, so changing the arm changes the reward only through the linear
    term.
    """
    if not 0 <= arm < env.K:
        raise InvalidArm(f"arm {arm} out of range for {env.K} arms")
    return float(env.values[arm] + shift_value(env.shift, t) + noise_stream.value(t))


def rewards_for(env: Environment, arms: np.ndarray, t0: int, noise_stream: NoiseStream) -> np.ndarray:
    """Vectorized rewards for consecutive rounds t0..t0+len(arms)-1."""
    arms = np.asarray(arms)
    if arms.size and (arms.min() < 0 or arms.max() >= env.K):
        raise InvalidArm("arm index out of range")
    ts = np.arange(t0, t0 + arms.shape[0])
    return env.values[arms] + shift_values(env.shift, ts) + noise_stream.values(t0, arms.shape[0])


def assumption_audit(env: Environment, horizon: int = 0) -> list[str]:
    """Report violations of the unit-norm boundedness assumptions.

    Checks ||theta*|| <= 1, ||x_i|| <= 1, and (over the given horizon)
    |nu_t| <= 1.  Violations are reported, not raised; runs proceed.
    """
    findings = []
    tn = float(np.linalg.norm(env.theta_star))
    if tn > 1.0 + 1e-12:
        findings.append(f"||theta*|| = {tn:.6g} > 1")
    norms = np.linalg.norm(env.features.features, axis=1)
    bad = np.flatnonzero(norms > 1.0 + 1e-12)
    if bad.size:
        findings.append(f"{bad.size} feature(s) with norm > 1 (max {norms.max():.6g})")
    if horizon > 0:
        nu = shift_values(env.shift, np.arange(1, horizon + 1))
        if np.abs(nu).max() > 1.0 + 1e-12:
            findings.append(f"shift magnitude reaches {np.abs(nu).max():.6g} > 1 within t <= {horizon}")
    return findings


def make_gap_instance(d: int, K: int, gap: float, seed: int) -> Environment:
    """Random environment whose best-vs-runner-up gap equals ``gap`` exactly.

    Features are drawn in a radius-0.8 ball and theta* on the unit sphere;
    the best arm is then moved along theta* so the realized gap matches.
    Draws are rejected until the corrected feature stays inside the unit
    ball (at most 10^4 attempts).
    """
    if not 0.0 < gap < 2.0:
        raise ValueError("gap must lie in (0, 2)")
    if K < 2:
        raise ValueError("need at least two arms")
    rng = np.random.default_rng(seed)
    for _ in range(10_000):
        x = rng.standard_normal((K, d))
        x *= (0.8 * rng.uniform(0.2, 1.0, K) ** (1.0 / d) / np.linalg.norm(x, axis=1))[:, None]
        theta = rng.standard_normal(d)
        theta /= np.linalg.norm(theta)
        vals = x @ theta
        best = int(np.argmax(vals))
        runner_up = np.max(np.delete(vals, best))
        x[best] = x[best] + (gap - (vals[best] - runner_up)) * theta
        if np.linalg.norm(x[best]) > 1.0:
            continue
        env = Environment(
            features=FeatureSet(x),
            theta_star=theta,
            rng_seed=seed,
            strict_ties=True,
            info={"generator": "gap_instance", "requested_gap": gap, "seed": seed},
        )
        if abs(env.gap - gap) <= 1e-9:
            return env
    raise GenerationError(f"could not realize gap {gap} with d={d}, K={K} in 10^4 attempts")


def make_mab_embedding(mu, seed: int = 0) -> Environment:
    """Embed a K-armed bandit with means ``mu`` as standard-basis features.

    theta* = mu, rescaled onto the unit ball when needed; the applied scale
    is recorded in ``info['scale']`` so arm means reproduce mu up to that
    factor.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.shape[0] < 2:
        raise ValueError("mu must be a vector of at least two means")
    top = np.sort(mu)[-2:]
    if top[0] == top[1]:
        raise ValueError("mab embedding requires a unique best arm")
    norm = float(np.linalg.norm(mu))
    scale = 1.0 if norm <= 1.0 else 1.0 / norm
    k = mu.shape[0]
    return Environment(
        features=FeatureSet(np.eye(k)),
        theta_star=mu * scale,
        rng_seed=seed,
        strict_ties=True,
        info={"generator": "mab_embedding", "scale": scale, "mu": mu.tolist()},
    )
