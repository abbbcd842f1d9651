"""Phase elimination with anchored designs, plus one-shot pure exploration.

Each phase recomputes the anchored-difference design over the surviving
arms (anchor = smallest surviving index), samples it for a schedule-driven
number of rounds, solves the orthogonalized ridge system, and eliminates
arms whose estimated reward trails the leader by more than eps_l = 2^-l.
When one arm survives it is declared best and exploited to the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import estimator as est
from .design import DesignCertificate, DesignPolicy, FeatureSet, deo
from .environment import Environment, rewards_for
from .errors import ScheduleOverflow

_MAX_PHASE_LEN = 2**62


@dataclass
class SbeConfig:
    delta: float = 0.05
    horizon: int = 100_000
    c2: float = 1.0
    c3: float = 1.0
    schedule: str = "fixed"  # "fixed" | "adaptive"
    fw_tol: float = 1e-3
    k_in_log: str = "active"  # "active" | "original": which K enters the schedule logs

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.c2 <= 0 or self.c3 <= 0:
            raise ValueError("schedule constants must be positive")
        if self.schedule not in ("fixed", "adaptive"):
            raise ValueError("schedule must be 'fixed' or 'adaptive'")
        if self.k_in_log not in ("active", "original"):
            raise ValueError("k_in_log must be 'active' or 'original'")


@dataclass
class PhaseState:
    """One phase: surviving arms, design, schedule, and end-of-phase solve."""

    index: int
    active: tuple
    epsilon: float
    length: int
    policy: DesignPolicy
    certificate: DesignCertificate
    anchor: int
    estimator: est.EstimatorState
    taken: int = 0
    beta: float = math.nan
    theta_hat: np.ndarray | None = None
    max_est_error: float = math.nan
    truncated: bool = False


@dataclass
class RunRecord:
    """Per-step and per-phase log of a single run.

    ``kind`` distinguishes elimination runs ("sbe") from one-design
    pure-exploration runs ("pure"); metric computation keys off it.
    """

    seed: int
    horizon: int
    arm: np.ndarray
    reward: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    phase: np.ndarray
    phases: list = field(default_factory=list)
    declared_best: int | None = None
    declared_at: int | None = None
    kind: str = "sbe"

    @property
    def steps(self) -> int:
        return self.arm.shape[0]

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.steps else 0.0


def phase_length(ell: int, d_eff: int, k_active: int, cfg: SbeConfig) -> int:
    """Scheduled number of samples for phase ``ell``.

    Fixed schedule: 4 c2 ceil( d/eps^2 log(d K l(l+1) / (delta eps))
    + d^{3/2}/eps log(d K l(l+1) / delta) ) with eps = 2^-l.  The adaptive
    schedule takes the minimum of that and 4 c3 ceil( d^2/eps^2
    log(d l(l+1) / (delta eps)) ), which drops the K dependence.
    """
    if ell < 1:
        raise ValueError("phase index starts at 1")
    if k_active < 2:
        raise ValueError("schedule needs at least two active arms")
    d = d_eff
    eps = 2.0 ** (-ell)
    try:
        poly = d * k_active * ell * (ell + 1)
        inner = (d / eps**2) * math.log(poly / (cfg.delta * eps)) + (d**1.5 / eps) * math.log(poly / cfg.delta)
        n = 4.0 * cfg.c2 * math.ceil(inner)
        if cfg.schedule == "adaptive":
            alt_inner = (d * d / eps**2) * math.log(d * ell * (ell + 1) / (cfg.delta * eps))
            n = min(n, 4.0 * cfg.c3 * math.ceil(alt_inner))
        n = math.ceil(n)
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise ScheduleOverflow(f"phase length overflow at ell={ell}") from exc
    if n > _MAX_PHASE_LEN:
        raise ScheduleOverflow(f"phase length {n} exceeds the integer range")
    return max(1, int(n))


def pac_budget(d: int, k: int, epsilon: float, delta: float, c2: float = 4.0) -> int:
    """Pure-exploration budget for an (epsilon, delta)-PAC guarantee."""
    if epsilon <= 0 or not 0.0 < delta < 1.0:
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    inner = (d / epsilon**2) * math.log(d * k / (epsilon * delta)) + (d**1.5 / epsilon) * math.log(d * k / delta)
    return int(math.ceil(c2 * inner))


def eliminate(features: FeatureSet, active, theta_hat: np.ndarray, epsilon: float) -> list:
    """Arms whose estimated reward is within ``epsilon`` of the best estimate.

    Ties at exactly epsilon survive; the empirical argmax always survives,
    so the result is never empty.
    """
    active = list(active)
    values = features.features[active] @ theta_hat
    best = values.max()
    return [a for a, v in zip(active, values) if best - v <= epsilon]


def run_sbe(env: Environment, cfg: SbeConfig, run_seed: int = 0) -> RunRecord:
    """Execute one phase-elimination run to the horizon."""
    if env.K < 2:
        raise ValueError("elimination needs at least two arms")
    big_t = cfg.horizon
    x = env.features.features
    noise = env.noise_stream(run_seed)
    rng = env.action_rng(run_seed)
    opt_value = env.values[env.best_arm]

    arm_log = np.zeros(big_t, dtype=np.int64)
    reward_log = np.zeros(big_t)
    regret_log = np.zeros(big_t)
    phase_log = np.zeros(big_t, dtype=np.int64)

    active = list(range(env.K))
    phases: list[PhaseState] = []
    declared = None
    declared_at = None
    t = 0
    ell = 0
    while t < big_t:
        if len(active) == 1:
            declared = active[0]
            declared_at = t
            arm_log[t:] = declared
            reward_log[t:] = rewards_for(env, arm_log[t:], t + 1, noise)
            regret_log[t:] = opt_value - env.values[declared]
            phase_log[t:] = ell
            t = big_t
            break
        ell += 1
        epsilon = 2.0 ** (-ell)
        active_feats = FeatureSet(x[active])
        policy, cert = deo(active_feats, anchor=0, fw_tol=cfg.fw_tol)
        k_log = len(active) if cfg.k_in_log == "active" else env.K
        n_ell = phase_length(ell, cert.dim, k_log, cfg)
        n_take = min(n_ell, big_t - t)

        local = rng.choice(len(active), size=n_take, p=policy.probabilities)
        arms = np.asarray(active, dtype=np.int64)[local]
        rewards = rewards_for(env, arms, t + 1, noise)
        xbar = policy.probabilities @ active_feats.features
        centered = active_feats.features[local] - xbar

        state = est.EstimatorState.zeros(env.d)
        est.update_batch(state, centered, rewards)

        arm_log[t : t + n_take] = arms
        reward_log[t : t + n_take] = rewards
        regret_log[t : t + n_take] = opt_value - env.values[arms]
        phase_log[t : t + n_take] = ell
        t += n_take

        beta = math.log(n_ell * ell * (ell + 1) / cfg.delta)
        theta_hat = est.solve(state, beta)
        anchor_arm = active[0]
        errs = np.abs((x[active] - x[anchor_arm]) @ (theta_hat - env.theta_star))
        phase = PhaseState(
            index=ell,
            active=tuple(active),
            epsilon=epsilon,
            length=n_ell,
            policy=policy,
            certificate=cert,
            anchor=anchor_arm,
            estimator=state,
            taken=n_take,
            beta=beta,
            theta_hat=theta_hat,
            max_est_error=float(errs.max()),
            truncated=n_take < n_ell,
        )
        phases.append(phase)
        if phase.truncated:
            break  # horizon hit mid-phase: no elimination from a partial phase
        active = eliminate(env.features, active, theta_hat, epsilon)

    return RunRecord(
        seed=run_seed,
        horizon=big_t,
        arm=arm_log[:t],
        reward=reward_log[:t],
        inst_regret=regret_log[:t],
        cum_regret=np.cumsum(regret_log[:t]),
        phase=phase_log[:t],
        phases=phases,
        declared_best=declared,
        declared_at=declared_at,
    )


def run_pure_exploration(
    env: Environment,
    budget: int,
    delta: float,
    run_seed: int = 0,
    beta_override: float | None = None,
    fw_tol: float = 1e-3,
):
    """Sample one anchored design for ``budget`` rounds, then pick greedily.

    Returns ``(theta_hat, greedy_arm, RunRecord)``.  The estimate uses
    beta = log(budget / delta) unless overridden; the greedy arm maximizes
    x_i' theta_hat (equivalently (x_i - x_1)' theta_hat).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x = env.features.features
    noise = env.noise_stream(run_seed)
    rng = env.action_rng(run_seed)
    opt_value = env.values[env.best_arm]

    policy, cert = deo(env.features, anchor=0, fw_tol=fw_tol)
    arms = rng.choice(env.K, size=budget, p=policy.probabilities)
    rewards = rewards_for(env, arms, 1, noise)
    xbar = policy.probabilities @ x
    centered = x[arms] - xbar

    state = est.EstimatorState.zeros(env.d)
    est.update_batch(state, centered, rewards)
    beta = beta_override if beta_override is not None else est.regularizer(budget, delta)
    theta_hat = est.solve(state, beta)
    greedy_arm = int(np.argmax(x @ theta_hat))

    errs = np.abs((x - x[0]) @ (theta_hat - env.theta_star))
    phase = PhaseState(
        index=1,
        active=tuple(range(env.K)),
        epsilon=math.nan,
        length=budget,
        policy=policy,
        certificate=cert,
        anchor=0,
        estimator=state,
        taken=budget,
        beta=beta,
        theta_hat=theta_hat,
        max_est_error=float(errs.max()),
    )
    regret = opt_value - env.values[arms]
    record = RunRecord(
        seed=run_seed,
        horizon=budget,
        arm=arms.astype(np.int64),
        reward=rewards,
        inst_regret=regret,
        cum_regret=np.cumsum(regret),
        phase=np.ones(budget, dtype=np.int64),
        phases=[phase],
        kind="pure",
    )
    return theta_hat, greedy_arm, record


def bai_stopping_time(record: RunRecord) -> int | None:
    """Declaration time of the best-arm identification, if one happened."""
    return record.declared_at
