"""Orthogonalized ridge regression on centered features.

The estimator accumulates the Gram matrix and response moment of centered
features (arm feature minus the sampling policy's feature mean) and solves
a ridge system on demand.  Centering uses the known sampling policy, never
a data estimate; the regularizer follows the log(t/delta) rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design import DesignCertificate, DesignPolicy, FeatureSet
from .errors import DimError, InvalidRegularizer, InvalidSample


@dataclass
class EstimatorState:
    """Accumulated centered statistics: gram = sum x~ x~', moment = sum x~ r."""

    gram: np.ndarray
    moment: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "EstimatorState":
        return cls(gram=np.zeros((dim, dim)), moment=np.zeros(dim), count=0)

    @property
    def dim(self) -> int:
        return self.moment.shape[0]

    def reset(self) -> None:
        self.gram[:] = 0.0
        self.moment[:] = 0.0
        self.count = 0


@dataclass(frozen=True)
class RidgeConfig:
    """Regularizer selection: beta_t = log(t / delta) unless overridden."""

    delta: float = 0.1
    beta_override: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.beta_override is not None and self.beta_override <= 0:
            raise ValueError("beta_override must be positive")

    def beta(self, t: int) -> float:
        if self.beta_override is not None:
            return self.beta_override
        return regularizer(t, self.delta)


def center(features: FeatureSet, policy: DesignPolicy, arm: int) -> np.ndarray:
    """Centered feature of ``arm`` under the sampling policy: x_arm - sum p_i x_i."""
    x = features.features
    p = policy.probabilities
    if p.shape[0] != features.K:
        raise DimError(f"policy has {p.shape[0]} entries for {features.K} arms")
    return x[arm] - p @ x


def update(state: EstimatorState, centered: np.ndarray, reward: float) -> EstimatorState:
    """Add one (centered feature, reward) sample in place; returns ``state``."""
    centered = np.asarray(centered, dtype=float)
    if centered.shape != (state.dim,):
        raise DimError(f"centered feature shape {centered.shape} vs dim {state.dim}")
    if not math.isfinite(reward) or not np.isfinite(centered).all():
        raise InvalidSample("non-finite reward or feature")
    state.gram += np.outer(centered, centered)
    state.moment += centered * reward
    state.count += 1
    return state


def update_batch(state: EstimatorState, centered: np.ndarray, rewards: np.ndarray) -> EstimatorState:
    """Add many samples at once (rows of ``centered`` paired with ``rewards``).

    Equivalent to repeated ``update`` up to floating-point summation order.
    """
    centered = np.asarray(centered, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    if centered.ndim != 2 or centered.shape[1] != state.dim or centered.shape[0] != rewards.shape[0]:
        raise DimError("centered rows and rewards must align with the state dimension")
    if not (np.isfinite(rewards).all() and np.isfinite(centered).all()):
        raise InvalidSample("non-finite reward or feature")
    state.gram += centered.T @ centered
    state.moment += centered.T @ rewards
    state.count += centered.shape[0]
    return state


def regularizer(t: int, delta: float) -> float:
    """Ridge regularizer beta_t = ln(t / delta)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return math.log(t / delta)


def solve(state: EstimatorState, beta: float) -> np.ndarray:
    """Ridge solution (gram + beta I)^{-1} moment via a Cholesky solve."""
    if beta <= 0:
        raise InvalidRegularizer(f"beta must be positive, got {beta}")
    a = state.gram + beta * np.eye(state.dim)
    cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    return scipy.linalg.cho_solve(cho, state.moment, check_finite=False)


def error_bound_diagnostic(cert: DesignCertificate, t: int, delta: float, c1: float = 10.0) -> float:
    """High-probability envelope on max_i |(x_i - x_anchor)'(theta_hat - theta*)|.

    C1 ( sqrt(L log(t/delta)) / sqrt(t) + sqrt(L) M log(d/delta) / t ) with
    L = max_anchor_norm^2 and M = max_centered_norm^2.  The default C1 = 10
    matches the empirical sqrt(t) e_t <= 10 sqrt(d log K) envelope.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    big_l = cert.max_anchor_norm**2
    big_m = cert.max_centered_norm**2
    if big_l == 0.0:
        return 0.0
    lead = math.sqrt(big_l * math.log(t / delta)) / math.sqrt(t)
    tail = math.sqrt(big_l) * big_m * math.log(max(cert.dim, 1) / delta) / t
    return c1 * (lead + tail)
