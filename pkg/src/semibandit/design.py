"""Experimental design over finite arm sets.

Two solvers live here: the classical G-optimal design (worst-case
inverse-second-moment norm over arms, optimal value sqrt(d)) and the
anchored-difference design for orthogonalized regression, which runs the
G-optimal solver on the differences ``x_i - x_anchor`` and then puts half
the mass on the anchor arm.  The certificate returned with the anchored
design witnesses the 2*sqrt(d) / 4*sqrt(d) guarantees on anchored and
centered norms.

All computations happen inside the span of the input vectors; ``d_eff``
(the span rank) replaces the ambient dimension in every bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DegenerateFeatures, DimError
from .linalg import weighted_inv_norm

SPAN_RTOL = 1e-10
WEIGHT_FLOOR = 1e-9


@dataclass(frozen=True)
class FeatureSet:
    """K arm feature vectors as rows of a (K, d) array."""

    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise DimError(f"features must be a (K, d) array, got shape {feats.shape}")
        if not np.isfinite(feats).all():
            raise DimError("features contain non-finite entries")
        object.__setattr__(self, "features", feats)
        norms = np.linalg.norm(feats, axis=1)
        if norms.size and norms.max() > 1.0 + 1e-12:
            warnings.warn(
                f"feature norms exceed 1 (max {norms.max():.6g}); bounds assume unit features",
                stacklevel=2,
            )

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def K(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_file(cls, path) -> "FeatureSet":
        """Load the plain-text matrix format: first line ``d K``, then K rows."""
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise DimError(f"{path}: first line must be 'd K'")
            d, k = int(header[0]), int(header[1])
            rows = np.loadtxt(fh, ndmin=2)
        if rows.shape != (k, d):
            raise DimError(f"{path}: expected {k} rows of {d} values, got {rows.shape}")
        return cls(rows)


@dataclass(frozen=True)
class DesignPolicy:
    """Probability vector over arms."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise DimError("probabilities must be a nonnegative vector summing to 1")
        object.__setattr__(self, "probabilities", p)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probabilities > 0)


@dataclass(frozen=True)
class PolicyMoments:
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class DesignCertificate:
    """Witness for the anchored-design guarantees.

    ``max_anchor_norm``  = max_i ||x_i - x_anchor|| in the inverse-covariance
    norm; ``max_centered_norm`` the same for ``x_i - xbar``.  ``dim`` is the
    effective dimension (rank of the anchored differences) that enters the
    2*sqrt(d) / 4*sqrt(d) bounds and downstream error envelopes.
    """

    max_anchor_norm: float
    max_centered_norm: float
    support_size: int
    dim: int


def policy_moments(features: FeatureSet, policy: DesignPolicy) -> PolicyMoments:
    """Feature mean and covariance of a sampling policy."""
    x = features.features
    p = policy.probabilities
    if p.shape[0] != features.K:
        raise DimError(f"policy has {p.shape[0]} entries for {features.K} arms")
    mean = p @ x
    centered = x - mean
    cov = (centered.T * p) @ centered
    cov = 0.5 * (cov + cov.T)
    return PolicyMoments(mean=mean, covariance=cov)


def covariance_pairwise(features: FeatureSet, policy: DesignPolicy) -> np.ndarray:
    """Policy covariance in its pairwise-difference form.

    Sum over i<j of p_i p_j (x_i - x_j)(x_i - x_j)^T; algebraically equal
    to ``policy_moments(...).covariance``.
    """
    x = features.features
    p = policy.probabilities
    if p.shape[0] != features.K:
        raise DimError(f"policy has {p.shape[0]} entries for {features.K} arms")
    d = features.d
    out = np.zeros((d, d))
    supp = np.flatnonzero(p > 0)
    for a, i in enumerate(supp):
        for j in supp[a + 1 :]:
            diff = x[i] - x[j]
            out += p[i] * p[j] * np.outer(diff, diff)
    return out


def _span_basis(x: np.ndarray):
    """Orthonormal basis of the row span of x and its rank."""
    if x.size == 0:
        return np.zeros((x.shape[1], 0)), 0
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((x.shape[1], 0)), 0
    rank = int(np.count_nonzero(s > SPAN_RTOL * s[0]))
    return vt[:rank].T, rank


def _leverages(x: np.ndarray, m_inv: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", x, m_inv, x)


def _pairwise_fw(x: np.ndarray, d: int, tol: float, max_iters: int):
    """Pairwise Frank-Wolfe on the log-det objective with exact line search.

    ``x`` is (K, d) and full column rank.  Starts uniform on a pivoted-QR
    rank-complete subset; each step moves weight from the lowest-leverage
    support atom to the highest-leverage arm, with the step size maximizing
    log det exactly (rank-two determinant update).  Stops once
    max_i ||x_i||^2_{M^{-1}} <= d (1 + tol), the Kiefer-Wolfowitz condition.

    Returns ``(p, converged, iterations)``.
    """
    _, _, piv = scipy.linalg.qr(x.T, pivoting=True, mode="economic")
    p = np.zeros(x.shape[0])
    p[piv[:d]] = 1.0 / d
    return _pairwise_fw_from(x, p, d, tol, max_iters)


def _caratheodory_reduce(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Shrink the support of ``p`` without changing its second moment.

    Repeatedly removes an atom by moving along a null direction of the
    affine system {sum p_i x_i x_i^T fixed, sum p_i = 1}; exact up to
    floating point, so design certificates are preserved.  Stops when the
    support atoms are affinely independent in outer-product space.
    """
    d = x.shape[1]
    iu = np.triu_indices(d)
    while True:
        supp = np.flatnonzero(p > 0)
        m = len(supp)
        if m <= 1:
            return p
        a = np.empty((len(iu[0]) + 1, m))
        for col, idx in enumerate(supp):
            outer = np.outer(x[idx], x[idx])
            a[:-1, col] = outer[iu]
        a[-1, :] = 1.0
        _, s, vt = np.linalg.svd(a)
        rank = int(np.count_nonzero(s > 1e-10 * s[0]))
        if rank >= m:
            return p
        c = vt[-1]
        pos = c > 1e-14
        if not pos.any():
            c = -c
            pos = c > 1e-14
            if not pos.any():
                return p
        tau = np.min(p[supp][pos] / c[pos])
        p = p.copy()
        p[supp] -= tau * c
        p[p < 1e-14] = 0.0
        total = p.sum()
        if total <= 0:
            return p
        p /= total


def _certified_max_leverage(x: np.ndarray, p: np.ndarray) -> float:
    m = (x.T * p) @ x
    return float(_leverages(x, np.linalg.inv(m)).max())


def g_optimal(features: FeatureSet, fw_tol: float = 1e-3, max_iters: int | None = None) -> DesignPolicy:
    """Solve the G-optimal design over the feature span.

    Returns a policy with max_i ||x_i||^2_{M(p)^{-1}} <= d_eff (1 + fw_tol),
    where d_eff is the rank of the feature span, with support at most
    d_eff (d_eff + 1) / 2.

    The default iteration cap is max(2000, 10 d_eff^2); raises
    ``ConvergenceError`` (carrying the best iterate) if it is hit.
    """
    if fw_tol <= 0:
        raise ValueError("fw_tol must be positive")
    x_full = features.features
    max_norm = float(np.linalg.norm(x_full, axis=1).max()) if x_full.size else 0.0
    if max_norm <= 0.0:
        raise DegenerateFeatures("all features are zero")
    # dyadic normalization: dividing by a power of two is exact, so scaling
    # all features by 2^k leaves every branch of the solver unchanged
    x_full = x_full / math.ldexp(1.0, math.frexp(max_norm)[1])
    basis, d_eff = _span_basis(x_full)
    if d_eff == 0:
        raise DegenerateFeatures("all features are zero")
    x = x_full if d_eff == x_full.shape[1] else x_full @ basis
    if max_iters is None:
        max_iters = max(2000, 10 * d_eff * d_eff)

    p, converged, _ = _pairwise_fw(x, d_eff, fw_tol, max_iters)
    p[p < WEIGHT_FLOOR] = 0.0
    p /= p.sum()
    p = _caratheodory_reduce(x, p)

    bound = d_eff * (d_eff + 1) // 2
    if int((p > 0).sum()) > bound:
        p = _greedy_support_drop(x, p, d_eff, fw_tol, bound)
    if not converged:
        raise ConvergenceError(
            f"G-optimal solver did not reach tolerance {fw_tol} in {max_iters} iterations",
            policy=DesignPolicy(p),
            certificate=_certified_max_leverage(x, p),
        )
    return DesignPolicy(p)


def _greedy_support_drop(x: np.ndarray, p: np.ndarray, d: int, tol: float, bound: int) -> np.ndarray:
    """Drop support atoms one at a time, re-polishing after each removal.

    Fallback for the rare case where Caratheodory reduction leaves one atom
    too many (affinely independent support of maximal size).  Candidates are
    tried lightest-first; a short pairwise-FW polish restricted to the
    remaining atoms restores the certificate before the drop is accepted.
    """
    while int((p > 0).sum()) > bound:
        supp = np.flatnonzero(p > 0)
        order = supp[np.argsort(p[supp])]
        accepted = None
        for j in order:
            trial = p.copy()
            trial[j] = 0.0
            trial /= trial.sum()
            sub = np.flatnonzero(trial > 0)
            if np.linalg.matrix_rank(x[sub]) < d:
                continue
            polished, ok, _ = _pairwise_fw_restricted(x, trial, d, tol, 500)
            if ok:
                accepted = polished
                break
        if accepted is None:
            raise ConvergenceError(
                f"could not reduce support to {bound} while keeping the certificate",
                policy=DesignPolicy(p),
                certificate=_certified_max_leverage(x, p),
            )
        p = _caratheodory_reduce(x, accepted)
    return p


def _pairwise_fw_restricted(x: np.ndarray, p0: np.ndarray, d: int, tol: float, max_iters: int):
    """Pairwise FW polish that only ever adds arms already in p0's support."""
    sub = np.flatnonzero(p0 > 0)
    p_sub, ok, it = _pairwise_fw_from(x[sub], p0[sub].copy(), d, tol, max_iters)
    p = np.zeros_like(p0)
    p[sub] = p_sub
    return p, ok, it


def _pairwise_fw_from(x: np.ndarray, p: np.ndarray, d: int, tol: float, max_iters: int):
    """Pairwise FW iteration from a given starting point."""
    m = (x.T * p) @ x
    for it in range(max_iters):
        m_inv = np.linalg.inv(m)
        g = _leverages(x, m_inv)
        if g.max() <= d * (1.0 + tol):
            return p, True, it
        i = int(np.argmax(g))
        supp = np.flatnonzero(p > 0)
        j = supp[int(np.argmin(g[supp]))]
        a, b = g[i], g[j]
        cross = float(x[i] @ m_inv @ x[j])
        denom = 2.0 * (a * b - cross * cross)
        gamma = (a - b) / denom if denom > 0 else np.inf
        gamma = min(max(gamma, 0.0), p[j])
        if gamma <= 0.0:
            gamma_fw = (a - d) / (d * (a - 1.0))
            p *= 1.0 - gamma_fw
            p[i] += gamma_fw
            m = (x.T * p) @ x
            continue
        p[i] += gamma
        p[j] -= gamma
        if p[j] < 1e-15:
            p[j] = 0.0
        m += gamma * (np.outer(x[i], x[i]) - np.outer(x[j], x[j]))
    return p, False, max_iters


def deo(features: FeatureSet, anchor: int = 0, fw_tol: float = 1e-3, max_iters: int | None = None):
    """Anchored-difference design for orthogonalized regression.

    Computes the G-optimal design over {x_i - x_anchor : i != anchor},
    halves it, and assigns probability 1/2 to the anchor arm.  Returns
    ``(DesignPolicy, DesignCertificate)``; the certificate norms satisfy
    max_anchor_norm <= 2 sqrt(d_eff) and max_centered_norm <= 4 sqrt(d_eff)
    up to the solver tolerance.
    """
    x = features.features
    k = features.K
    if k < 2:
        raise DegenerateFeatures("anchored design needs at least two arms")
    if not 0 <= anchor < k:
        raise DimError(f"anchor {anchor} out of range for {k} arms")
    others = [i for i in range(k) if i != anchor]
    diffs = x[others] - x[anchor]
    if not np.any(np.linalg.norm(diffs, axis=1) > SPAN_RTOL):
        raise DegenerateFeatures("all arms identical: anchored differences span nothing")
    with warnings.catch_warnings():
        # differences may exceed unit norm; the unit-ball warning is for raw features
        warnings.simplefilter("ignore")
        diff_set = FeatureSet(diffs)
    p_tilde = g_optimal(diff_set, fw_tol=fw_tol, max_iters=max_iters)
    probs = np.zeros(k)
    probs[others] = p_tilde.probabilities / 2.0
    probs[anchor] = 0.5
    policy = DesignPolicy(probs)

    moments = policy_moments(features, policy)
    cov = moments.covariance
    anchor_norms = [weighted_inv_norm(cov, x[i] - x[anchor]).value for i in range(k)]
    centered_norms = [weighted_inv_norm(cov, x[i] - moments.mean).value for i in range(k)]
    _, d_eff = _span_basis(diffs)
    cert = DesignCertificate(
        max_anchor_norm=float(max(anchor_norms)),
        max_centered_norm=float(max(centered_norms)),
        support_size=int(policy.support.size),
        dim=d_eff,
    )
    return policy, cert
