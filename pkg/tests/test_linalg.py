import math

import numpy as np
import pytest

from semibandit.errors import DimError, InvalidMatrix, SingularMatrix
from semibandit.linalg import eig_sym, psd_between, weighted_inv_norm


def random_psd(rng, d, rank=None, lo=0.5, hi=2.0):
    rank = d if rank is None else rank
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.zeros(d)
    w[:rank] = rng.uniform(lo, hi, rank)
    return (q * w) @ q.T, q, w


class TestEigSym:
    def test_identity(self):
        w, _ = eig_sym(np.eye(3))
        assert np.allclose(w, [1.0, 1.0, 1.0])

    def test_diagonal(self):
        w, q = eig_sym(np.diag([4.0, 1.0]))
        assert np.allclose(w, [4.0, 1.0])
        assert np.allclose(np.abs(q), np.eye(2))

    def test_two_by_two(self):
        # characteristic polynomial of [[2,1],[1,2]]: (2-l)^2 - 1 = 0
        w, _ = eig_sym(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(w, [3.0, 1.0])

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, _, _ = random_psd(rng, 6)
            w, q = eig_sym(a)
            recon = (q * w) @ q.T
            assert np.linalg.norm(recon - a) <= 1e-9 * max(np.linalg.norm(a), 1.0)
            assert np.all(np.diff(w) <= 1e-12)
            assert np.allclose(q.T @ q, np.eye(6), atol=1e-10)

    def test_non_finite_rejected(self):
        bad = np.array([[1.0, np.nan], [np.nan, 1.0]])
        with pytest.raises(InvalidMatrix):
            eig_sym(bad)

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidMatrix):
            eig_sym(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestWeightedInvNorm:
    def test_identity_weighting(self):
        res = weighted_inv_norm(np.eye(2), np.array([3.0, 4.0]))
        assert res.in_range
        assert np.isclose(res.value, 5.0)

    def test_orthogonal_to_range(self):
        a = np.outer([1.0, 0.0], [1.0, 0.0])
        res = weighted_inv_norm(a, np.array([0.0, 1.0]))
        assert not res.in_range
        assert math.isinf(res.value)

    def test_hand_inverse(self):
        # inverse of [[3/16,-1/16],[-1/16,3/16]] is [[6,2],[2,6]]
        a = np.array([[3 / 16, -1 / 16], [-1 / 16, 3 / 16]])
        res = weighted_inv_norm(a, np.array([1.0, 0.0]))
        assert np.isclose(res.value, math.sqrt(6.0))

    def test_zero_vector_in_range_of_zero_matrix(self):
        res = weighted_inv_norm(np.zeros((3, 3)), np.zeros(3))
        assert res.in_range and res.value == 0.0
        res = weighted_inv_norm(np.zeros((3, 3)), np.array([1.0, 0.0, 0.0]))
        assert not res.in_range

    def test_matches_direct_solve_on_pd(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            d = int(rng.integers(2, 8))
            a, _, _ = random_psd(rng, d)
            x = rng.standard_normal(d)
            expected = math.sqrt(x @ np.linalg.solve(a, x))
            res = weighted_inv_norm(a, x)
            assert res.in_range
            assert abs(res.value - expected) <= 1e-8 * expected

    def test_limit_consistency_rank_deficient(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            d = int(rng.integers(3, 8))
            r = int(rng.integers(1, d))
            a, q, w = random_psd(rng, d, rank=r)
            coeff = rng.standard_normal(r)
            x = q[:, :r] @ coeff  # inside range(a)
            res = weighted_inv_norm(a, x)
            assert res.in_range
            lam = 1e-8
            shifted = math.sqrt(x @ np.linalg.solve(a + lam * np.eye(d), x))
            assert abs(shifted - res.value) <= 1e-4 * res.value

    def test_dim_mismatch(self):
        with pytest.raises(DimError):
            weighted_inv_norm(np.eye(2), np.zeros(3))


class TestPsdBetween:
    def test_equal(self):
        assert psd_between(np.eye(3), np.eye(3), 2.0)

    def test_violation(self):
        assert not psd_between(np.eye(2), 3.0 * np.eye(2), 2.0)

    def test_inside_band(self):
        assert psd_between(np.eye(2), np.diag([0.6, 1.5]), 2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            d = int(rng.integers(2, 6))
            a, _, _ = random_psd(rng, d)
            b, _, _ = random_psd(rng, d)
            c = float(rng.uniform(1.5, 5.0))
            assert psd_between(a, b, c) == psd_between(b, a, c)

    def test_singular_rejected(self):
        a = np.diag([1.0, 0.0])
        with pytest.raises(SingularMatrix):
            psd_between(a, np.eye(2), 2.0)
