import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from icg.model import Icg, dense_c
from icg.norms import (
    NormWeights,
    cut_metric_pair,
    cut_norm_exact,
    cut_norm_heuristic,
    cut_norm_signal,
    frob_matrix,
    frob_pair,
    frob_signal,
    residual_operator,
    subset_sum,
)

from conftest import random_symmetric


def all_subsets(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(float)


def double_enumeration(b):
    """max over all (U, V) pairs of |sum b_UV|, by brute force over 4^N pairs."""
    bits = all_subsets(b.shape[0])
    return np.abs(bits @ b @ bits.T).max()


def signal_enumeration(z):
    bits = all_subsets(z.shape[0])
    return np.abs(bits @ z).max(axis=0).sum() / z.size


def test_frob_examples(rng):
    assert np.isclose(frob_matrix(np.eye(2)), np.sqrt(0.5))
    assert np.isclose(frob_matrix(np.ones((3, 3))), 1.0)
    b = rng.standard_normal((50, 50))
    assert np.isclose(frob_matrix(b), np.sqrt(sum(x * x for x in b.ravel())) / 50, rtol=1e-12)
    assert np.isclose(frob_matrix(sp.csr_matrix(b)), frob_matrix(b), rtol=1e-12)


def test_frob_signal_examples(rng):
    assert np.isclose(frob_signal(np.ones((7, 3))), np.sqrt(3))
    assert frob_signal(np.zeros((4, 2))) == 0
    s = rng.random((20, 3))
    assert np.isclose(frob_signal(s), np.sqrt(sum(x * x for x in s.ravel()) / 20), rtol=1e-12)


def test_frob_pair(rng):
    b, s = rng.standard_normal((10, 10)), rng.random((10, 2))
    n, e = 10, 37
    assert np.isclose(frob_pair(b, s, NormWeights(1, 0), n, e), np.sqrt(n * n / e) * frob_matrix(b))
    assert np.isclose(frob_pair(b, s, NormWeights(0, 1), n, e), frob_signal(s))
    direct = np.sqrt(0.5 * (n * n / e) * (b**2).sum() / n**2 + 0.5 * (s**2).sum() / n)
    assert np.isclose(frob_pair(b, s, NormWeights(), n, e), direct, rtol=1e-12)
    with pytest.raises(ValueError):
        frob_pair(b, s, NormWeights(), n, 0)


@pytest.mark.parametrize("a, b", [(0, 0), (0.3, 0.3), (-0.5, 1.5)])
def test_norm_weights_validation(a, b):
    with pytest.raises(ValueError):
        NormWeights(a, b)


def test_exact_examples():
    est = cut_norm_exact(np.ones((2, 2)), 4)
    assert est.value == 1 and list(est.subset_u) == [0, 1] and list(est.subset_v) == [0, 1]
    assert cut_norm_exact(np.zeros((3, 3)), 1).value == 0
    assert cut_norm_exact(np.array([[1.0, -1.0], [-1.0, 1.0]]), 1).value == 1


def test_exact_guard():
    with pytest.raises(ValueError, match="heuristic"):
        cut_norm_exact(np.zeros((25, 25)), 1)


@given(st.integers(1, 8), st.integers(0, 2**31))
def test_exact_matches_double_enumeration(n, seed):
    b = np.random.default_rng(seed).standard_normal((n, n))
    est = cut_norm_exact(b, 3.0)
    assert np.isclose(est.value * 3.0, double_enumeration(b), rtol=1e-12, atol=1e-12)
    assert np.isclose(abs(subset_sum(b, est.subset_u, est.subset_v)) / 3.0, est.value, rtol=1e-12)


def test_exact_chunking_consistent(rng):
    b = rng.standard_normal((14, 14))
    assert np.isclose(cut_norm_exact(b, 1, chunk_bits=3).value, cut_norm_exact(b, 1, chunk_bits=14).value)


def test_exact_permutation_invariant(rng):
    b = rng.standard_normal((11, 11))
    p = rng.permutation(11)
    assert np.isclose(cut_norm_exact(b, 1).value, cut_norm_exact(b[np.ix_(p, p)], 1).value, rtol=1e-12)


def test_cauchy_schwarz_and_homogeneity(rng):
    for _ in range(20):
        n = int(rng.integers(2, 12))
        b = rng.standard_normal((n, n))
        e = float(rng.integers(1, 50))
        v = cut_norm_exact(b, e).value
        assert v <= (n * n / e) * frob_matrix(b) + 1e-12
        c = float(rng.standard_normal())
        assert np.isclose(cut_norm_exact(c * b, e).value, abs(c) * v, rtol=1e-10)


def test_heuristic_zero_residual(rng):
    q = rng.random((30, 3))
    icg = Icg.from_affiliations(q, rng.random(3) / 3)
    a = sp.csr_matrix(dense_c(icg))
    est = cut_norm_heuristic((a, icg), 1.0, restarts=8)
    assert est.value <= 1e-10


def test_heuristic_rank_one_optimum(rng):
    n = 20
    u = np.where(rng.random(n) < 0.5, rng.random(n), 0.0)
    v = np.where(rng.random(n) < 0.5, rng.random(n), 0.0)
    est = cut_norm_heuristic(np.outer(u, v), n * n, restarts=4)
    assert np.isclose(est.value, u.sum() * v.sum() / n**2, rtol=1e-12)
    assert set(est.subset_u) == set(np.flatnonzero(u)) and set(est.subset_v) == set(np.flatnonzero(v))


def test_heuristic_is_lower_bound_and_close(rng):
    for _ in range(30):
        n = int(rng.integers(2, 13))
        b = rng.standard_normal((n, n))
        exact = cut_norm_exact(b, 5.0).value
        est = cut_norm_heuristic(b, 5.0, restarts=32, seed=int(rng.integers(1 << 30)))
        assert est.value <= exact + 1e-12
        assert est.value >= 0.9 * exact
        assert np.isclose(abs(subset_sum(b, est.subset_u, est.subset_v)) / 5.0, est.value, rtol=1e-12)


def test_heuristic_implicit_residual_matches_dense(rng):
    a = sp.csr_matrix(random_symmetric(rng, 40))
    icg = Icg(rng.standard_normal((40, 4)), rng.standard_normal(4), np.zeros((4, 0)))
    dense = a.toarray() - dense_c(icg)
    op = residual_operator(a, icg)
    x = rng.standard_normal((40, 3))
    np.testing.assert_allclose(op.matmat(x), dense @ x, atol=1e-12)
    implicit = cut_norm_heuristic((a, icg), 7.0, restarts=8, seed=3)
    explicit = cut_norm_heuristic(dense, 7.0, restarts=8, seed=3)
    assert np.isclose(implicit.value, explicit.value, rtol=1e-10)


def test_heuristic_deterministic(rng):
    b = rng.standard_normal((30, 30))
    assert cut_norm_heuristic(b, 1, seed=9).value == cut_norm_heuristic(b, 1, seed=9).value
    with pytest.raises(ValueError):
        cut_norm_heuristic(b, 1, restarts=0)


def test_signal_cut_examples():
    assert np.isclose(cut_norm_signal(np.array([[1.0], [-2.0], [3.0]])), 4 / 3)
    z = np.random.default_rng(0).random((6, 2))
    assert np.isclose(cut_norm_signal(z), z.sum() / z.size)
    assert cut_norm_signal(np.zeros((4, 3))) == 0
    with pytest.raises(ValueError):
        cut_norm_signal(np.zeros((4, 0)))


@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**31))
def test_signal_cut_matches_enumeration(n, d, seed):
    z = np.random.default_rng(seed).standard_normal((n, d))
    assert np.isclose(cut_norm_signal(z), signal_enumeration(z), rtol=1e-12, atol=1e-15)


def test_cut_metric_pair(rng):
    b, z = rng.standard_normal((8, 8)), rng.standard_normal((8, 2))
    assert cut_metric_pair(np.zeros((8, 8)), np.zeros((8, 2)), NormWeights(), 8, 10) == 0
    w = NormWeights(1.0, 0.0)
    assert np.isclose(cut_metric_pair(b, z, w, 8, 10), cut_norm_exact(b, 10).value)
    w = NormWeights(0.3, 0.7)
    expected = 0.3 * double_enumeration(b) / 10 + 0.7 * signal_enumeration(z)
    assert np.isclose(cut_metric_pair(b, z, w, 8, 10), expected, rtol=1e-12)


def test_estimate_json(rng):
    est = cut_norm_exact(rng.standard_normal((5, 5)), 2.0)
    js = est.to_json()
    assert js["method"] == "exact" and js["normalizer"] == 2.0
    assert js["size_u"] == est.subset_u.size


def test_itertools_oracle_agrees_with_bitmask_oracle(rng):
    b = rng.standard_normal((4, 4))
    best = 0.0
    for u in itertools.product([0, 1], repeat=4):
        for v in itertools.product([0, 1], repeat=4):
            best = max(best, abs(np.array(u) @ b @ np.array(v)))
    assert np.isclose(best, double_enumeration(b))
