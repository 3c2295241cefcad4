import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from icg.lanczos import LanczosWarning, lanczos_topk

from conftest import random_symmetric


def test_identity():
    res = lanczos_topk(np.eye(6), 3)
    np.testing.assert_allclose(res.values, 1.0, atol=1e-12)
    np.testing.assert_allclose(res.vectors.T @ res.vectors, np.eye(3), atol=1e-10)
    assert res.converged


def test_triangle_spectrum():
    k3 = sp.csr_matrix(np.ones((3, 3)) - np.eye(3))
    res = lanczos_topk(k3, 3)
    np.testing.assert_allclose(res.values, [2, -1, -1], atol=1e-10)
    top = lanczos_topk(k3, 1)
    np.testing.assert_allclose(np.abs(top.vectors[:, 0]), np.full(3, 1 / np.sqrt(3)), atol=1e-8)


def test_matches_dense_eigensolver(rng):
    a = sp.csr_matrix(random_symmetric(rng, 500, density=0.02))
    res = lanczos_topk(a, 5, seed=4)
    dense = np.linalg.eigvalsh(a.toarray())
    expected = dense[np.argsort(-np.abs(dense))][:5]
    np.testing.assert_allclose(res.values, expected, atol=1e-6)
    resid = np.linalg.norm(a @ res.vectors - res.vectors * res.values, axis=0)
    assert np.all(resid <= 1e-6 * np.abs(res.values))


def test_invariant_subspace_restart():
    # block-diagonal: a start vector can hit an invariant subspace early
    a = sp.block_diag([np.ones((3, 3)) - np.eye(3), 2 * (np.ones((2, 2)) - np.eye(2))]).tocsr()
    res = lanczos_topk(a, 3, seed=1)
    dense = np.linalg.eigvalsh(a.toarray())
    np.testing.assert_allclose(np.sort(np.abs(res.values)), np.sort(np.abs(dense))[-3:], atol=1e-8)


def test_budget_exhaustion_warns(rng):
    a = sp.csr_matrix(random_symmetric(rng, 300, density=0.05))
    with pytest.warns(LanczosWarning):
        res = lanczos_topk(a, 10, iters=12)
    assert not res.converged
    assert len(res.values) < 10


def test_argument_checks():
    with pytest.raises(ValueError):
        lanczos_topk(np.eye(3), 4)


def test_no_warning_when_converged(rng):
    a = sp.csr_matrix(random_symmetric(rng, 100))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lanczos_topk(a, 4)
