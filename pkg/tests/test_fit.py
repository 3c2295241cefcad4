import numpy as np
import pytest
import scipy.sparse as sp
from scipy.special import expit

from icg.fit import (
    DivergenceError,
    FitConfig,
    eigen_triplet,
    fit,
    grad_all,
    init_eigen,
    loss_efficient,
)
from icg.graph import from_dense, gen_erdos_renyi, gen_sbm
from icg.model import Icg, dense_c
from icg.optim import Adam, RowAdam

from conftest import random_symmetric


def dense_loss(a, s, icg, lam):
    """Loss written out with the N x N matrix C and size-normalized norms."""
    n = a.shape[0]
    q = expit(icg.logits)
    c = q @ np.diag(icg.r) @ q.T
    graph = ((a - c) ** 2).sum() / n**2
    signal = ((s - q @ icg.f) ** 2).sum() / (n * s.shape[1]) if s.shape[1] else 0.0
    return graph, signal


def sym(c):
    return (c + c.T) / 2


def random_instance(rng, n, k, d, weighted=True):
    a = random_symmetric(rng, n, density=rng.uniform(0.05, 0.6), weighted=weighted)
    g = from_dense(a, rng.random((n, d)))
    icg = Icg(rng.standard_normal((n, k)), rng.standard_normal(k), rng.standard_normal((k, d)))
    return g, icg


def numeric_grad(fun, x, h=1e-5):
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fun()
        x[idx] = old - h
        down = fun()
        x[idx] = old
        out[idx] = (up - down) / (2 * h)
    return out


def assert_grad_close(analytic, numeric, rtol=1e-4):
    scale = np.maximum(np.abs(numeric), np.abs(analytic))
    err = np.abs(analytic - numeric)
    # relative error, with an absolute floor for coordinates that vanish
    assert np.all(err <= rtol * np.maximum(scale, 1e-6)), float((err / np.maximum(scale, 1e-6)).max())


def test_loss_matches_dense_oracle(rng):
    for trial in range(50):
        n, k, d = int(rng.integers(2, 201)), int(rng.integers(1, 11)), int(rng.integers(0, 4))
        g, icg = random_instance(rng, n, k, d, weighted=bool(trial % 2))
        lam = float(rng.uniform(0, 2))
        gl, sl = loss_efficient(g, icg, lam)
        dg, ds = dense_loss(g.adjacency.toarray(), g.signal, icg, lam)
        assert np.isclose(gl, dg, rtol=1e-10, atol=0)
        assert np.isclose(sl, ds, rtol=1e-10, atol=1e-300)


def test_loss_zero_residual(rng):
    q = rng.random((40, 3))
    icg = Icg.from_affiliations(q, rng.random(3) / 3, rng.random((3, 2)) / 3)
    g = from_dense(sym(dense_c(icg)), icg.q @ icg.f)
    gl, sl = loss_efficient(g, icg, 1.0)
    assert gl <= 1e-18 and sl <= 1e-18


def test_loss_with_zero_model(rng):
    g, icg = random_instance(rng, 30, 3, 2)
    zero = icg.replace(r=np.zeros(3), f=np.zeros((3, 2)))
    gl, sl = loss_efficient(g, zero, 1.0)
    assert np.isclose(gl, (g.adjacency.toarray() ** 2).sum() / 30**2)
    assert np.isclose(sl, (g.signal**2).sum() / (30 * 2))


def test_gradients_match_finite_differences(rng):
    for _ in range(20):
        n, k, d = int(rng.integers(5, 40)), int(rng.integers(1, 6)), int(rng.integers(0, 3))
        g, icg = random_instance(rng, n, k, d)
        lam = float(rng.uniform(0.1, 2))
        logits, r, f = icg.logits.copy(), icg.r.copy(), icg.f.copy()

        def total():
            gl, sl = loss_efficient(g, Icg(logits, r, f), lam)
            return gl + lam * sl

        gq, gr, gf = grad_all(g, icg, lam)
        assert_grad_close(gq, numeric_grad(total, logits))
        assert_grad_close(gr, numeric_grad(total, r))
        assert_grad_close(gf, numeric_grad(total, f))


def test_gradient_at_optimum_vanishes(rng):
    q = rng.random((25, 3))
    icg = Icg.from_affiliations(q, rng.random(3) / 3, rng.random((3, 2)) / 3)
    g = from_dense(sym(dense_c(icg)), icg.q @ icg.f)
    for grad in grad_all(g, icg, 1.0):
        assert np.abs(grad).max() <= 1e-15


def test_lambda_zero_kills_feature_gradient(rng):
    g, icg = random_instance(rng, 20, 3, 2)
    assert np.all(grad_all(g, icg, 0.0)[2] == 0)


def test_small_gd_step_descends(rng):
    for _ in range(10):
        g, icg = random_instance(rng, 30, 4, 2)
        before = sum(loss_efficient(g, icg, 1.0))
        gq, gr, gf = grad_all(g, icg, 1.0)
        lr = 1e-4
        step = Icg(icg.logits - lr * gq, icg.r - lr * gr, icg.f - lr * gf)
        after = sum(loss_efficient(g, step, 1.0))
        assert after <= before


@pytest.mark.parametrize("seed", range(5))
def test_eigen_triplet_reconstructs(seed):
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal(15)
    lam = float(rng.standard_normal())
    q, r = eigen_triplet(lam, phi)
    np.testing.assert_allclose((q * r) @ q.T, lam * np.outer(phi, phi), atol=1e-10)


def test_eigen_triplet_nonnegative_vector():
    q, r = eigen_triplet(3.0, np.array([0.2, 0.5, 0.1]))
    assert r[1] == 0 and np.all(q[:, 1] == 0.5)
    np.testing.assert_allclose((q * r) @ q.T, 3.0 * np.outer([0.2, 0.5, 0.1], [0.2, 0.5, 0.1]), atol=1e-12)


def test_init_reconstructs_rank_one_indicator(rng):
    ind = (rng.random(30) < 0.5).astype(float)
    g = from_dense(np.outer(ind, ind))
    icg = init_eigen(g, 3)
    gl, _ = loss_efficient(g, icg, 0.0)
    assert gl <= 1e-10


def test_init_triangle_residual():
    g = from_dense(np.ones((3, 3)) - np.eye(3))
    gl, _ = loss_efficient(g, init_eigen(g, 3), 0.0)
    assert np.isclose(gl, 2 / 9, atol=1e-9)


def test_init_perron_branch():
    g = gen_erdos_renyi(60, 0.4, seed=2)
    icg = init_eigen(g, 3)
    assert icg.r[0] > 0 and icg.r[1] == 0 and icg.r[2] < 0


def test_init_remainder_and_small_k():
    g = gen_erdos_renyi(40, 0.3, seed=2, d=2)
    icg = init_eigen(g, 5)
    assert icg.k == 5 and np.all(icg.r[3:] == 0)
    assert init_eigen(g, 2).k == 2
    assert icg.f.shape == (5, 2)


def test_fit_epochs_zero_returns_init():
    g = gen_erdos_renyi(40, 0.3, seed=1)
    cfg = FitConfig(k=3, epochs=0)
    icg, report = fit(g, cfg)
    init = init_eigen(g, 3)
    np.testing.assert_array_equal(icg.logits, init.logits)
    assert report.total_loss == []


def test_fit_featureless_signal_loss_zero():
    g = gen_erdos_renyi(40, 0.3, seed=1)
    _, report = fit(g, FitConfig(k=3, lam=0.0, epochs=20))
    assert all(x == 0 for x in report.signal_loss)
    assert len(report.graph_loss) == 20


def test_fit_is_deterministic():
    g = gen_sbm([20, 20], [[0.8, 0.1], [0.1, 0.8]], seed=0, d=2)
    cfg = FitConfig(k=4, epochs=30, seed=3, track_cut_norm_every=10)
    a = fit(g, cfg)[1]
    b = fit(g, cfg)[1]
    assert a.total_loss == b.total_loss and a.cut_norm == b.cut_norm
    assert len(a.cut_norm) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_divergence_raises():
    g = gen_erdos_renyi(30, 0.5, seed=0)
    with pytest.raises(DivergenceError, match="learning rate"):
        fit(g, FitConfig(k=3, epochs=200, lr=1e200, optimizer="gd", init="random"))


def test_planted_fit_reduces_loss():
    rng = np.random.default_rng(0)
    n = 300
    q0 = (rng.random((n, 4)) < 0.3).astype(float)
    c0 = q0 @ np.diag([0.4, 0.3, 0.2, 0.1]) @ q0.T
    a = c0 - np.diag(np.diag(c0))
    g = from_dense(a)
    icg, report = fit(g, FitConfig(k=12, lam=0.0, lr=0.05, epochs=2000))
    # the eigenvector init is already close on a planted model, so compare
    # against the loss of the empty model C = 0
    null_loss = (a**2).sum() / n**2
    assert report.final_graph_loss <= 0.05 * null_loss
    assert report.final_graph_loss <= report.graph_loss[0]


def test_config_validation():
    for bad in (dict(k=0), dict(k=2, lr=0), dict(k=2, epochs=-1), dict(k=2, optimizer="sgd"), dict(k=2, init="x")):
        with pytest.raises(ValueError):
            FitConfig(**bad)


def test_adam_matches_reference_formula():
    p = {"x": np.array([1.0, -2.0])}
    opt = Adam(0.1)
    g = np.array([0.5, -1.0])
    opt.step(p, {"x": g})
    # first step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(p["x"], [0.9, -1.9], atol=1e-7)


def test_row_adam_touches_only_given_rows():
    x = np.zeros((4, 2))
    opt = RowAdam(x.shape, 0.1)
    opt.step(x, np.array([1, 3]), np.ones((2, 2)))
    assert np.all(x[[0, 2]] == 0) and np.allclose(x[[1, 3]], -0.1)
    assert list(opt.t) == [0, 1, 0, 1]
