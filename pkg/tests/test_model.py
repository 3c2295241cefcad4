import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from icg.model import (
    Analyzer,
    Icg,
    SingularAffiliationError,
    analyze,
    dense_c,
    export_summary,
    icg_edge_block,
    load_icg,
    materialize_q,
    project,
    save_icg,
    synthesize,
    write_summary,
)


def random_icg(rng, n=20, k=4, d=3):
    return Icg(rng.standard_normal((n, k)), rng.standard_normal(k), rng.standard_normal((k, d)))


def test_materialize_q(rng):
    assert np.all(materialize_q(Icg(np.zeros((3, 2)), np.zeros(2), np.zeros((2, 0)))) == 0.5)
    q = materialize_q(Icg(np.full((2, 2), 40.0), np.zeros(2), np.zeros((2, 0))))
    assert np.all(np.abs(q - 1) <= 1e-12)
    icg = random_icg(rng)
    loop = np.array([[1 / (1 + np.exp(-x)) for x in row] for row in icg.logits])
    np.testing.assert_allclose(icg.q, loop, rtol=0, atol=1e-15)


def test_icg_shape_checks():
    with pytest.raises(ValueError):
        Icg(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        Icg(np.zeros((3, 2)), np.zeros(2), np.zeros((3, 1)))


def test_icg_is_immutable(rng):
    icg = random_icg(rng)
    with pytest.raises(ValueError):
        icg.r[0] = 1.0
    assert icg.replace(r=np.zeros(4)).r.sum() == 0 and icg.r.sum() != 0


def test_synthesize(rng):
    q = rng.random((6, 3))
    assert np.all(synthesize(q, np.zeros((3, 2))) == 0)
    ind = np.zeros((6, 2))
    ind[:3, 0] = ind[3:, 1] = 1
    np.testing.assert_array_equal(synthesize(ind, np.eye(2)), ind)
    f = rng.standard_normal((3, 4))
    naive = np.zeros((6, 4))
    for i in range(6):
        for j in range(4):
            for k in range(3):
                naive[i, j] += q[i, k] * f[k, j]
    np.testing.assert_allclose(synthesize(q, f), naive, atol=1e-12)
    with pytest.raises(ValueError):
        synthesize(q, np.zeros((2, 2)))


def test_analyze_examples(rng):
    qo, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    s = rng.standard_normal((10, 2))
    np.testing.assert_allclose(analyze(qo, s, ridge=0.0), qo.T @ s, atol=1e-12)
    q = rng.random((30, 4))
    f = rng.standard_normal((4, 3))
    np.testing.assert_allclose(analyze(q, synthesize(q, f)), f, atol=1e-6)
    s = rng.standard_normal((30, 3))
    np.testing.assert_allclose(analyze(q, s), np.linalg.solve(q.T @ q + 1e-8 * np.eye(4), q.T @ s), atol=1e-8)
    np.testing.assert_allclose(analyze(q, s, ridge=0.0), np.linalg.pinv(q) @ s, atol=1e-8)


def test_analyze_singular_needs_ridge():
    q = np.ones((5, 2))
    with pytest.raises(SingularAffiliationError, match="ridge"):
        analyze(q, np.ones((5, 1)), ridge=0.0)
    assert np.all(np.isfinite(analyze(q, np.ones((5, 1)))))
    with pytest.raises(ValueError):
        Analyzer(np.ones((2, 3)))


def test_analyzer_adjoint(rng):
    q = rng.random((15, 4))
    an = Analyzer(q, 1e-3)
    s, g = rng.standard_normal((15, 2)), rng.standard_normal((4, 2))
    # <analyze(s), g> == <s, adjoint(g)>
    assert np.isclose(np.sum(an.analyze(s) * g), np.sum(s * an.analyze_adjoint(g)), rtol=1e-10)


def test_project(rng):
    q = rng.random((25, 3))
    s = synthesize(q, rng.standard_normal((3, 2)))
    np.testing.assert_allclose(project(q, s), s, atol=1e-8)
    x = rng.standard_normal((25, 2))
    p1 = project(q, x)
    np.testing.assert_allclose(project(q, p1), p1, atol=1e-8)
    inv = rng.random((6, 6)) + 6 * np.eye(6)
    y = rng.standard_normal((6, 2))
    np.testing.assert_allclose(project(inv, y), y, atol=1e-6)


@given(st.integers(2, 30), st.integers(1, 5), st.floats(0, 1e-2), st.integers(0, 2**31))
def test_project_linear_and_contractive(n, k, ridge, seed):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    q = rng.random((n, k)) + 0.1 * np.eye(n, k)
    x, y = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
    a, b = rng.standard_normal(2)
    np.testing.assert_allclose(project(q, a * x + b * y, ridge), a * project(q, x, ridge) + b * project(q, y, ridge), atol=1e-7)
    assert np.linalg.norm(project(q, x, ridge)) <= np.linalg.norm(x) * (1 + 1e-8)


def test_edge_blocks(rng):
    icg = random_icg(rng, n=12, k=3)
    assert np.all(icg_edge_block(icg.replace(r=np.zeros(3)), slice(0, 4), slice(2, 9)) == 0)
    one = Icg(np.full((5, 1), 50.0), [0.7], np.zeros((1, 0)))
    np.testing.assert_allclose(icg_edge_block(one, slice(None), slice(None)), 0.7, atol=1e-12)
    full = icg.q @ np.diag(icg.r) @ icg.q.T
    np.testing.assert_allclose(icg_edge_block(icg, slice(2, 7), slice(5, 11)), full[2:7, 5:11], atol=1e-12)
    np.testing.assert_allclose(icg_edge_block(icg, slice(2, 7), slice(5, 11)), icg_edge_block(icg, slice(5, 11), slice(2, 7)).T, atol=1e-12)
    np.testing.assert_allclose(dense_c(icg), full, atol=1e-12)


def test_dense_c_refuses_large():
    icg = Icg(np.zeros((5000, 1)), [1.0], np.zeros((1, 0)))
    with pytest.raises(MemoryError):
        dense_c(icg)


def test_snapshot_round_trip(tmp_path, rng):
    icg = random_icg(rng)
    save_icg(icg, tmp_path / "m.icg")
    back = load_icg(tmp_path / "m.icg")
    for name in ("logits", "r", "f"):
        np.testing.assert_array_equal(getattr(back, name), getattr(icg, name))
    (tmp_path / "bad").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        load_icg(tmp_path / "bad")


def test_summary_export(tmp_path, rng):
    icg = random_icg(rng)
    summary = export_summary(icg, top=3)
    assert summary["k"] == 4 and len(summary["communities"][0]["top_nodes"]) == 3
    col = icg.q[:, 1]
    assert summary["communities"][1]["top_nodes"][0] == int(np.argmax(col))
    write_summary(icg, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["n"] == 20
