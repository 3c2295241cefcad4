"""Size-normalized Frobenius norms and cut norms of matrices and signals.

The matrix cut norm is NP-hard in general.  ``cut_norm_exact`` enumerates
all row subsets (N <= 24) and picks the best column subset in closed form;
``cut_norm_heuristic`` runs sign-alternating coordinate ascent on an
implicit operator and returns a lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from .model import Icg

EXACT_LIMIT = 24


@dataclass(frozen=True)
class NormWeights:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("weights must be nonnegative")
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValueError(f"alpha + beta must equal 1, got {self.alpha + self.beta}")


@dataclass(frozen=True)
class CutNormEstimate:
    value: float
    subset_u: np.ndarray
    subset_v: np.ndarray
    method: str
    normalizer_e: float
    restarts_used: int = 0
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "size_u": int(self.subset_u.size),
            "size_v": int(self.subset_v.size),
            "normalizer": self.normalizer_e,
            "restarts_used": self.restarts_used,
        }


def frob_matrix(b) -> float:
    """sqrt(sum |b_ij|^2 / N^2) for a dense or sparse square matrix."""
    n = b.shape[0]
    if n == 0:
        return 0.0
    data = b.data if sp.issparse(b) else np.asarray(b).ravel()
    return float(np.sqrt(np.dot(data, data)) / n)


def frob_signal(s: np.ndarray) -> float:
    """sqrt(sum |s_ij|^2 / N); note: no division by the channel count."""
    s = np.asarray(s)
    if s.shape[0] == 0:
        return 0.0
    return float(np.sqrt(np.sum(s * s) / s.shape[0]))


def frob_pair(b, s, weights: NormWeights, n: int, e: float) -> float:
    if e <= 0:
        raise ValueError("E must be positive")
    fb = frob_matrix(b)
    fs = frob_signal(s)
    return float(np.sqrt(weights.alpha * (n * n / e) * fb * fb + weights.beta * fs * fs))


# ---------------------------------------------------------------------------
# exact enumeration


def _best_v(t: np.ndarray) -> tuple[float, np.ndarray]:
    pos = t[t > 0].sum()
    neg = -t[t < 0].sum()
    if pos >= neg:
        return pos, np.flatnonzero(t > 0)
    return neg, np.flatnonzero(t < 0)


def cut_norm_exact(b, e: float, chunk_bits: int = 12) -> CutNormEstimate:
    """Exact cut norm by enumerating all 2^N row subsets.

    For a fixed U with column sums t, the best V takes every positive (or
    every negative) column, so the inner sup is max(sum t+, sum t-).
    """
    b = b.toarray() if sp.issparse(b) else np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if n > EXACT_LIMIT:
        raise ValueError(
            f"exact cut norm is limited to N <= {EXACT_LIMIT} (got {n}); use cut_norm_heuristic"
        )
    if e <= 0:
        raise ValueError("E must be positive")
    if n == 0:
        return CutNormEstimate(0.0, np.zeros(0, int), np.zeros(0, int), "exact", e)

    lo = min(chunk_bits, n)
    hi = n - lo
    lo_masks = np.arange(1 << lo)
    lo_bits = ((lo_masks[:, None] >> np.arange(lo)) & 1).astype(np.float64)
    lo_sums = lo_bits @ b[:lo]
    best, best_u = -1.0, 0
    for h in range(1 << hi):
        hbits = (h >> np.arange(hi)) & 1
        t = lo_sums + hbits @ b[lo:] if hi else lo_sums
        score = np.maximum(np.where(t > 0, t, 0.0).sum(axis=1), np.where(t < 0, -t, 0.0).sum(axis=1))
        i = int(np.argmax(score))
        if score[i] > best:
            best, best_u = float(score[i]), int(lo_masks[i]) | (h << lo)

    u = np.flatnonzero((best_u >> np.arange(n)) & 1)
    val, v = _best_v(b[u].sum(axis=0))
    return CutNormEstimate(abs(val) / e, u, v, "exact", e)


# ---------------------------------------------------------------------------
# heuristic on implicit operators


def residual_operator(a, icg: Icg) -> spla.LinearOperator:
    """A - Q diag(r) Q^T as a linear operator; never densified."""
    q = expit(icg.logits)
    r = icg.r
    a = sp.csr_matrix(a)

    def matmat(x):
        x = np.asarray(x, dtype=np.float64)
        return a @ x - q @ (r[:, None] * (q.T @ x)) if x.ndim == 2 else a @ x - q @ (r * (q.T @ x))

    return spla.LinearOperator(a.shape, matvec=matmat, rmatvec=matmat, matmat=matmat, rmatmat=matmat, dtype=np.float64)


def _as_operator(b) -> spla.LinearOperator:
    if isinstance(b, tuple) and len(b) == 2 and isinstance(b[1], Icg):
        return residual_operator(*b)
    if isinstance(b, spla.LinearOperator):
        return b
    return spla.aslinearoperator(b if sp.issparse(b) else np.asarray(b, dtype=np.float64))


def cut_norm_heuristic(
    b,
    e: float,
    restarts: int = 16,
    seed: int = 0,
    max_sweeps: int = 100,
) -> CutNormEstimate:
    """Lower bound on the cut norm by alternating maximization over indicator vectors.

    ``b`` may be a dense array, a sparse matrix, a LinearOperator, or a pair
    ``(A, icg)`` standing for the residual A - Q diag(r) Q^T.  Each restart
    starts from a Bernoulli(1/2) row indicator and, for both signs of the
    objective, alternates v <- [B^T u has the sign] and u <- [B v has the
    sign] until the subsets stop changing.  All restarts advance together as
    the columns of one N x R block, so each sweep costs O(R (E + N K)).
    Columns with an exactly zero sum are excluded.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if e <= 0:
        raise ValueError("E must be positive")
    op = _as_operator(b)
    n = op.shape[0]
    rng = np.random.default_rng(seed)
    u0 = (rng.random((n, restarts)) < 0.5).astype(np.float64)

    best = (-1.0, None, None)
    converged = True
    for sign in (1.0, -1.0):
        u = u0.copy()
        v = np.zeros_like(u)
        for _ in range(max_sweeps):
            v_new = (sign * op.rmatmat(u) > 0).astype(np.float64)
            u_new = (sign * op.matmat(v_new) > 0).astype(np.float64)
            stable = np.array_equal(u_new, u) and np.array_equal(v_new, v)
            u, v = u_new, v_new
            if stable:
                break
        else:
            converged = False
        vals = np.abs(np.einsum("ir,ir->r", u, op.matmat(v)))
        j = int(np.argmax(vals))
        if vals[j] > best[0]:
            best = (float(vals[j]), u[:, j].copy(), v[:, j].copy())

    val, u, v = best
    return CutNormEstimate(
        val / e,
        np.flatnonzero(u),
        np.flatnonzero(v),
        "heuristic",
        e,
        restarts_used=restarts,
        converged=converged,
    )


def subset_sum(b, u: np.ndarray, v: np.ndarray) -> float:
    """sum_{i in U, j in V} b_ij, for checking reported subsets."""
    op = _as_operator(b)
    n = op.shape[0]
    x = np.zeros(n)
    y = np.zeros(n)
    x[u] = 1.0
    y[v] = 1.0
    return float(x @ op.matvec(y))


# ---------------------------------------------------------------------------
# signals and pairs


def cut_norm_signal(z: np.ndarray) -> float:
    """(1 / (D N)) sum_j sup_w |sum_{i in w} z_ij|, exact in O(N D)."""
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    if d < 1:
        raise ValueError("signal cut norm needs D >= 1")
    pos = np.where(z > 0, z, 0.0).sum(axis=0)
    neg = np.where(z < 0, -z, 0.0).sum(axis=0)
    return float(np.maximum(pos, neg).sum() / (d * n))


def cut_metric_pair(a_minus_c, s_minus_p, weights: NormWeights, n: int, e: float, **heuristic) -> float:
    """alpha ||B||_cut;N,E + beta ||Z||_cut;N.

    The matrix term is exact for N <= 24 and a heuristic lower bound above.
    """
    if isinstance(a_minus_c, tuple) or n > EXACT_LIMIT:
        mat = cut_norm_heuristic(a_minus_c, e, **heuristic).value
    else:
        mat = cut_norm_exact(a_minus_c, e).value
    sig = cut_norm_signal(s_minus_p) if weights.beta and np.asarray(s_minus_p).shape[1] else 0.0
    return weights.alpha * mat + weights.beta * sig
