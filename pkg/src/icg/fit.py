"""Fitting an ICG to a graph-signal by minimizing the Frobenius loss.

    L(Q, r, F) = ||A - Q diag(r) Q^T||_F^2 + lambda ||S - Q F||^2 / D

with the size-normalized norms of ``norms`` (1/N^2 for the graph, 1/(N D)
for the signal).  The graph term never forms an N x N matrix:

    ||A - C||_F^2 = (r^T (G * G) r - 2 tr(Q^T A Q diag r)) / N^2 + ||A||_F^2,

with G = Q^T Q, so loss and gradients cost O(K^2 N + K E + N K D).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logit

from .graph import GraphSignal
from .lanczos import lanczos_topk
from .model import DEFAULT_RIDGE, Icg, analyze
from .norms import cut_norm_heuristic
from .optim import make_optimizer

LOGIT_EPS = 1e-6


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class FitConfig:
    k: int
    lam: float = 1.0
    lr: float = 0.01
    epochs: int = 1000
    optimizer: str = "adam"
    init: str = "eigen"
    seed: int = 0
    ridge: float = DEFAULT_RIDGE
    track_cut_norm_every: int | None = None
    cut_norm_restarts: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("eigen", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class FitReport:
    graph_loss: list[float] = field(default_factory=list)
    signal_loss: list[float] = field(default_factory=list)
    total_loss: list[float] = field(default_factory=list)
    epoch_time: list[float] = field(default_factory=list)
    cut_norm: list[tuple[int, float]] = field(default_factory=list)
    final_graph_loss: float = float("nan")
    final_signal_loss: float = float("nan")
    final_total_loss: float = float("nan")

    @property
    def final_frobenius_error(self) -> float:
        return float(np.sqrt(max(self.final_graph_loss, 0.0)))

    def to_json(self, timings: bool = True) -> dict:
        out = {
            "graph_loss": self.graph_loss,
            "signal_loss": self.signal_loss,
            "total_loss": self.total_loss,
            "cut_norm": [list(p) for p in self.cut_norm],
            "final_graph_loss": self.final_graph_loss,
            "final_signal_loss": self.final_signal_loss,
            "final_total_loss": self.final_total_loss,
            "final_frobenius_error": self.final_frobenius_error,
        }
        if timings:
            out["epoch_time"] = self.epoch_time
        return out


# ---------------------------------------------------------------------------
# loss and gradients


def _graph_terms(a: sp.csr_matrix, q: np.ndarray, r: np.ndarray):
    n = q.shape[0]
    gram = q.T @ q
    aq = a @ q
    quad = float(r @ (gram * gram) @ r)
    cross = float(r @ np.einsum("ik,ik->k", q, aq))
    const = float(np.dot(a.data, a.data))
    graph = (quad - 2.0 * cross + const) / (n * n)
    return graph, gram, aq


def _signal_residual(s: np.ndarray, q: np.ndarray, f: np.ndarray):
    if s.shape[1] == 0:
        return 0.0, None
    res = q @ f - s
    return float(np.sum(res * res)) / (s.shape[0] * s.shape[1]), res


def loss_efficient(g: GraphSignal, icg: Icg, lam: float) -> tuple[float, float]:
    """(graph_loss, signal_loss); the total is graph_loss + lam * signal_loss."""
    q = expit(icg.logits)
    graph, _, _ = _graph_terms(g.adjacency, q, icg.r)
    signal, _ = _signal_residual(g.signal, q, icg.f) if icg.d == g.d else (np.nan, None)
    return graph, signal


def raw_grads(a: sp.csr_matrix, s: np.ndarray, q: np.ndarray, r, f, lam: float):
    """Loss terms and gradients with respect to Q (not the logits).

    Returns ``(graph_loss, signal_loss, grad_q, grad_r, grad_f)``.
    """
    n = q.shape[0]
    graph, gram, aq = _graph_terms(a, q, r)
    # (C - A) Q = Q diag(r) G - A Q, never forming C
    cq = (q * r) @ gram
    grad_q = (4.0 / (n * n)) * (cq - aq) * r
    grad_r = (2.0 / (n * n)) * ((gram * gram) @ r - np.einsum("ik,ik->k", q, aq))
    signal, res = _signal_residual(s, q, f)
    if res is not None and lam:
        scale = lam * 2.0 / (n * s.shape[1])
        grad_q += scale * (res @ f.T)
        grad_f = scale * (q.T @ res)
    else:
        grad_f = np.zeros_like(f)
    return graph, signal, grad_q, grad_r, grad_f


def loss_and_grads(a: sp.csr_matrix, s: np.ndarray, logits, r, f, lam: float):
    """As ``raw_grads`` but differentiating through Q = sigmoid(logits)."""
    q = expit(logits)
    graph, signal, grad_q, grad_r, grad_f = raw_grads(a, s, q, r, f, lam)
    return graph, signal, grad_q * q * (1.0 - q), grad_r, grad_f


def grad_all(g: GraphSignal, icg: Icg, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _, _, gl, gr, gf = loss_and_grads(g.adjacency, g.signal, icg.logits, icg.r, icg.f, lam)
    return gl, gr, gf


# ---------------------------------------------------------------------------
# eigenvector initialization


def eigen_triplet(lam: float, phi: np.ndarray):
    """Three soft indicators and magnitudes whose rank-1 terms sum to lam phi phi^T.

    Returns ``(q, r)`` with q of shape (N, 3).  An empty positive or negative
    part gets magnitude 0 and uniform 1/2 affiliation.
    """
    phi = np.asarray(phi, dtype=np.float64)
    pos = np.maximum(phi, 0.0)
    neg = np.maximum(-phi, 0.0)
    both = pos + neg
    q = np.full((phi.size, 3), 0.5)
    r = np.zeros(3)
    for j, (part, sign) in enumerate(((pos, 2.0), (neg, 2.0), (both, -1.0))):
        top = part.max() if part.size else 0.0
        if top > 0.0:
            q[:, j] = part / top
            r[j] = sign * lam * top * top
    return q, r


def init_eigen(g: GraphSignal, k: int, seed: int = 0, ridge: float = DEFAULT_RIDGE, lanczos_iters: int | None = None) -> Icg:
    """Soft affiliations from the leading floor(k/3) eigenvectors of A.

    Communities not covered by eigenpairs (k mod 3, or pairs Lanczos could
    not converge) get small random logits and magnitude 0.
    """
    n = g.n
    rng = np.random.default_rng(seed)
    m = min(k // 3, n)
    cols, mags = [], []
    if m and g.nnz:
        eig = lanczos_topk(g.adjacency, m, iters=lanczos_iters, seed=seed)
        for lam, phi in zip(eig.values, eig.vectors.T):
            q, r = eigen_triplet(lam, phi)
            cols.append(q)
            mags.append(r)
    q = np.concatenate(cols, axis=1) if cols else np.zeros((n, 0))
    r = np.concatenate(mags) if mags else np.zeros(0)
    logits = logit(np.clip(q, LOGIT_EPS, 1 - LOGIT_EPS))
    fill = k - logits.shape[1]
    if fill:
        logits = np.concatenate([logits, 0.1 * rng.standard_normal((n, fill))], axis=1)
        r = np.concatenate([r, np.zeros(fill)])
    return Icg(logits, r, _optimal_f(expit(logits), g.signal, ridge))


def init_random(g: GraphSignal, k: int, seed: int = 0, ridge: float = DEFAULT_RIDGE) -> Icg:
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((g.n, k))
    density = degree_density(g)
    r = density * (1.0 + 0.1 * rng.standard_normal(k)) / max(k, 1)
    return Icg(logits, r, _optimal_f(expit(logits), g.signal, ridge))


def degree_density(g: GraphSignal) -> float:
    return float(g.adjacency.sum()) / (g.n * g.n)


def _optimal_f(q: np.ndarray, s: np.ndarray, ridge: float) -> np.ndarray:
    if s.shape[1] == 0:
        return np.zeros((q.shape[1], 0))
    return analyze(q, s, ridge)


# ---------------------------------------------------------------------------
# optimizer loop


def initialize(g: GraphSignal, cfg: FitConfig) -> Icg:
    if cfg.init == "eigen":
        return init_eigen(g, cfg.k, cfg.seed, cfg.ridge)
    return init_random(g, cfg.k, cfg.seed, cfg.ridge)


def fit(g: GraphSignal, cfg: FitConfig, init: Icg | None = None) -> tuple[Icg, FitReport]:
    icg = initialize(g, cfg) if init is None else init
    report = FitReport()
    if cfg.epochs == 0:
        gl, sl = loss_efficient(g, icg, cfg.lam)
        report.final_graph_loss, report.final_signal_loss = gl, sl
        report.final_total_loss = gl + cfg.lam * sl
        return icg, report

    a, s = g.adjacency, g.signal
    params = {"logits": icg.logits.copy(), "r": icg.r.copy(), "f": icg.f.copy()}
    opt = make_optimizer(cfg.optimizer, cfg.lr)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        gl, sl, d_logits, d_r, d_f = loss_and_grads(a, s, params["logits"], params["r"], params["f"], cfg.lam)
        total = gl + cfg.lam * sl
        if not np.isfinite(total):
            raise DivergenceError(f"loss became {total} at epoch {epoch}; lower the learning rate (lr={cfg.lr})")
        if cfg.track_cut_norm_every and epoch % cfg.track_cut_norm_every == 0:
            est = cut_norm_heuristic(
                (a, Icg(params["logits"], params["r"], params["f"])),
                max(float(np.dot(a.data, a.data)), 1.0),
                restarts=cfg.cut_norm_restarts,
                seed=cfg.seed,
            )
            report.cut_norm.append((epoch, est.value))
        opt.step(params, {"logits": d_logits, "r": d_r, "f": d_f})
        report.graph_loss.append(gl)
        report.signal_loss.append(sl)
        report.total_loss.append(total)
        report.epoch_time.append(time.perf_counter() - t0)

    q = expit(params["logits"])
    if cfg.lam > 0 and s.shape[1]:
        params["f"] = analyze(q, s, cfg.ridge)
    icg = Icg(params["logits"], params["r"], params["f"])
    gl, sl = loss_efficient(g, icg, cfg.lam)
    if not np.isfinite(gl + cfg.lam * sl):
        raise DivergenceError(f"final loss is not finite; lower the learning rate (lr={cfg.lr})")
    report.final_graph_loss, report.final_signal_loss = gl, sl
    report.final_total_loss = gl + cfg.lam * sl
    return icg, report
