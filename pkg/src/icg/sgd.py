"""Subgraph SGD: fit an ICG while reading only M sampled nodes per step.

Each step draws M node ids i.i.d. uniformly with repetition, restricts the
loss to the induced M x M subgraph, updates all of r and F and only the
sampled rows of the logits.  Logit-row gradients are scaled by M/N so the
per-entry step matches full gradient descent.

``grad_error_study`` measures how far subgraph gradients stray from the
full ones and compares the spread with the Hoeffding-type bounds.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .fit import DivergenceError, FitReport, loss_efficient, raw_grads
from .graph import GraphSignal, NodeSample
from .model import Icg
from .optim import Adam, RowAdam


@dataclass(frozen=True)
class SgdConfig:
    m: int
    steps: int
    lr: float = 0.01
    lam: float = 1.0
    seed: int = 0
    scale_q_grads: bool = True
    optimizer: str = "gd"
    eval_every: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("sample size m must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _subgraph(g: GraphSignal, idx: np.ndarray):
    return g.adjacency[idx][:, idx], g.signal[idx]


def _row_grads(g: GraphSignal, logits, r, f, idx, lam):
    """Loss and gradients of the sampled loss; Q-gradients per sample position."""
    a_n, s_n = _subgraph(g, idx)
    q_n = expit(logits[idx])
    gl, sl, gq, gr, gf = raw_grads(a_n, s_n, q_n, r, f, lam)
    return gl, sl, q_n, gq, gr, gf


def subgraph_loss(g: GraphSignal, icg: Icg, sample: NodeSample, lam: float) -> float:
    sample.validate(g.n)
    a_n, s_n = _subgraph(g, sample.indices)
    sub = GraphSignal(a_n, s_n)
    gl, sl = loss_efficient(sub, Icg(icg.logits[sample.indices], icg.r, icg.f), lam)
    return gl + lam * sl


def subgraph_grads(g: GraphSignal, icg: Icg, sample: NodeSample, lam: float):
    """Exact gradients of ``subgraph_loss``.

    ``grad_logits`` is N x K and zero outside the sample; a node drawn
    several times accumulates one contribution per draw.
    """
    sample.validate(g.n)
    idx = sample.indices
    _, _, q_n, gq, gr, gf = _row_grads(g, icg.logits, icg.r, icg.f, idx, lam)
    grad_logits = np.zeros_like(icg.logits)
    np.add.at(grad_logits, idx, gq * q_n * (1.0 - q_n))
    return grad_logits, gr, gf


@dataclass
class SgdReport(FitReport):
    full_loss: list[tuple[int, float]] = field(default_factory=list)

    def to_json(self, timings: bool = True) -> dict:
        out = super().to_json(timings)
        out["full_loss"] = [list(p) for p in self.full_loss]
        return out


class _SgdState:
    def __init__(self, icg: Icg, cfg: SgdConfig):
        self.logits = icg.logits.copy()
        self.rf = {"r": icg.r.copy(), "f": icg.f.copy()}
        self.cfg = cfg
        if cfg.optimizer == "adam":
            self.adam = Adam(cfg.lr)
            self.row_adam = RowAdam(self.logits.shape, cfg.lr)

    def icg(self) -> Icg:
        return Icg(self.logits, self.rf["r"], self.rf["f"])


def sgd_step(state: _SgdState, g: GraphSignal, idx: np.ndarray) -> tuple[float, float]:
    cfg = state.cfg
    logits, r, f = state.logits, state.rf["r"], state.rf["f"]
    gl, sl, q_n, gq, gr, gf = _row_grads(g, logits, r, f, idx, cfg.lam)
    rows, inverse = np.unique(idx, return_inverse=True)
    grad_rows = np.zeros((rows.size, logits.shape[1]))
    np.add.at(grad_rows, inverse, gq * q_n * (1.0 - q_n))
    if cfg.scale_q_grads:
        grad_rows *= idx.size / g.n
    if cfg.optimizer == "gd":
        logits[rows] -= cfg.lr * grad_rows
        r -= cfg.lr * gr
        f -= cfg.lr * gf
    else:
        state.row_adam.step(logits, rows, grad_rows)
        state.adam.step(state.rf, {"r": gr, "f": gf})
    return gl, sl


def sgd_fit(g: GraphSignal, cfg: SgdConfig, init: Icg) -> tuple[Icg, FitReport]:
    """Run ``cfg.steps`` subgraph steps from ``init``.

    Per-step losses in the report are sampled losses.  Full-graph losses go
    to ``full_loss`` every ``cfg.eval_every`` steps and to the ``final_*``
    fields at the end.
    """
    report = SgdReport()
    state = _SgdState(init, cfg)
    rng = np.random.default_rng(cfg.seed)
    for step in range(cfg.steps):
        t0 = time.perf_counter()
        idx = rng.integers(0, g.n, size=cfg.m)
        gl, sl = sgd_step(state, g, idx)
        total = gl + cfg.lam * sl
        if not np.isfinite(total):
            raise DivergenceError(f"subgraph loss became {total} at step {step}; lower the learning rate")
        report.graph_loss.append(gl)
        report.signal_loss.append(sl)
        report.total_loss.append(total)
        report.epoch_time.append(time.perf_counter() - t0)
        if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            fgl, fsl = loss_efficient(g, state.icg(), cfg.lam)
            report.full_loss.append((step + 1, fgl + cfg.lam * fsl))
    icg = state.icg()
    gl, sl = loss_efficient(g, icg, cfg.lam)
    report.final_graph_loss, report.final_signal_loss = gl, sl
    report.final_total_loss = gl + cfg.lam * sl
    return icg, report


# ---------------------------------------------------------------------------
# gradient approximation study


def gradient_bounds(n: int, k: int, d: int, m: int, p: float, lam: float) -> dict[str, float]:
    """Deviation bounds holding jointly with probability >= 1 - p.

    The failure probability is split evenly over the three parameter
    classes; the log K, log N, log D terms are the union bounds over
    coordinates.
    """
    lp = math.log(3.0 / p)
    two = math.log(2.0)
    out = {
        "q": (4.0 / n) * math.sqrt((2 * lp + 2 * math.log(n) + 2 * math.log(k) + 2 * two) / m),
        "r": 4.0 * math.sqrt((2 * lp + 2 * math.log(n) + 2 * math.log(k) + 2 * two) / m),
    }
    if d:
        out["f"] = (4.0 * lam / d) * math.sqrt((2 * lp + 2 * math.log(k) + 2 * math.log(d) + 2 * two) / m)
    return out


@dataclass
class GradErrorReport:
    m_values: list[int]
    quantile: float
    errors: dict[str, list[list[float]]]
    empirical_quantile: dict[str, list[float]]
    median: dict[str, list[float]]
    bounds: dict[str, list[float]]
    passed: dict[str, bool]
    slope_r_median: float | None
    clamped: bool

    def to_json(self) -> dict:
        return {
            "m_values": self.m_values,
            "quantile": self.quantile,
            "empirical_quantile": self.empirical_quantile,
            "median": self.median,
            "bounds": self.bounds,
            "passed": self.passed,
            "slope_r_median": self.slope_r_median,
            "clamped": self.clamped,
        }


def _clamp_for_study(g: GraphSignal, icg: Icg) -> tuple[Icg, bool]:
    r = np.clip(icg.r, 0.0, 1.0)
    f = np.clip(icg.f, 0.0, 1.0)
    clamped = not (np.array_equal(r, icg.r) and np.array_equal(f, icg.f))
    if clamped:
        warnings.warn("r and F clamped to [0, 1] for the gradient study", RuntimeWarning, stacklevel=3)
    return icg.replace(r=r, f=f), clamped


def grad_error_study(
    g: GraphSignal,
    icg: Icg,
    m_values,
    trials: int,
    p: float,
    seed: int,
    lam: float = 1.0,
) -> GradErrorReport:
    """Sampled-vs-full gradient deviations over ``trials`` draws per M.

    For each draw the error of a class is the max over its coordinates:
    |grad_r L - grad_r L_n|, |grad_F L - grad_F L_n| and, per sampled
    position m, |grad_q L[n_m] - (M/N) grad_{Q_n} L_n[m]|.
    """
    icg, clamped = _clamp_for_study(g, icg)
    q = expit(icg.logits)
    c_max = float(np.max(np.abs(q * icg.r).sum(axis=1)))
    if np.any(icg.r < 0) or c_max > 1.0 or (icg.d and float((q @ icg.f).max()) > 1.0):
        warnings.warn("C or P has entries outside [0, 1]; the bounds assume they do not", RuntimeWarning, stacklevel=2)
    _, _, full_q, full_r, full_f = raw_grads(g.adjacency, g.signal, q, icg.r, icg.f, lam)
    classes = ["q", "r", "f"] if g.d else ["q", "r"]
    rng = np.random.default_rng(seed)
    errors = {c: [] for c in classes}
    for m in m_values:
        per = {c: [] for c in classes}
        for _ in range(trials):
            idx = rng.integers(0, g.n, size=m)
            a_n, s_n = _subgraph(g, idx)
            _, _, gq, gr, gf = raw_grads(a_n, s_n, q[idx], icg.r, icg.f, lam)
            per["q"].append(float(np.abs(full_q[idx] - (m / g.n) * gq).max()))
            per["r"].append(float(np.abs(full_r - gr).max()))
            if "f" in per:
                per["f"].append(float(np.abs(full_f - gf).max()))
        for c in classes:
            errors[c].append(per[c])

    emp = {c: [float(np.quantile(e, 1.0 - p)) for e in errors[c]] for c in classes}
    med = {c: [float(np.median(e)) for e in errors[c]] for c in classes}
    bounds = {c: [] for c in classes}
    for m in m_values:
        b = gradient_bounds(g.n, icg.k, g.d, m, p, lam)
        for c in classes:
            bounds[c].append(b[c])
    passed = {c: all(e <= b for e, b in zip(emp[c], bounds[c])) for c in classes}
    slope = None
    if len(m_values) > 1:
        slope = float(np.polyfit(np.log(m_values), np.log(med["r"]), 1)[0])
    return GradErrorReport(list(m_values), 1.0 - p, errors, emp, med, bounds, passed, slope, clamped)
