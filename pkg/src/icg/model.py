"""Intersecting community graphs and the signal-processing maps built on them.

An ICG is stored through unconstrained affiliation logits; the soft
affiliation matrix ``Q = sigmoid(logits)`` has entries in (0, 1), the graph
part is ``C = Q diag(r) Q^T`` and the signal part is ``P = Q F``.  ``C`` is
never formed for large graphs, only rectangular blocks of it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.special import expit, logit

DEFAULT_RIDGE = 1e-8
DENSE_LIMIT = 4096

ICG_MAGIC = b"ICGM"
ICG_VERSION = 1
_HEADER = struct.Struct("<4sIqqq")  # magic, version, n, k, d


class SingularAffiliationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Icg:
    logits: np.ndarray
    r: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64, ndmin=2)
        r = np.array(self.r, dtype=np.float64).reshape(-1)
        f = np.array(self.f, dtype=np.float64, ndmin=2)
        n, k = logits.shape
        if r.shape != (k,):
            raise ValueError(f"r must have length K={k}, got {r.shape}")
        if f.shape[0] != k:
            raise ValueError(f"f must be K x D with K={k}, got {f.shape}")
        for arr in (logits, r, f):
            arr.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "f", f)

    @property
    def n(self) -> int:
        return self.logits.shape[0]

    @property
    def k(self) -> int:
        return self.logits.shape[1]

    @property
    def d(self) -> int:
        return self.f.shape[1]

    @property
    def q(self) -> np.ndarray:
        return materialize_q(self)

    @classmethod
    def from_affiliations(cls, q: np.ndarray, r, f=None, eps: float = 1e-6) -> "Icg":
        """Inverse-sigmoid a soft affiliation matrix; entries clamped to [eps, 1-eps]."""
        q = np.asarray(q, dtype=np.float64)
        f = np.zeros((q.shape[1], 0)) if f is None else f
        return cls(logit(np.clip(q, eps, 1.0 - eps)), r, f)

    def replace(self, **changes) -> "Icg":
        fields = {"logits": self.logits, "r": self.r, "f": self.f}
        fields.update(changes)
        return Icg(**fields)


def materialize_q(icg: Icg) -> np.ndarray:
    return expit(icg.logits)


def synthesize(q: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Community space to node space: F -> Q F."""
    if q.shape[1] != f.shape[0]:
        raise ValueError(f"shape mismatch: Q is {q.shape}, F is {f.shape}")
    return q @ f


class Analyzer:
    """Cached solver for (Q^T Q + ridge I) X = Q^T S with a fixed Q.

    Q is fixed during ICG-NN training, so the Cholesky factor is computed once.
    """

    def __init__(self, q: np.ndarray, ridge: float = DEFAULT_RIDGE):
        n, k = q.shape
        if k > n:
            raise ValueError(f"analysis needs K <= N, got K={k}, N={n}")
        self.q = q
        self.ridge = ridge
        gram = q.T @ q
        if ridge:
            gram = gram + ridge * np.eye(k)
        try:
            self._factor = sla.cho_factor(gram, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise SingularAffiliationError(
                "Q^T Q is singular; pass a positive ridge to analyze"
            ) from None
        if ridge == 0.0:
            # cho_factor accepts numerically singular matrices silently
            diag = np.abs(np.diag(self._factor[0]))
            if k and diag.min() <= 1e-12 * max(diag.max(), 1.0):
                raise SingularAffiliationError(
                    "Q^T Q is numerically singular; pass a positive ridge to analyze"
                )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(Q^T Q + ridge I)^{-1} rhs for a K x D right-hand side."""
        return sla.cho_solve(self._factor, rhs, check_finite=False)

    def analyze(self, s: np.ndarray) -> np.ndarray:
        return self.solve(self.q.T @ s)

    def analyze_adjoint(self, grad_f: np.ndarray) -> np.ndarray:
        """Pull a gradient on Q^+ S back to S: Q (Q^T Q + ridge I)^{-1} grad_f."""
        return self.q @ self.solve(grad_f)


def analyze(q: np.ndarray, s: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Node space to community space: S -> Q^+ S via a ridge normal-equation solve."""
    if q.shape[0] != s.shape[0]:
        raise ValueError(f"shape mismatch: Q is {q.shape}, S is {s.shape}")
    return Analyzer(q, ridge).analyze(s)


def project(q: np.ndarray, s: np.ndarray, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Q Q^+ S, the projection of S on the span of the communities."""
    return synthesize(q, analyze(q, s, ridge))


def icg_edge_block(icg: Icg, rows, cols) -> np.ndarray:
    """Dense block C[rows, cols] = Q[rows] diag(r) Q[cols]^T."""
    qr = expit(icg.logits[rows])
    qc = expit(icg.logits[cols])
    return (qr * icg.r) @ qc.T


def dense_c(icg: Icg) -> np.ndarray:
    if icg.n > DENSE_LIMIT:
        raise MemoryError(f"refusing to densify C for N={icg.n} > {DENSE_LIMIT}; use icg_edge_block")
    return icg_edge_block(icg, slice(None), slice(None))


# ---------------------------------------------------------------------------
# persistence


def save_icg(icg: Icg, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ICG_MAGIC, ICG_VERSION, icg.n, icg.k, icg.d))
        for arr in (icg.logits, icg.r, icg.f):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_icg(path: str | Path) -> Icg:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated ICG snapshot")
        magic, version, n, k, d = _HEADER.unpack(head)
        if magic != ICG_MAGIC:
            raise ValueError(f"not an ICG snapshot (magic {magic!r})")
        if version != ICG_VERSION:
            raise ValueError(f"unsupported ICG snapshot version {version}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.size != n * k + k + k * d:
        raise ValueError("ICG snapshot body has the wrong size")
    logits = body[: n * k].reshape(n, k)
    r = body[n * k : n * k + k]
    f = body[n * k + k :].reshape(k, d)
    return Icg(logits.copy(), r.copy(), f.copy())


def export_summary(icg: Icg, top: int = 10) -> dict:
    """JSON-friendly view: magnitudes and the most strongly affiliated nodes per community."""
    q = materialize_q(icg)
    communities = []
    for j in range(icg.k):
        order = np.argsort(-q[:, j], kind="stable")[:top]
        communities.append(
            {
                "index": j,
                "r": float(icg.r[j]),
                "mean_affiliation": float(q[:, j].mean()),
                "top_nodes": [int(i) for i in order],
                "top_affiliations": [float(q[i, j]) for i in order],
            }
        )
    return {"n": icg.n, "k": icg.k, "d": icg.d, "communities": communities}


def write_summary(icg: Icg, path: str | Path, top: int = 10) -> None:
    Path(path).write_text(json.dumps(export_summary(icg, top), indent=2))
