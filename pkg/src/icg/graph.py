"""Graph-signals: a symmetric sparse adjacency paired with a dense node signal.

Files handled here:

* edge lists, whitespace separated ``i j [w]`` lines with 0-based ids and
  ``#`` comments;
* feature CSVs, one row per node;
* a binary snapshot (``.gsig``) for fast reload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

SNAPSHOT_MAGIC = b"GSIG"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIqqq")  # magic, version, n, d, nnz


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent graph input."""


def _canonical_csr(a: sp.spmatrix, n: int) -> sp.csr_matrix:
    a = sp.csr_matrix(a, shape=(n, n), dtype=np.float64, copy=True)
    a.sum_duplicates()
    a.eliminate_zeros()
    a.sort_indices()
    return a


@dataclass(frozen=True, eq=False)
class GraphSignal:
    adjacency: sp.csr_matrix
    signal: np.ndarray

    def __post_init__(self):
        a = _canonical_csr(self.adjacency, self.adjacency.shape[0])
        s = np.ascontiguousarray(self.signal, dtype=np.float64)
        n = a.shape[0]
        if a.shape != (n, n):
            raise GraphFormatError(f"adjacency must be square, got {a.shape}")
        if s.ndim != 2 or s.shape[0] != n:
            raise GraphFormatError(f"signal must be {n}xD, got {s.shape}")
        if a.nnz and (a.data.min() < 0.0 or a.data.max() > 1.0 or not np.isfinite(a.data).all()):
            raise GraphFormatError("adjacency values must lie in [0, 1]")
        if s.size and (not np.isfinite(s).all() or s.min() < 0.0 or s.max() > 1.0):
            raise GraphFormatError("signal values must lie in [0, 1]")
        diff = a - a.T
        if diff.nnz and np.abs(diff.data).max() != 0.0:
            raise GraphFormatError("adjacency must be symmetric")
        a.data.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "signal", s)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.signal.shape[1]

    @property
    def nnz(self) -> int:
        """Stored directed entries; (i, j) and (j, i) both count."""
        return int(self.adjacency.nnz)

    def has_self_loops(self) -> bool:
        return bool(np.any(self.adjacency.diagonal() != 0))

    def __eq__(self, other):
        if not isinstance(other, GraphSignal):
            return NotImplemented
        a, b = self.adjacency, other.adjacency
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and np.array_equal(self.signal, other.signal)
        )


@dataclass(frozen=True)
class NodeSample:
    """Node ids drawn i.i.d. uniformly with repetition."""

    indices: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("a node sample needs at least one index")
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @classmethod
    def draw(cls, n: int, m: int, seed: int | np.random.Generator) -> "NodeSample":
        rng = np.random.default_rng(seed)
        return cls(rng.integers(0, n, size=m), seed if isinstance(seed, int) else None)

    def validate(self, n: int) -> None:
        if self.indices.min() < 0 or self.indices.max() >= n:
            raise ValueError(f"sample indices must lie in [0, {n})")


def from_dense(a: np.ndarray, signal: np.ndarray | None = None) -> GraphSignal:
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    s = np.zeros((n, 0)) if signal is None else signal
    return GraphSignal(sp.csr_matrix(a), s)


def from_edges(
    n: int,
    rows: np.ndarray,
    cols: np.ndarray,
    weights: np.ndarray | None = None,
    signal: np.ndarray | None = None,
) -> GraphSignal:
    """Build a graph from undirected pairs; each pair is stored in both directions."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    w = np.ones(rows.size) if weights is None else np.asarray(weights, dtype=np.float64)
    off = rows != cols
    r = np.concatenate([rows, cols[off]])
    c = np.concatenate([cols, rows[off]])
    v = np.concatenate([w, w[off]])
    a = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    return GraphSignal(a, np.zeros((n, 0)) if signal is None else signal)


def degree(g: GraphSignal) -> float:
    """deg(A) = N^2 ||A||_F^2 = sum of squared entries."""
    return float(np.dot(g.adjacency.data, g.adjacency.data))


# ---------------------------------------------------------------------------
# generators


def gen_erdos_renyi(n: int, p: float, seed: int, d: int = 0) -> GraphSignal:
    """ER(n, p) without self-loops. ``d > 0`` attaches U[0, 1] features."""
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ValueError("need n >= 1 and 0 <= p <= 1")
    rng = np.random.default_rng(seed)
    # row-by-row keeps memory at O(E) instead of O(n^2) for the pair list
    rows, cols = [], []
    for i in range(n - 1):
        hits = np.flatnonzero(rng.random(n - i - 1) < p)
        rows.append(np.full(hits.size, i, dtype=np.int64))
        cols.append(hits + i + 1)
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    s = rng.random((n, d)) if d else None
    return from_edges(n, r, c, signal=s)


def gen_sbm(
    block_sizes: Sequence[int],
    p_matrix: Sequence[Sequence[float]],
    seed: int,
    d: int = 0,
) -> GraphSignal:
    """Stochastic block model; pair (i, j) in blocks (a, b) joins w.p. p[a][b]."""
    sizes = [int(b) for b in block_sizes]
    if not sizes:
        raise ValueError("block list must not be empty")
    p = np.asarray(p_matrix, dtype=np.float64)
    if p.shape != (len(sizes), len(sizes)) or not np.allclose(p, p.T, atol=0, rtol=0):
        raise ValueError("p_matrix must be a symmetric len(blocks) x len(blocks) matrix")
    if p.min() < 0 or p.max() > 1:
        raise ValueError("block probabilities must lie in [0, 1]")
    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)
    rows, cols = [], []
    for i in range(n - 1):
        probs = p[labels[i], labels[i + 1 :]]
        hits = np.flatnonzero(rng.random(n - i - 1) < probs)
        rows.append(np.full(hits.size, i, dtype=np.int64))
        cols.append(hits + i + 1)
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    s = rng.random((n, d)) if d else None
    return from_edges(n, r, c, signal=s)


def sbm_labels(block_sizes: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(block_sizes)), block_sizes)


def sample_subgraph(g: GraphSignal, sample: NodeSample) -> GraphSignal:
    """Induced graph on the sampled ids: a'_ij = a_{n_i n_j}, s'_i = s_{n_i}."""
    sample.validate(g.n)
    idx = sample.indices
    sub = g.adjacency[idx][:, idx]
    return GraphSignal(sub, g.signal[idx])


# ---------------------------------------------------------------------------
# text formats


def read_edge_list(
    path: str | Path,
    n: int | None = None,
    allow_self_loops: bool = False,
) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphFormatError(f"{path}:{lineno}: expected 'i j [w]'")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
            if i < 0 or j < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node id")
            if not np.isfinite(w):
                raise GraphFormatError(f"{path}:{lineno}: non-finite weight")
            if not 0.0 <= w <= 1.0:
                raise GraphFormatError(f"{path}:{lineno}: weight {w} outside [0, 1]")
            if i == j and not allow_self_loops:
                raise GraphFormatError(f"{path}:{lineno}: self-loop ({i}, {i})")
            rows.append(i)
            cols.append(j)
            vals.append(w)
    max_id = max(max(rows, default=-1), max(cols, default=-1))
    if n is None:
        n = max_id + 1
    elif max_id >= n:
        raise GraphFormatError(f"node id {max_id} >= declared N={n}")

    seen: dict[tuple[int, int], float] = {}
    for i, j, w in zip(rows, cols, vals):
        key = (min(i, j), max(i, j))
        prev = seen.get(key)
        if prev is not None and prev != w:
            raise GraphFormatError(f"edge {key} listed with conflicting weights {prev} and {w}")
        seen[key] = w
    if seen:
        keys = np.array(list(seen.keys()), dtype=np.int64)
        w = np.array(list(seen.values()))
        return from_edges(n, keys[:, 0], keys[:, 1], w).adjacency
    return sp.csr_matrix((n, n))


def read_features(path: str | Path, n: int | None = None, normalize: bool = False) -> np.ndarray:
    s = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if n is not None and s.shape[0] != n:
        raise GraphFormatError(f"feature file has {s.shape[0]} rows, expected {n}")
    if not np.isfinite(s).all():
        raise GraphFormatError("non-finite feature value")
    if normalize:
        lo, hi = s.min(axis=0), s.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        s = (s - lo) / span
    elif s.size and (s.min() < 0 or s.max() > 1):
        raise GraphFormatError("features outside [0, 1]; pass normalize=True to rescale")
    return s


def load_graph_signal(
    edge_path: str | Path,
    feature_path: str | Path | None = None,
    n: int | None = None,
    normalize: bool = False,
    allow_self_loops: bool = False,
) -> GraphSignal:
    n_declared = n
    a = read_edge_list(edge_path, n=n, allow_self_loops=allow_self_loops)
    n = a.shape[0]
    if feature_path is not None:
        s = read_features(feature_path, normalize=normalize)
        if n_declared is None and s.shape[0] > n:
            # trailing isolated nodes only show up in the feature file
            n = s.shape[0]
            a = sp.csr_matrix((a.data, a.indices, np.pad(a.indptr, (0, n - a.shape[0]), mode="edge")), shape=(n, n))
        if s.shape[0] != n:
            raise GraphFormatError(f"feature file has {s.shape[0]} rows, graph has {n} nodes")
    else:
        s = np.zeros((n, 0))
    return GraphSignal(a, s)


def write_edge_list(g: GraphSignal, path: str | Path) -> None:
    coo = sp.triu(g.adjacency, k=0).tocoo()
    with open(path, "w") as fh:
        fh.write(f"# n={g.n}\n")
        for i, j, w in zip(coo.row, coo.col, coo.data):
            if w == 1.0:
                fh.write(f"{i} {j}\n")
            else:
                fh.write(f"{i} {j} {float(w)!r}\n")


# ---------------------------------------------------------------------------
# binary snapshot


def save_snapshot(g: GraphSignal, path: str | Path) -> None:
    a = g.adjacency
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, g.d, a.nnz))
        fh.write(np.ascontiguousarray(a.indptr, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(a.indices, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(a.data, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(g.signal, dtype="<f8").tobytes())


def load_snapshot(path: str | Path) -> GraphSignal:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise GraphFormatError("truncated snapshot header")
        magic, version, n, d, nnz = _HEADER.unpack(head)
        if magic != SNAPSHOT_MAGIC:
            raise GraphFormatError(f"not a graph snapshot (magic {magic!r})")
        if version != SNAPSHOT_VERSION:
            raise GraphFormatError(f"unsupported snapshot version {version}")

        def take(count, dtype):
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise GraphFormatError("truncated snapshot body")
            return np.frombuffer(buf, dtype=dtype).copy()

        indptr = take(n + 1, "<i8")
        indices = take(nnz, "<i8")
        data = take(nnz, "<f8")
        signal = take(n * d, "<f8").reshape(n, d)
    a = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    return GraphSignal(a, signal)
