"""ICG neural networks with hand-written forward and backward passes.

Two layer types operate on a fixed affiliation matrix Q (N x K):

ICG-NN::

    H[l+1] = act(H[l] W1 + Q Theta(F[l]) W2 + b),   F[0] = Q^+ S,  F[l+1] = Q^+ H[l]

ICG_u-NN::

    H[l+1] = act(H[l] Ws + Q F[l] W + b)            F[l] learned directly

Theta is a two-layer MLP in community space whose hidden nonlinearity is
the network activation (ReLU by default; with the identity activation the
whole network is linear in S).  A linear readout maps
H[L] to class logits.  Products are ordered so no layer touches the edge
set and each costs O(N K D + K D^2 + N D D').  Q is a constant: gradients
flow into every weight and into the learned F[l], never into Q.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .model import DEFAULT_RIDGE, Analyzer
from .optim import Adam

ARCHS = ("icgnn", "icgnn-u", "mlp")


class StaleCacheError(RuntimeError):
    pass


@dataclass
class IcgNnParams:
    arch: str
    dims: list[int]
    n_classes: int
    activation: str = "relu"
    use_bias: bool = True
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    @property
    def layers(self) -> int:
        return len(self.dims) - 1

    def bump(self) -> None:
        self.version += 1

    def copy(self) -> "IcgNnParams":
        return IcgNnParams(
            self.arch, list(self.dims), self.n_classes, self.activation, self.use_bias,
            {k: v.copy() for k, v in self.weights.items()}, self.version,
        )

    def save(self, path) -> None:
        meta = np.array([self.arch, self.activation, str(self.use_bias)])
        np.savez(
            path,
            __meta__=meta,
            __dims__=np.array(self.dims + [self.n_classes]),
            **self.weights,
        )

    @classmethod
    def load(cls, path) -> "IcgNnParams":
        with np.load(path, allow_pickle=False) as z:
            arch, act, bias = (str(x) for x in z["__meta__"])
            dims = [int(x) for x in z["__dims__"]]
            weights = {k: z[k].copy() for k in z.files if not k.startswith("__")}
        return cls(arch, dims[:-1], dims[-1], act, bias == "True", weights)


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(
    arch: str,
    in_dim: int,
    hidden: int,
    layers: int,
    n_classes: int,
    k: int,
    seed: int = 0,
    activation: str = "relu",
    use_bias: bool = True,
) -> IcgNnParams:
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    if layers < 1 or hidden < 1:
        raise ValueError("need at least one layer of positive width")
    rng = np.random.default_rng(seed)
    dims = [in_dim] + [hidden] * layers
    w: dict[str, np.ndarray] = {}
    for l in range(layers):
        d_in, d_out = dims[l], dims[l + 1]
        w[f"b{l}"] = np.zeros(d_out)
        if arch == "icgnn":
            f_dim = dims[max(l - 1, 0)]
            w[f"w1_{l}"] = _glorot(rng, d_in, d_out)
            w[f"w2_{l}"] = _glorot(rng, d_in, d_out)
            w[f"t1w_{l}"] = _glorot(rng, f_dim, d_in)
            w[f"t1b_{l}"] = np.zeros(d_in)
            w[f"t2w_{l}"] = _glorot(rng, d_in, d_in)
            w[f"t2b_{l}"] = np.zeros(d_in)
        else:
            w[f"ws_{l}"] = _glorot(rng, d_in, d_out)
            if arch == "icgnn-u":
                w[f"w_{l}"] = _glorot(rng, d_in, d_out)
                w[f"f_{l}"] = _glorot(rng, k, d_in)
    w["wo"] = _glorot(rng, dims[-1], n_classes)
    w["bo"] = np.zeros(n_classes)
    return IcgNnParams(arch, dims, n_classes, activation, use_bias, w)


# ---------------------------------------------------------------------------
# forward


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else z


def _act_grad(z, kind):
    return (z > 0).astype(z.dtype) if kind == "relu" else np.ones_like(z)


@dataclass
class Cache:
    version: int
    arch: str
    hs: list  # node representations after dropout, hs[0] = S
    zs: list  # pre-activations
    masks: list  # dropout scale masks or None
    extras: list  # per-layer community-path intermediates
    q: np.ndarray
    analyzer: Analyzer | None


def _check(params: IcgNnParams, q: np.ndarray, s: np.ndarray) -> None:
    if s.shape[0] != q.shape[0]:
        raise ValueError(f"Q has {q.shape[0]} rows but S has {s.shape[0]}")
    if s.shape[1] != params.dims[0]:
        raise ValueError(f"S has {s.shape[1]} channels, network expects {params.dims[0]}")


def _forward(params, q, s, analyzer=None, ridge=DEFAULT_RIDGE, dropout=0.0, rng=None):
    _check(params, q, s)
    w = params.weights
    act = params.activation
    if params.arch == "icgnn" and analyzer is None:
        analyzer = Analyzer(q, ridge)
    h = s
    hs, zs, masks, extras = [s], [], [], []
    for l in range(params.layers):
        if params.arch == "icgnn":
            src = hs[max(l - 1, 0)]
            f_l = analyzer.analyze(src)
            t1 = f_l @ w[f"t1w_{l}"]
            if params.use_bias:
                t1 = t1 + w[f"t1b_{l}"]
            u1 = _act(t1, act)
            theta = u1 @ w[f"t2w_{l}"]
            if params.use_bias:
                theta = theta + w[f"t2b_{l}"]
            z = h @ w[f"w1_{l}"] + q @ (theta @ w[f"w2_{l}"])
            extras.append((f_l, t1, u1, theta))
        elif params.arch == "icgnn-u":
            z = h @ w[f"ws_{l}"] + q @ (w[f"f_{l}"] @ w[f"w_{l}"])
            extras.append(None)
        else:
            z = h @ w[f"ws_{l}"]
            extras.append(None)
        if params.use_bias:
            z = z + w[f"b{l}"]
        h = _act(z, act)
        mask = None
        if dropout > 0.0:
            mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask
        zs.append(z)
        masks.append(mask)
        hs.append(h)
    logits = h @ w["wo"]
    if params.use_bias:
        logits = logits + w["bo"]
    return logits, Cache(params.version, params.arch, hs, zs, masks, extras, q, analyzer)


def forward_icgnn(params: IcgNnParams, q: np.ndarray, s: np.ndarray, **kw):
    if params.arch != "icgnn":
        raise ValueError("parameters are not for an ICG-NN")
    return _forward(params, q, s, **kw)


def forward_icgnn_u(params: IcgNnParams, q: np.ndarray, s: np.ndarray, **kw):
    if params.arch not in ("icgnn-u", "mlp"):
        raise ValueError("parameters are not for an ICG_u-NN")
    return _forward(params, q, s, **kw)


def forward(params: IcgNnParams, q: np.ndarray, s: np.ndarray, **kw):
    return _forward(params, q, s, **kw)


# ---------------------------------------------------------------------------
# backward


def backward(params: IcgNnParams, cache: Cache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradient with respect to the logits."""
    if cache.version != params.version or cache.arch != params.arch:
        raise StaleCacheError("cache was produced by a different parameter state; rerun forward")
    w = params.weights
    q = cache.q
    act = params.activation
    grads = {k: np.zeros_like(v) for k, v in w.items()}
    L = params.layers
    d_hs = [None] * (L + 1)

    grads["wo"] = cache.hs[L].T @ grad_logits
    if params.use_bias:
        grads["bo"] = grad_logits.sum(axis=0)
    d_hs[L] = grad_logits @ w["wo"].T

    for l in reversed(range(L)):
        dh = d_hs[l + 1]
        if cache.masks[l] is not None:
            dh = dh * cache.masks[l]
        dz = dh * _act_grad(cache.zs[l], act)
        h = cache.hs[l]
        if params.use_bias:
            grads[f"b{l}"] = dz.sum(axis=0)
        qt_dz = q.T @ dz
        if params.arch == "icgnn":
            f_l, t1, u1, theta = cache.extras[l]
            grads[f"w1_{l}"] = h.T @ dz
            dh_prev = dz @ w[f"w1_{l}"].T
            grads[f"w2_{l}"] = theta.T @ qt_dz
            d_theta = qt_dz @ w[f"w2_{l}"].T
            grads[f"t2w_{l}"] = u1.T @ d_theta
            d_t1 = (d_theta @ w[f"t2w_{l}"].T) * _act_grad(t1, act)
            grads[f"t1w_{l}"] = f_l.T @ d_t1
            if params.use_bias:
                grads[f"t1b_{l}"] = d_t1.sum(axis=0)
                grads[f"t2b_{l}"] = d_theta.sum(axis=0)
            d_f = d_t1 @ w[f"t1w_{l}"].T
            src = max(l - 1, 0)
            if src > 0:
                back = cache.analyzer.analyze_adjoint(d_f)
                d_hs[src] = back if d_hs[src] is None else d_hs[src] + back
        else:
            grads[f"ws_{l}"] = h.T @ dz
            dh_prev = dz @ w[f"ws_{l}"].T
            if params.arch == "icgnn-u":
                grads[f"w_{l}"] = w[f"f_{l}"].T @ qt_dz
                grads[f"f_{l}"] = qt_dz @ w[f"w_{l}"].T
        if l > 0:
            d_hs[l] = dh_prev if d_hs[l] is None else d_hs[l] + dh_prev
    return grads


# ---------------------------------------------------------------------------
# loss and metrics


def softmax_xent(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over masked rows and its gradient with respect to the logits."""
    idx = np.flatnonzero(mask)
    z = logits[idx]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = labels[idx]
    loss = -float(logp[np.arange(idx.size), y].mean())
    grad = np.zeros_like(logits)
    p = np.exp(logp)
    p[np.arange(idx.size), y] -= 1.0
    grad[idx] = p / idx.size
    return loss, grad


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    return float(np.mean(np.argmax(logits[idx], axis=1) == labels[idx]))


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney estimate of ROC AUC; ties count one half."""
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "icgnn-u"
    layers: int = 3
    hidden: int = 64
    lr: float = 0.003
    epochs: int = 3000
    dropout: float = 0.0
    seed: int = 0
    patience: int | None = 200
    ridge: float = DEFAULT_RIDGE
    activation: str = "relu"
    use_bias: bool = True

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=bool)
        self.val = np.asarray(self.val, dtype=bool)
        self.test = np.asarray(self.test, dtype=bool)
        if (self.train & self.val).any() or (self.train & self.test).any() or (self.val & self.test).any():
            raise ValueError("train/val/test masks must be disjoint")

    @classmethod
    def random(cls, n: int, train: float, val: float, seed: int) -> "Split":
        perm = np.random.default_rng(seed).permutation(n)
        n_tr, n_va = int(round(train * n)), int(round(val * n))
        masks = [np.zeros(n, dtype=bool) for _ in range(3)]
        masks[0][perm[:n_tr]] = True
        masks[1][perm[n_tr : n_tr + n_va]] = True
        masks[2][perm[n_tr + n_va :]] = True
        return cls(*masks)

    def to_json(self) -> dict:
        return {k: np.flatnonzero(getattr(self, k)).tolist() for k in ("train", "val", "test")}

    @classmethod
    def from_json(cls, obj: dict, n: int) -> "Split":
        masks = []
        for k in ("train", "val", "test"):
            m = np.zeros(n, dtype=bool)
            m[np.asarray(obj[k], dtype=np.int64)] = True
            masks.append(m)
        return cls(*masks)


def _evaluate(logits, labels, split, binary):
    out = {}
    for name in ("train", "val", "test"):
        mask = getattr(split, name)
        if not mask.any():
            continue
        out[f"{name}_acc"] = accuracy(logits, labels, mask)
        if binary:
            z = logits[mask]
            out[f"{name}_auc"] = roc_auc(z[:, 1] - z[:, 0], labels[mask])
    return out


def train_node_classifier(
    q: np.ndarray,
    s: np.ndarray,
    labels: np.ndarray,
    split: Split,
    cfg: TrainConfig,
) -> tuple[IcgNnParams, dict]:
    """Full-batch Adam on masked cross-entropy with early stopping on validation.

    ``q`` is the fixed affiliation matrix of a fitted ICG.  The returned
    parameters are those of the best validation epoch.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not split.train.any():
        raise ValueError("training mask is empty")
    if np.unique(labels[split.train]).size < 2 and np.unique(labels).size > 1:
        raise ValueError("training mask contains a single class")
    n_classes = max(int(labels.max()) + 1, 2)
    binary = n_classes == 2
    if s.shape[1] == 0:
        s = np.ones((s.shape[0], 1))
    params = init_params(
        cfg.arch, s.shape[1], cfg.hidden, cfg.layers, n_classes, q.shape[1], cfg.seed,
        cfg.activation, cfg.use_bias,
    )
    analyzer = Analyzer(q, cfg.ridge) if cfg.arch == "icgnn" else None
    opt = Adam(cfg.lr)
    rng = np.random.default_rng(cfg.seed + 1)
    key = "val_acc" if split.val.any() else "train_acc"

    logits, _ = _forward(params, q, s, analyzer)
    history = [_evaluate(logits, labels, split, binary)]
    best = (history[0].get(key, 0.0), 0, params.copy())
    epoch_time = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        logits, cache = _forward(params, q, s, analyzer, dropout=cfg.dropout, rng=rng)
        loss, d_logits = softmax_xent(logits, labels, split.train)
        grads = backward(params, cache, d_logits)
        opt.step(params.weights, grads)
        params.bump()
        epoch_time.append(time.perf_counter() - t0)
        eval_logits, _ = _forward(params, q, s, analyzer)
        stats = _evaluate(eval_logits, labels, split, binary)
        stats["loss"] = loss
        history.append(stats)
        if stats.get(key, 0.0) > best[0]:
            best = (stats[key], epoch, params.copy())
        if cfg.patience and epoch - best[1] >= cfg.patience:
            break

    params = best[2]
    logits, _ = _forward(params, q, s, analyzer)
    final = _evaluate(logits, labels, split, binary)
    metrics = {
        "best_epoch": best[1],
        "epochs_run": len(history) - 1,
        "final": final,
        "history": history,
        "epoch_time": epoch_time,
    }
    return params, metrics
