"""Desk-scale experiment protocols behind the ``icg`` subcommands.

Every command returns a JSON-serializable report.  Wall-clock numbers and
machine info live under ``timings`` and ``machine`` so that two runs with
the same seeds agree on everything else.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np
from scipy.special import expit

from .fit import FitConfig, fit, init_random
from .graph import GraphSignal, gen_erdos_renyi, gen_sbm, sbm_labels
from .model import Icg
from .nn import Split, TrainConfig, init_params, forward, train_node_classifier
from .norms import cut_norm_heuristic
from .sgd import SgdConfig, sgd_fit

TIMING_KEYS = ("timings", "machine")


def machine_info() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "cpus": os.cpu_count(),
    }


def new_report(command: str, config: dict, seeds: list[int]) -> dict:
    return {
        "command": command,
        "config": config,
        "seeds": list(seeds),
        "runs": [],
        "aggregate": {},
        "assertions": {},
        "passed": True,
        "notes": [],
        "timing_dependent": False,
        "machine": machine_info(),
        "timings": {},
    }


def finish(report: dict) -> dict:
    report["passed"] = all(bool(v) for v in report["assertions"].values())
    return report


def strip_timings(report: dict) -> dict:
    """The part of a report that must be identical across reruns."""
    out = {k: v for k, v in report.items() if k not in TIMING_KEYS}
    if report.get("timing_dependent"):
        out.pop("passed", None)
        out.pop("assertions", None)
    return out


def load_schema() -> dict:
    return json.loads(resources.files("icg").joinpath("report_schema.json").read_text())


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, load_schema())


def write_csv(rows: list[dict], path) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def loglog_slope(xs, ys) -> float | None:
    if len(xs) < 2:
        return None
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def count_inversions(values) -> int:
    """Places where a supposedly non-increasing sequence goes up."""
    return int(sum(b > a for a, b in zip(values, values[1:])))


# ---------------------------------------------------------------------------
# regularity bound check


def cmd_bound_check(
    n: int = 500,
    p: float = 0.5,
    k_list=(3, 6, 12, 24, 48),
    restarts: int = 128,
    seed: int = 0,
    fit_restarts: int = 3,
    epochs: int = 1500,
    lr: float = 0.05,
    r_param: int = 2,
) -> dict:
    """Residual cut norm of fitted ICGs against the constructive regularity bound.

    For each K the reported fit starts from the eigenvector initialization;
    ``fit_restarts - 1`` extra fits from random initializations give the best
    loss used to estimate the optimality gap delta.
    """
    cfg = dict(n=n, p=p, k_list=list(k_list), restarts=restarts, fit_restarts=fit_restarts,
               epochs=epochs, lr=lr, r_param=r_param)
    report = new_report("bound-check", cfg, [seed])
    g = gen_erdos_renyi(n, p, seed)
    e = float(np.dot(g.adjacency.data, g.adjacency.data))  # E' = deg(A)
    if e == 0:
        raise ValueError("empty graph: nothing to bound")
    fit_time = {}
    for k in k_list:
        t0 = time.perf_counter()
        losses, models = [], []
        for j in range(fit_restarts):
            fc = FitConfig(k=k, lam=0.0, lr=lr, epochs=epochs, init="eigen" if j == 0 else "random", seed=seed + j)
            icg, rep = fit(g, fc)
            losses.append(rep.final_graph_loss)
            models.append(icg)
        fit_time[k] = time.perf_counter() - t0
        best = min(losses)
        delta = max((losses[0] - best) / best, 0.0) if best > 0 else 0.0
        frob = math.sqrt(max(losses[0], 0.0))
        est = cut_norm_heuristic((g.adjacency, models[0]), e, restarts=restarts, seed=seed + 1)
        theorem = 1.5 * n / math.sqrt(e) * math.sqrt(r_param / k + delta)
        report["runs"].append({
            "k": k,
            "seed": seed,
            "fit_losses": losses,
            "delta": delta,
            "frobenius_error": frob,
            "cut_norm": est.value,
            "cut_norm_detail": est.to_json(),
            "cs_bound": (n * n / e) * frob,
            "weighted_frob_bound": math.sqrt(n * n / e) * frob,
            "theorem_bound": theorem,
        })
    runs = report["runs"]
    cuts = [r["cut_norm"] for r in runs]
    report["aggregate"] = {"cut_norm_curve": cuts, "frobenius_curve": [r["frobenius_error"] for r in runs],
                           "inversions": count_inversions(cuts)}
    report["assertions"] = {
        "cut_norm_non_increasing": count_inversions(cuts) <= 1,
        "below_cs_bound": all(r["cut_norm"] <= r["cs_bound"] for r in runs),
        "below_weighted_frob_bound": all(r["cut_norm"] <= r["weighted_frob_bound"] for r in runs),
        "below_theorem_bound": all(r["cut_norm"] <= r["theorem_bound"] for r in runs),
    }
    report["notes"].append(
        "cut norms are local-search lower bounds, so estimate <= bound is weaker than the theorem"
    )
    report["timings"] = {"fit_seconds": {str(k): v for k, v in fit_time.items()}}
    return finish(report)


# ---------------------------------------------------------------------------
# runtime scaling


def _message_passing_forward(a, h, weights):
    """Mean-aggregation one-hop layers over the stored edges: O(E D) each."""
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = 1.0 / np.maximum(deg, 1.0)
    for w_self, w_nb in weights[:-1]:
        h = np.maximum(h @ w_self + (inv[:, None] * (a @ h)) @ w_nb, 0.0)
    return h @ weights[-1]


def _time_min(fn, reps):
    fn()  # warm caches and allocator before timing
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), max(times)


def cmd_runtime_bench(
    n_list=(500, 1000, 1500, 2000, 3000, 4000),
    mode: str = "dense",
    k: int = 100,
    reps: int = 10,
    seed: int = 0,
    in_dim: int = 128,
    hidden: int = 128,
    layers: int = 3,
    out_dim: int = 5,
) -> dict:
    """Forward wall-time of ICG_u-NN against edge-based message passing."""
    if mode not in ("dense", "sparse"):
        raise ValueError("mode must be dense or sparse")
    cfg = dict(n_list=list(n_list), mode=mode, k=k, reps=reps, in_dim=in_dim,
               hidden=hidden, layers=layers, out_dim=out_dim)
    report = new_report("bench", cfg, [seed])
    report["timing_dependent"] = True
    raw = []
    for n in n_list:
        p = 0.5 if mode == "dense" else min(50.0 / n, 1.0)
        g = gen_erdos_renyi(n, p, seed)
        rng = np.random.default_rng(seed)
        s = rng.random((n, in_dim))
        q = expit(rng.standard_normal((n, k)))
        params = init_params("icgnn-u", in_dim, hidden, layers, out_dim, k, seed=seed)
        dims = [in_dim] + [hidden] * layers
        mp_w = [(rng.standard_normal((dims[i], dims[i + 1])) / math.sqrt(dims[i]),
                 rng.standard_normal((dims[i], dims[i + 1])) / math.sqrt(dims[i])) for i in range(layers)]
        mp_w.append(rng.standard_normal((hidden, out_dim)))
        a = g.adjacency
        t_icg, t_icg_max = _time_min(lambda: forward(params, q, s), reps)
        t_mp, t_mp_max = _time_min(lambda: _message_passing_forward(a, s, mp_w), reps)
        raw.append({"n": n, "edges": g.nnz, "icg_u_nn": t_icg, "message_passing": t_mp,
                    "jitter": max(t_icg_max / t_icg, t_mp_max / t_mp)})
        report["runs"].append({"n": n, "p": p, "seed": seed, "edges": g.nnz})
    ns = [r["n"] for r in raw]
    slopes = {
        "icg_u_nn": loglog_slope(ns, [r["icg_u_nn"] for r in raw]),
        "message_passing": loglog_slope(ns, [r["message_passing"] for r in raw]),
    }
    if slopes["icg_u_nn"] is not None:
        lo_icg, hi_icg = (0.8, 1.2) if mode == "dense" else (0.8, 1.3)
        lo_mp, hi_mp = (1.7, 2.3) if mode == "dense" else (0.8, 1.3)
        report["assertions"] = {
            "icg_u_nn_slope": lo_icg <= slopes["icg_u_nn"] <= hi_icg,
            "message_passing_slope": lo_mp <= slopes["message_passing"] <= hi_mp,
        }
    else:
        report["notes"].append("single n: slopes undefined, raw timings only")
    flagged = [r["n"] for r in raw if r["jitter"] > 3.0]
    if flagged:
        report["notes"].append(f"timing jitter above 3x at n={flagged}; rerun on a quieter machine")
    report["timings"] = {"raw": raw, "slopes": slopes, "jitter_flagged": flagged}
    return finish(report)


# ---------------------------------------------------------------------------
# learning pipelines on labeled graphs


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 8
    fit_epochs: int = 300
    fit_lr: float = 0.05
    lam: float = 1.0
    sgd_steps: int = 600
    sgd_lr: float = 0.05
    layers: int = 2
    hidden: int = 32
    nn_lr: float = 0.01
    nn_epochs: int = 200
    patience: int = 50
    train_frac: float = 0.3
    val_frac: float = 0.2


def planted_sbm(n: int = 600, p_in: float = 0.9, p_out: float = 0.05, d: int = 4, seed: int = 0):
    """Two equal blocks with uniform-noise features; labels are the blocks."""
    sizes = [n // 2, n - n // 2]
    g = gen_sbm(sizes, [[p_in, p_out], [p_out, p_in]], seed=seed, d=d)
    return g, sbm_labels(sizes)


def fit_for_pipeline(g: GraphSignal, pc: PipelineConfig, k: int, seed: int, drop: float = 0.0) -> Icg:
    """Full eigen-initialized fit, or subgraph SGD reading (1 - drop) N nodes per step."""
    if drop == 0.0:
        icg, _ = fit(g, FitConfig(k=k, lam=pc.lam, lr=pc.fit_lr, epochs=pc.fit_epochs, seed=seed))
        return icg
    m = int(round((1.0 - drop) * g.n))
    if m < 1:
        raise ValueError(f"drop fraction {drop} leaves no nodes to fit")
    init = init_random(g, k, seed)
    icg, _ = sgd_fit(g, SgdConfig(m=m, steps=pc.sgd_steps, lr=pc.sgd_lr, lam=pc.lam, seed=seed, optimizer="adam"), init)
    return icg


def train_eval(q, s, labels, split, pc: PipelineConfig, seed: int, arch: str = "icgnn-u") -> float:
    tc = TrainConfig(arch=arch, layers=pc.layers, hidden=pc.hidden, lr=pc.nn_lr, epochs=pc.nn_epochs,
                     seed=seed, patience=pc.patience)
    _, metrics = train_node_classifier(q, s, labels, split, tc)
    return metrics["final"]["test_acc"]


def _mean_std(xs) -> dict:
    return {"mean": float(np.mean(xs)), "std": float(np.std(xs))}


def cmd_planted(n=600, p_in=0.9, p_out=0.05, seeds=(0, 1, 2, 3, 4), pc: PipelineConfig = PipelineConfig()) -> dict:
    """ICG_u-NN vs features-only MLP on a planted two-block SBM."""
    report = new_report("planted", {"n": n, "p_in": p_in, "p_out": p_out, "pipeline": asdict(pc)}, list(seeds))
    for seed in seeds:
        g, y = planted_sbm(n, p_in, p_out, seed=seed)
        split = Split.random(g.n, pc.train_frac, pc.val_frac, seed)
        icg = fit_for_pipeline(g, pc, pc.k, seed)
        q = expit(icg.logits)
        report["runs"].append({
            "seed": seed,
            "icg_u_nn": train_eval(q, g.signal, y, split, pc, seed),
            "mlp": train_eval(q, g.signal, y, split, pc, seed, arch="mlp"),
        })
    icg_acc = [r["icg_u_nn"] for r in report["runs"]]
    mlp_acc = [r["mlp"] for r in report["runs"]]
    report["aggregate"] = {"icg_u_nn": _mean_std(icg_acc), "mlp": _mean_std(mlp_acc)}
    report["assertions"] = {"icg_u_nn_at_least_0.95": min(icg_acc) >= 0.95, "mlp_at_most_0.6": max(mlp_acc) <= 0.6}
    return finish(report)


def cmd_subgraph_robustness(
    g: GraphSignal,
    labels: np.ndarray,
    drop_fractions=(0.0, 0.1, 0.3, 0.5, 0.7, 0.9),
    seeds=(0, 1, 2),
    pc: PipelineConfig = PipelineConfig(),
) -> dict:
    """Test accuracy when each fitting step reads only a fraction of the nodes."""
    drop_fractions = list(drop_fractions)
    for d in drop_fractions:
        if not 0.0 <= d < 1.0:
            raise ValueError(f"drop fraction must lie in [0, 1), got {d}")
    report = new_report("robustness", {"drop_fractions": drop_fractions, "pipeline": asdict(pc)}, list(seeds))
    mlp = []
    for seed in seeds:
        split = Split.random(g.n, pc.train_frac, pc.val_frac, seed)
        ones = np.ones((g.n, 1))
        mlp.append(train_eval(ones, g.signal, labels, split, pc, seed, arch="mlp"))
        for d in drop_fractions:
            q = expit(fit_for_pipeline(g, pc, pc.k, seed, drop=d).logits)
            report["runs"].append({"seed": seed, "drop": d, "test_acc": train_eval(q, g.signal, labels, split, pc, seed)})
    curve = []
    for d in drop_fractions:
        accs = [r["test_acc"] for r in report["runs"] if r["drop"] == d]
        curve.append({"drop": d, **_mean_std(accs)})
    report["aggregate"] = {"curve": curve, "mlp": _mean_std(mlp)}
    by_drop = {c["drop"]: c["mean"] for c in curve}
    if 0.0 in by_drop and 0.5 in by_drop:
        report["assertions"] = {
            "half_drop_within_5_points": by_drop[0.5] >= by_drop[0.0] - 0.05,
            "half_drop_above_mlp": by_drop[0.5] > float(np.mean(mlp)),
        }
    return finish(report)


def cmd_ablate_k(
    g: GraphSignal,
    labels: np.ndarray,
    k_list=(1, 2, 4, 8, 16, 32),
    seeds=(0, 1, 2),
    pc: PipelineConfig = PipelineConfig(),
) -> dict:
    """Full pipeline accuracy as a function of the community count."""
    k_list = list(k_list)
    report = new_report("ablate-k", {"k_list": k_list, "pipeline": asdict(pc)}, list(seeds))
    for seed in seeds:
        split = Split.random(g.n, pc.train_frac, pc.val_frac, seed)
        for k in k_list:
            q = expit(fit_for_pipeline(g, pc, k, seed).logits)
            report["runs"].append({"seed": seed, "k": k, "test_acc": train_eval(q, g.signal, labels, split, pc, seed)})
    curve = []
    for k in k_list:
        accs = [r["test_acc"] for r in report["runs"] if r["k"] == k]
        curve.append({"k": k, **_mean_std(accs)})
    report["aggregate"] = {"curve": curve}
    if len(k_list) > 1:
        means = {c["k"]: c["mean"] for c in curve}
        best = max(means.values())
        report["assertions"]["largest_k_near_best"] = means[max(k_list)] >= best - 0.03
        if 1 in means:
            report["assertions"]["k1_underperforms"] = means[1] <= best - 0.10
    return finish(report)
