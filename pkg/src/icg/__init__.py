"""Intersecting community graphs: fitting, cut-norm validation and O(N) learning."""

from .fit import FitConfig, FitReport, fit, grad_all, init_eigen, loss_efficient
from .graph import GraphSignal, NodeSample, gen_erdos_renyi, gen_sbm, load_graph_signal
from .model import Icg, analyze, project, synthesize
from .norms import CutNormEstimate, NormWeights, cut_norm_exact, cut_norm_heuristic
from .sgd import SgdConfig, grad_error_study, sgd_fit

__all__ = [
    "CutNormEstimate", "FitConfig", "FitReport", "GraphSignal", "Icg", "NodeSample", "NormWeights",
    "SgdConfig", "analyze", "cut_norm_exact", "cut_norm_heuristic", "fit", "gen_erdos_renyi", "gen_sbm",
    "grad_all", "grad_error_study", "init_eigen", "load_graph_signal", "loss_efficient", "project",
    "sgd_fit", "synthesize",
]
