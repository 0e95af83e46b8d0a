"""Closed-form node classification on graphs with exact, locality-aware unlearning."""

from .data import Dataset, SbmSpec, evaluate, generate_sbm, load_dataset, save_dataset
from .errors import CfgraphError, NumericalError, ValidationError
from .graph import ForgetRequest, Graph, adjusted_homophily, k_hop_neighborhood, modify_graph, propagate
from .kernels import BACKEND
from .lcfnet import LcfConfig, LcfNetModel, fit_lcfnet, predict_lcfnet
from .pipeline_a import CnsParams, PipelineAConfig, PipelineAModel, RffParams, fit_a, predict_a
from .router import RoutingDecision, route, tau_sweep
from .serialize import load_model, save_model
from .unlearn import (UnlearnReport, apply_forget, bench_unlearn, mia_attack, retrain_from_scratch,
                      unlearn, unlearn_full, unlearn_khop, verify_exact)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CfgraphError", "CnsParams", "Dataset", "ForgetRequest", "Graph", "LcfConfig",
    "LcfNetModel", "NumericalError", "PipelineAConfig", "PipelineAModel", "RffParams",
    "RoutingDecision", "SbmSpec", "UnlearnReport", "ValidationError", "adjusted_homophily",
    "apply_forget", "bench_unlearn", "evaluate", "fit_a", "fit_lcfnet", "generate_sbm",
    "k_hop_neighborhood", "load_dataset", "load_model", "mia_attack", "modify_graph", "predict_a",
    "predict_lcfnet", "propagate", "retrain_from_scratch", "route", "save_dataset", "save_model",
    "tau_sweep", "unlearn", "unlearn_full", "unlearn_khop", "verify_exact",
]
