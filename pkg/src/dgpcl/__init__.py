"""Contour location for expensive simulators with Bayesian deep GP surrogates."""
from ._accel import backend_name
from .acquisition import Direction, Threshold, entropy, failure_prob, pareto_front, score_candidates
from .design import ExperimentConfig, RunRecord, lhs, run_sequential, run_static
from .dgp import Dgp, ess_step
from .gp import GpMcmc, predict
from .kernels import KernelHyper, kernel_matrix, matern52
from .metrics import all_metrics, crps
from .posterior import AggregatedPosterior, MomentSamples, aggregate
from .testfns import REGISTRY, get_function
from .tricands import CandidateSet, delaunay, targeted_subsample

__version__ = "0.1.0"

__all__ = [
    "AggregatedPosterior", "CandidateSet", "Dgp", "Direction", "ExperimentConfig", "GpMcmc",
    "KernelHyper", "MomentSamples", "REGISTRY", "RunRecord", "Threshold", "aggregate",
    "all_metrics", "backend_name", "crps", "delaunay", "entropy", "ess_step", "failure_prob",
    "get_function", "kernel_matrix", "lhs", "matern52", "pareto_front", "predict",
    "run_sequential", "run_static", "score_candidates", "targeted_subsample",
]
