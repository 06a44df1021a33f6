"""Bayesian hierarchical drift-diffusion models with a subject-level regression layer."""
from .diagnostics import FitSummary, ess, split_rhat, summarize
from .fit import FitResult, fit_model, regddm
from .formula import Formula, ModelSpec, build_design, parse_formula, parse_model_spec
from .io import read_tables, summarize_data, write_results
from .model import Model, PriorConfig, build_model
from .sampler import PosteriorDraws, SamplerConfig, run_chains
from .simulate import SimConfig, generate
from .wfpt import DdmParams, TrialOutcome, sample_first_passage, wfpt_log_density

__all__ = [
    "DdmParams", "FitResult", "FitSummary", "Formula", "Model", "ModelSpec", "PosteriorDraws",
    "PriorConfig", "SamplerConfig", "SimConfig", "TrialOutcome", "build_design", "build_model",
    "ess", "fit_model", "generate", "parse_formula", "parse_model_spec", "read_tables",
    "regddm", "run_chains", "sample_first_passage", "split_rhat", "summarize", "summarize_data",
    "wfpt_log_density", "write_results",
]

__version__ = "0.1.0"
