"""One-call model fitting: parse, compile, sample, summarize."""
from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import FitSummary, summarize
from .formula import ModelSpec, build_design, parse_model_spec
from .io import SubjectTable, TrialTable, subjects_with_trials
from .model import Model, PriorConfig, build_model
from .sampler import PosteriorDraws, SamplerConfig, run_chains


@dataclass
class FitResult:
    model: Model
    draws: PosteriorDraws
    summary: FitSummary


def fit_model(spec: ModelSpec, subjects: SubjectTable, trials: TrialTable,
              config: SamplerConfig | None = None, priors: PriorConfig | None = None,
              **model_options) -> FitResult:
    """Fit a compiled spec. Subjects without trials are dropped.

    ``model_options`` go to :class:`~regddm.model.Model` (``tol``,
    ``noncentered``).
    """
    config = config or SamplerConfig()
    subjects = subjects_with_trials(subjects, trials)
    design = build_design(spec, subjects, trials)
    model = build_model(spec, design, priors, **model_options)
    draws = run_chains(model, config)
    return FitResult(model, draws, summarize(draws, model))


def regddm(subjects: SubjectTable, trials: TrialTable, formulas, family="gaussian",
           config: SamplerConfig | None = None, priors: PriorConfig | None = None,
           **model_options) -> FitResult:
    """Fit the regression DDM given formula strings, e.g.
    ``["v ~ memload", "iq ~ v_0 + v_memload + age"]``.
    """
    spec = parse_model_spec(formulas, family)
    return fit_model(spec, subjects, trials, config, priors, **model_options)
