"""Two-level formula mini-language and design-matrix compilation.

Grammar::

    formula := name '~' term ('+' term)*
    term    := name | '1'

A formula whose left-hand side is one of ``a``, ``t``, ``z``, ``v`` describes
how a trial-level DDM parameter depends on trial covariates. It generates the
subject-level derived terms ``<p>_0`` (intercept) and ``<p>_<covariate>``
(slopes). Exactly one other formula, the regression formula, links derived
terms and subject covariates to a subject-level outcome (case A) or uses a
derived term as its outcome (case B).
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import pandas as pd

DDM_PARAMS = ("a", "t", "z", "v")
FAMILIES = ("gaussian", "bernoulli", "poisson")

_NAME = re.compile(r"[A-Za-z_.][A-Za-z0-9_.]*")


class FormulaSyntaxError(ValueError):
    """Syntax error; ``position`` is the 1-based column of the offending character."""

    def __init__(self, message, offset):
        self.position = offset + 1
        super().__init__(f"{message} at position {self.position}")


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Formula:
    lhs: str
    rhs: tuple[str, ...] = ()

    def render(self) -> str:
        return f"{self.lhs} ~ {' + '.join(self.rhs) if self.rhs else '1'}"

    def __str__(self):
        return self.render()


def parse_formula(text: str) -> Formula:
    """Parse ``lhs ~ term + term``."""
    pos = 0
    n = len(text)

    def skip():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def name(what):
        nonlocal pos
        skip()
        if pos < n and text[pos] == "1" and what == "term":
            end = pos + 1
            if end == n or not (text[end].isalnum() or text[end] in "_."):
                pos = end
                return "1"
        m = _NAME.match(text, pos)
        if not m:
            if pos >= n:
                raise FormulaSyntaxError(f"empty {what}", pos)
            raise FormulaSyntaxError(f"expected {what}, found {text[pos]!r}", pos)
        pos = m.end()
        return m.group(0)

    skip()
    if pos < n and text[pos] == "~":
        raise FormulaSyntaxError("missing left-hand side", pos)
    lhs = name("left-hand side")
    skip()
    if pos >= n or text[pos] != "~":
        raise FormulaSyntaxError("expected '~'", pos)
    pos += 1
    terms = [name("term")]
    skip()
    while pos < n:
        if text[pos] != "+":
            raise FormulaSyntaxError(f"expected '+', found {text[pos]!r}", pos)
        pos += 1
        terms.append(name("term"))
        skip()

    if terms == ["1"]:
        return Formula(lhs, ())
    if "1" in terms:
        raise FormulaSyntaxError("'1' is only allowed as a lone term", text.index("1"))
    seen = set()
    for t in terms:
        if t in seen:
            raise FormulaSyntaxError(f"duplicate term {t!r}", text.rfind(t))
        seen.add(t)
    return Formula(lhs, tuple(terms))


def derived_terms(f: Formula) -> tuple[str, ...]:
    """Subject-level terms generated by a DDM formula: p_0, p_c1, ..."""
    return (f"{f.lhs}_0",) + tuple(f"{f.lhs}_{c}" for c in f.rhs)


@dataclass(frozen=True)
class ModelSpec:
    ddm_formulas: tuple[Formula, ...]
    regression: Formula | None
    family: str = "gaussian"

    @cached_property
    def formulas(self) -> dict[str, Formula]:
        """DDM formula per parameter, defaulting to intercept-only."""
        given = {f.lhs: f for f in self.ddm_formulas}
        return {p: given.get(p, Formula(p, ())) for p in DDM_PARAMS}

    @cached_property
    def derived(self) -> dict[str, tuple[str, str | None]]:
        """Map derived-term name -> (DDM parameter, covariate or None)."""
        out = {}
        for p, f in self.formulas.items():
            out[f"{p}_0"] = (p, None)
            for c in f.rhs:
                out[f"{p}_{c}"] = (p, c)
        return out

    @cached_property
    def case(self) -> str | None:
        if self.regression is None:
            return None
        return "B" if self.regression.lhs in self.derived else "A"

    def without_regression(self) -> "ModelSpec":
        return replace(self, regression=None)

    def lines(self) -> list[str]:
        fs = [f.render() for f in self.ddm_formulas]
        if self.regression is not None:
            fs.append(self.regression.render())
        return fs


def parse_model_spec(formulas, family: str = "gaussian") -> ModelSpec:
    parsed = [f if isinstance(f, Formula) else parse_formula(f) for f in formulas]
    if family not in FAMILIES:
        raise ModelSpecError(f"unknown family {family!r}; expected one of {FAMILIES}")
    ddm = [f for f in parsed if f.lhs in DDM_PARAMS]
    reg = [f for f in parsed if f.lhs not in DDM_PARAMS]
    seen = set()
    for f in ddm:
        if f.lhs in seen:
            raise ModelSpecError(f"DDM parameter {f.lhs!r} has more than one formula")
        seen.add(f.lhs)
    if len(reg) != 1:
        raise ModelSpecError(f"expected exactly one regression formula, got {len(reg)}")
    spec = ModelSpec(tuple(ddm), reg[0], family)
    derived = spec.derived
    used = set(spec.regression.rhs)
    # names that look like derived terms of a DDM parameter must exist
    for t in used:
        head = t.split("_", 1)[0]
        if head in DDM_PARAMS and "_" in t and t not in derived:
            raise ModelSpecError(f"term {t!r} is not generated by any DDM formula")
    if spec.case == "B":
        if family != "gaussian":
            raise ModelSpecError("a DDM-derived outcome requires the gaussian family")
        if spec.regression.lhs in used:
            raise ModelSpecError("regression outcome also appears as a predictor")
    else:
        lhs = spec.regression.lhs
        head = lhs.split("_", 1)[0]
        if head in DDM_PARAMS and "_" in lhs:
            raise ModelSpecError(f"outcome {lhs!r} is not generated by any DDM formula")
    return spec


# ---------------------------------------------------------------------------
# design


@dataclass
class RegressionDesign:
    """Subject-level design for the regression formula.

    ``columns`` lists the coefficient names in order (``beta_<column>``);
    ``sources`` says where each column's values come from: ``("intercept",)``,
    ``("derived", term)``, ``("covariate", name)`` or ``("dummy", name, level)``.
    """

    columns: list[str]
    sources: list[tuple]
    fixed: np.ndarray          # (N, k) observed part; derived/missing entries zero
    missing: dict[str, np.ndarray] = field(default_factory=dict)  # covariate -> bool mask (N,)
    covariate_values: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class DesignData:
    subject_ids: np.ndarray
    trial_subject: np.ndarray                 # subject index per trial
    rt: np.ndarray
    response: np.ndarray
    trial_covariates: dict[str, np.ndarray]   # per DDM parameter: (n_trials, n_slopes)
    derived: dict[str, tuple[str, str | None]]
    regression: RegressionDesign | None
    outcome: np.ndarray | None
    outcome_levels: tuple | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_subjects(self):
        return len(self.subject_ids)

    @property
    def n_trials(self):
        return len(self.rt)


def _factor_levels(values: pd.Series):
    levels = sorted(values.dropna().astype(str).unique())
    has_na = values.isna().any()
    return levels, has_na


def build_design(spec: ModelSpec, subjects, trials) -> DesignData:
    """Compile ``spec`` against subject and trial tables into arrays.

    Factors are dummy coded against their first level in sorted order; a
    missing factor value becomes its own ``NA`` level. Missing continuous
    covariates are recorded in a mask and left for the model to treat as
    latent parameters.
    """
    sdf = subjects.frame
    tdf = trials.frame
    notes: list[str] = []
    ids = sdf["id"].to_numpy()
    index = {k: i for i, k in enumerate(ids)}
    trial_subject = np.array([index[k] for k in tdf["id"].to_numpy()], dtype=np.int64)

    trial_cov = {}
    for p, f in spec.formulas.items():
        cols = []
        for c in f.rhs:
            if c not in tdf.columns:
                raise ModelSpecError(f"trial covariate {c!r} not found in trial table")
            x = tdf[c].to_numpy(dtype=float)
            if np.any(~np.isfinite(x)):
                raise ModelSpecError(f"trial covariate {c!r} has missing values")
            if np.ptp(x) == 0:
                notes.append(f"trial covariate {c!r} is constant")
            cols.append(x)
        trial_cov[p] = np.column_stack(cols) if cols else np.zeros((len(tdf), 0))

    derived = spec.derived
    reg = None
    outcome = None
    levels = None
    if spec.regression is not None:
        reg = _regression_design(spec, subjects, derived, notes)
        if spec.case == "A":
            outcome, levels = _outcome(spec, subjects)

    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return DesignData(
        subject_ids=ids,
        trial_subject=trial_subject,
        rt=tdf["rt"].to_numpy(dtype=float),
        response=tdf["response"].to_numpy(dtype=np.int64),
        trial_covariates=trial_cov,
        derived=derived,
        regression=reg,
        outcome=outcome,
        outcome_levels=levels,
        warnings=notes,
    )


def _regression_design(spec, subjects, derived, notes):
    sdf = subjects.frame
    n = len(sdf)
    columns = ["0"]
    sources: list[tuple] = [("intercept",)]
    fixed = [np.ones(n)]
    missing = {}
    values = {}
    for term in spec.regression.rhs:
        if term in derived:
            columns.append(term)
            sources.append(("derived", term))
            fixed.append(np.zeros(n))
            continue
        if term not in sdf.columns:
            raise ModelSpecError(f"subject covariate {term!r} not found in subject table")
        if term in subjects.factors:
            levels, has_na = _factor_levels(sdf[term])
            full = levels + (["NA"] if has_na else [])
            col = sdf[term].astype(object).where(sdf[term].notna(), "NA").astype(str).to_numpy()
            if len(full) < 2:
                notes.append(f"factor {term!r} has a single level")
            for lev in full[1:]:
                columns.append(f"{term}{lev}")
                sources.append(("dummy", term, lev))
                fixed.append((col == lev).astype(float))
        else:
            x = sdf[term].to_numpy(dtype=float)
            mask = ~np.isfinite(x)
            obs = x[~mask]
            if obs.size and np.ptp(obs) == 0:
                notes.append(f"subject covariate {term!r} is constant")
            columns.append(term)
            sources.append(("covariate", term))
            fixed.append(np.where(mask, 0.0, x))
            values[term] = x
            if mask.any():
                missing[term] = mask
    if len(set(columns)) != len(columns):
        raise ModelSpecError(f"duplicate design columns: {columns}")
    return RegressionDesign(columns, sources, np.column_stack(fixed), missing, values)


def _outcome(spec, subjects):
    sdf = subjects.frame
    name = spec.regression.lhs
    if name not in sdf.columns:
        raise ModelSpecError(f"outcome {name!r} not found in subject table")
    col = sdf[name]
    if col.isna().any():
        raise ModelSpecError(f"outcome {name!r} has missing values")
    family = spec.family
    if name in subjects.factors:
        levels = sorted(col.astype(str).unique())
        if family != "bernoulli" or len(levels) > 2:
            raise ModelSpecError(f"factor outcome {name!r} requires the bernoulli family "
                                 "and at most two levels")
        y = (col.astype(str).to_numpy() == levels[-1]).astype(float) if len(levels) == 2 \
            else np.zeros(len(col))
        return y, tuple(levels)
    y = col.to_numpy(dtype=float)
    if family == "bernoulli" and not np.all(np.isin(y, (0.0, 1.0))):
        raise ModelSpecError(f"bernoulli outcome {name!r} must be 0/1")
    if family == "poisson" and not np.all((y >= 0) & (y == np.round(y))):
        raise ModelSpecError(f"poisson outcome {name!r} must be non-negative integers")
    return y, None
