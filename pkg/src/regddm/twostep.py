"""The two-step baseline.

Step one fits the hierarchical DDM without the regression layer and keeps the
posterior mean of every subject-level derived term. Step two treats those
point estimates as observed data in a frequentist OLS regression or a
two-sample t-test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .fit import FitResult, fit_model
from .formula import Formula, ModelSpec, parse_formula
from .io import SubjectTable, TrialTable
from .model import PriorConfig
from .sampler import SamplerConfig


class DegenerateInputError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


@dataclass
class FirstStage:
    estimates: pd.DataFrame      # id plus one column per derived term
    fit: FitResult


def fit_ddm_only(spec: ModelSpec, subjects: SubjectTable, trials: TrialTable,
                 config: SamplerConfig | None = None, priors: PriorConfig | None = None,
                 **model_options) -> FirstStage:
    """Posterior means of subject-level derived terms from the DDM alone."""
    res = fit_model(spec.without_regression(), subjects, trials, config, priors, **model_options)
    model, draws = res.model, res.draws
    means = draws.values.mean(axis=(0, 1))
    index = {name: i for i, name in enumerate(draws.names)}
    ids = [str(s) for s in model.design.subject_ids]
    cols = {"id": ids}
    for term in model.design.derived:
        cols[term] = np.array([means[index[f"{term}[{i}]"]] for i in ids])
    return FirstStage(pd.DataFrame(cols), res)


# ---------------------------------------------------------------------------
# second step


@dataclass
class OLSResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    df: int
    sigma: float

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"variable": self.names, "estimate": self.coef, "se": self.se,
                             "t": self.t, "p": self.p, "df": self.df})


def ols_fit(y, X, names=None) -> OLSResult:
    """Ordinary least squares through a pivoted QR decomposition.

    Standard errors use the residual variance on ``n - p`` degrees of freedom
    and p-values are two-sided from the t distribution.
    """
    from scipy.linalg import qr, solve_triangular

    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n < k + 1:
        raise DegenerateInputError(f"need at least {k + 1} rows for {k} columns, got {n}")
    Q, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag.max() * max(n, k) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < k:
        dropped = [names[j] for j in piv[rank:]]
        raise RankDeficientError(f"design matrix is rank deficient; collinear columns: {dropped}")
    coef_p = solve_triangular(R, Q.T @ y)
    coef = np.empty(k)
    coef[piv] = coef_p
    resid = y - X @ coef
    df = n - k
    sigma2 = float(resid @ resid) / df
    Rinv = solve_triangular(R, np.eye(k))
    cov_p = sigma2 * (Rinv @ Rinv.T)
    se = np.empty(k)
    se[piv] = np.sqrt(np.diag(cov_p))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.sign(coef) * np.inf))
    p = 2.0 * stats.t.sf(np.abs(t), df)
    return OLSResult(names, coef, se, t, p, df, float(np.sqrt(sigma2)))


@dataclass
class TTestResult:
    t: float
    df: float
    p: float
    mean0: float
    mean1: float

    @property
    def difference(self):
        return self.mean1 - self.mean0


def two_sample_ttest(group0, group1, pooled: bool = False) -> TTestResult:
    """Welch's unequal-variance t-test, or Student's pooled test with ``pooled``.

    The statistic is ``mean(group1) - mean(group0)`` over its standard error.
    """
    x0 = np.asarray(group0, dtype=float)
    x1 = np.asarray(group1, dtype=float)
    n0, n1 = x0.size, x1.size
    if n0 < 2 or n1 < 2:
        raise DegenerateInputError("each group needs at least 2 observations")
    m0, m1 = x0.mean(), x1.mean()
    v0, v1 = x0.var(ddof=1), x1.var(ddof=1)
    if v0 == 0 and v1 == 0:
        raise DegenerateInputError("both groups have zero variance")
    if pooled:
        df = n0 + n1 - 2.0
        sp2 = ((n0 - 1) * v0 + (n1 - 1) * v1) / df
        se = np.sqrt(sp2 * (1.0 / n0 + 1.0 / n1))
    else:
        a0, a1 = v0 / n0, v1 / n1
        se = np.sqrt(a0 + a1)
        df = (a0 + a1) ** 2 / (a0 * a0 / (n0 - 1) + a1 * a1 / (n1 - 1))
    t = (m1 - m0) / se
    p = 2.0 * stats.t.sf(abs(t), df)
    return TTestResult(float(t), float(df), float(p), float(m0), float(m1))


# ---------------------------------------------------------------------------
# complete baseline


def _second_step_frame(stage: FirstStage, subjects: SubjectTable) -> pd.DataFrame:
    return subjects.frame.merge(stage.estimates, on="id", how="inner")


def second_step_ols(formula: Formula | str, stage: FirstStage, subjects: SubjectTable) -> OLSResult:
    """OLS of ``formula`` with first-stage estimates standing in for derived terms.

    Factors are dummy coded against their first sorted level; subjects with a
    missing value in any used column are dropped (complete-case analysis).
    """
    f = parse_formula(formula) if isinstance(formula, str) else formula
    df = _second_step_frame(stage, subjects)
    used = [f.lhs] + list(f.rhs)
    missing = [c for c in used if c not in df.columns]
    if missing:
        raise KeyError(f"columns not found for the second step: {missing}")
    df = df.dropna(subset=used)
    cols = [np.ones(len(df))]
    names = ["(Intercept)"]
    for term in f.rhs:
        if term in subjects.factors:
            levels = sorted(df[term].astype(str).unique())
            for lev in levels[1:]:
                cols.append((df[term].astype(str) == lev).to_numpy(dtype=float))
                names.append(f"{term}{lev}")
        else:
            cols.append(df[term].to_numpy(dtype=float))
            names.append(term)
    y = df[f.lhs]
    if f.lhs in subjects.factors:
        levels = sorted(y.astype(str).unique())
        y = (y.astype(str) == levels[-1]).astype(float)
    return ols_fit(y.to_numpy(dtype=float), np.column_stack(cols), names)


def second_step_ttest(term: str, group: str, stage: FirstStage, subjects: SubjectTable,
                      pooled: bool = False) -> TTestResult:
    """Compare first-stage estimates of ``term`` between the two levels of ``group``."""
    df = _second_step_frame(stage, subjects).dropna(subset=[group, term])
    levels = sorted(df[group].astype(str).unique())
    if len(levels) != 2:
        raise DegenerateInputError(f"grouping column {group!r} must have exactly 2 levels, "
                                   f"found {len(levels)}")
    g = df[group].astype(str)
    return two_sample_ttest(df.loc[g == levels[0], term], df.loc[g == levels[1], term], pooled)
