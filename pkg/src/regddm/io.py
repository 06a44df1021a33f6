"""Reading, validating and writing the subject/trial CSV tables and results."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

NA_VALUES = ["", "NA"]
TRIAL_REQUIRED = ("id", "response", "rt")


class DataValidationError(ValueError):
    pass


@dataclass
class SubjectTable:
    frame: pd.DataFrame
    factors: tuple[str, ...] = ()

    @property
    def ids(self):
        return self.frame["id"].to_numpy()


@dataclass
class TrialTable:
    frame: pd.DataFrame

    @property
    def covariates(self) -> list[str]:
        return [c for c in self.frame.columns if c not in TRIAL_REQUIRED]


def _to_numeric(series: pd.Series) -> pd.Series:
    """``pd.to_numeric`` with coercion, but exact for text input.

    pandas' fast string parser can be off by one ulp, so parsed text entries
    are re-read with ``float``.
    """
    parsed = pd.to_numeric(series, errors="coerce")
    if series.dtype == object:
        ok = parsed.notna().to_numpy()
        vals = parsed.to_numpy(dtype=float, na_value=np.nan)
        vals[ok] = [float(v) for v in series.to_numpy()[ok]]
        parsed = pd.Series(vals, index=series.index)
    return parsed


def _infer_types(df: pd.DataFrame, skip=("id",), overrides=None):
    """Numeric where every non-missing entry parses as a number, else factor."""
    overrides = overrides or {}
    factors = []
    out = df.copy()
    for col in df.columns:
        if col in skip:
            continue
        kind = overrides.get(col)
        parsed = _to_numeric(df[col])
        numeric = bool((parsed.notna() == df[col].notna()).all())
        if kind == "factor" or (kind is None and not numeric):
            out[col] = df[col].astype(object).where(df[col].notna(), None)
            out[col] = out[col].map(lambda x: None if x is None else str(x))
            factors.append(col)
        else:
            if not numeric:
                raise DataValidationError(f"column {col!r} declared numeric but has non-numeric values")
            out[col] = parsed.astype(float)
    return out, tuple(factors)


def _normalize_ids(series: pd.Series) -> pd.Series:
    return series.astype(str).str.strip()


def make_subject_table(df: pd.DataFrame, types=None) -> SubjectTable:
    if "id" not in df.columns:
        raise DataValidationError("subject table is missing required column 'id'")
    if len(df) == 0:
        raise DataValidationError("subject table is empty")
    df = df.copy()
    if df["id"].isna().any():
        raise DataValidationError("subject table has missing ids")
    df["id"] = _normalize_ids(df["id"])
    dup = df["id"][df["id"].duplicated()]
    if len(dup):
        raise DataValidationError(f"duplicate subject ids: {sorted(set(dup))[:5]}")
    df, factors = _infer_types(df, overrides=types)
    return SubjectTable(df.reset_index(drop=True), factors)


def make_trial_table(df: pd.DataFrame, subjects: SubjectTable | None = None,
                     rt_window: tuple[float, float] | None = None) -> TrialTable:
    missing = [c for c in TRIAL_REQUIRED if c not in df.columns]
    if missing:
        raise DataValidationError(f"trial table is missing required columns: {missing}")
    if len(df) == 0:
        raise DataValidationError("trial table is empty")
    df = df.copy()
    df["id"] = _normalize_ids(df["id"])
    resp = _to_numeric(df["response"])
    rt = _to_numeric(df["rt"])
    # row numbers are 1-based data rows, header excluded
    bad = np.flatnonzero(~resp.isin([0, 1]).to_numpy())
    if bad.size:
        raise DataValidationError(f"response must be 0 or 1 (row {bad[0] + 1})")
    okrt = rt.notna() & np.isfinite(rt.fillna(0)) & (rt > 0)
    bad = np.flatnonzero(~okrt.to_numpy())
    if bad.size:
        raise DataValidationError(f"rt must be positive and finite (row {bad[0] + 1})")
    df["response"] = resp.astype(np.int64)
    df["rt"] = rt.astype(float)
    for col in df.columns:
        if col in TRIAL_REQUIRED:
            continue
        x = _to_numeric(df[col])
        bad = np.flatnonzero(x.isna().to_numpy())
        if bad.size:
            raise DataValidationError(
                f"trial covariate {col!r} must be numeric and non-missing (row {bad[0] + 1})")
        df[col] = x.astype(float)
    if rt_window is not None:
        lo, hi = rt_window
        df = df[(df["rt"] >= lo) & (df["rt"] <= hi)]
    if subjects is not None:
        known = set(subjects.frame["id"])
        orphans = sorted(set(df["id"]) - known)
        if orphans:
            raise DataValidationError(f"trial ids without a subject record: {orphans[:5]}")
    return TrialTable(df.reset_index(drop=True))


def read_tables(subject_path, trial_path, rt_window=None, types=None):
    """Read and validate the subject and trial CSV files.

    ``rt_window=(lo, hi)`` drops trials outside the window before validation of
    cross-table ids; it is off by default.
    """
    sdf = pd.read_csv(subject_path, na_values=NA_VALUES, keep_default_na=False, dtype=str)
    tdf = pd.read_csv(trial_path, na_values=NA_VALUES, keep_default_na=False, dtype=str)
    subjects = make_subject_table(sdf, types=types)
    trials = make_trial_table(tdf, subjects, rt_window=rt_window)
    return subjects, trials


def subjects_with_trials(subjects: SubjectTable, trials: TrialTable) -> SubjectTable:
    """Subject table in its original order, keeping only ids that have trials."""
    keep = subjects.frame["id"].isin(set(trials.frame["id"]))
    return SubjectTable(subjects.frame[keep].reset_index(drop=True), subjects.factors)


# ---------------------------------------------------------------------------
# data summary


@dataclass
class DataSummary:
    per_subject: pd.DataFrame        # id, accuracy, latency, n_trials
    continuous: dict[str, tuple[float, float]]
    factors: dict[str, list[tuple[str, int, float]]]
    flags: list[str]

    def render(self) -> str:
        lines = ["Variable  Mean(SD)/n(%)"]
        for name, (m, s) in self.continuous.items():
            lines.append(f"{name}  {_fmt(m)}({_fmt(s)})")
        for name, rows in self.factors.items():
            lines.append(name)
            for lev, n, pct in rows:
                lines.append(f"  {lev}  {n}({pct:.0f}%)")
        return "\n".join(lines) + "\n"


def _fmt(x):
    if not math.isfinite(x):
        return "NA"
    return f"{x:.3g}" if abs(x) >= 10 else f"{x:.2f}"


def summarize_data(subjects: SubjectTable, trials: TrialTable) -> DataSummary:
    """Per-subject accuracy and latency plus cohort mean(sd) and factor counts."""
    g = trials.frame.groupby("id", sort=False)
    per = pd.DataFrame({
        "accuracy": g["response"].mean(),
        "latency": g["rt"].mean(),
        "n_trials": g.size(),
    })
    per.index.name = "id"
    per = per.reset_index()
    flags = []
    cont = {}
    sdf = subjects.frame.merge(per, on="id", how="left")
    cols = [c for c in subjects.frame.columns if c != "id" and c not in subjects.factors]
    for col in cols + ["accuracy", "latency"]:
        x = sdf[col].dropna().to_numpy(dtype=float)
        if x.size == 0:
            cont[col] = (float("nan"), float("nan"))
            continue
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        if x.size < 2:
            flags.append(f"{col}: sd set to 0 for a single observation")
        cont[col] = (float(np.mean(x)), sd)
    facs = {}
    for col in subjects.factors:
        counts = subjects.frame[col].fillna("NA").value_counts().sort_index()
        total = counts.sum()
        facs[col] = [(str(k), int(v), 100.0 * v / total) for k, v in counts.items()]
    return DataSummary(per, cont, facs, flags)


# ---------------------------------------------------------------------------
# results


def write_draws(draws, path):
    """Long-format draws: one row per chain x iteration x parameter."""
    c, n, p = draws.values.shape
    chain = np.repeat(np.arange(c), n * p)
    it = np.tile(np.repeat(np.arange(n), p), c)
    names = np.tile(np.asarray(draws.names, dtype=object), c * n)
    df = pd.DataFrame({"chain": chain, "iteration": it, "parameter": names,
                       "value": draws.values.ravel()})
    df.to_csv(path, index=False, float_format="%.17g")


def read_draws(path):
    """Inverse of :func:`write_draws`: returns ``(names, array[chain, iter, param])``."""
    df = pd.read_csv(path, dtype={"parameter": str}, float_precision="round_trip")
    names = list(dict.fromkeys(df["parameter"]))
    c = df["chain"].max() + 1
    n = df["iteration"].max() + 1
    return names, df["value"].to_numpy(dtype=float).reshape(c, n, len(names))


def write_results(summary, draws, out_dir, write_all_draws=False, truth=None):
    """Write ``report.txt``, ``summary.csv`` and optionally ``draws.csv`` and
    ``truth_comparison.csv`` (when ``truth`` maps parameter names to values).

    Returns the list of written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    p = out / "report.txt"
    p.write_text(summary.render())
    paths.append(p)
    p = out / "summary.csv"
    summary.table.to_csv(p, index=False, float_format="%.10g")
    paths.append(p)
    if write_all_draws:
        p = out / "draws.csv"
        write_draws(draws, p)
        paths.append(p)
    if truth is not None:
        tab = summary.table.set_index("variable")
        rows = []
        for name, val in truth.items():
            if name in tab.index:
                r = tab.loc[name]
                rows.append({"variable": name, "truth": val, "mean": r["mean"],
                             "error": r["mean"] - val,
                             "covered": bool(r["q2.5"] <= val <= r["q97.5"])})
        p = out / "truth_comparison.csv"
        pd.DataFrame(rows).to_csv(p, index=False, float_format="%.10g")
        paths.append(p)
    return paths
