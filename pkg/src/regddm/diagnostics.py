"""Convergence diagnostics and the fit summary report.

``split_rhat`` is the classic potential scale reduction computed over
half-chains. ``ess`` is the multi-chain autocorrelation estimator with
Geyer's initial monotone sequence, capped at 1.5 times the draw count.
Quantiles use linear interpolation between order statistics (numpy's default,
Hyndman-Fan type 7).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

ESS_CAP = 1.5
RHAT_GATE = 1.05


class ZeroVarianceWarning(UserWarning):
    pass


def _as_chains(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws)")
    return x


def split_rhat(x) -> float:
    """Split-chain R-hat for one parameter; ``x`` is (chains, draws)."""
    x = _as_chains(x)
    m, n = x.shape
    if n < 4:
        raise ValueError("split R-hat needs at least 4 draws per chain")
    half = n // 2
    halves = np.concatenate([x[:, :half], x[:, n - half:]], axis=0)
    w = np.mean(np.var(halves, axis=1, ddof=1))
    if w == 0 or not np.isfinite(w):
        warnings.warn("zero within-chain variance; R-hat undefined", ZeroVarianceWarning,
                      stacklevel=2)
        return float("nan")
    b_over_n = np.var(np.mean(halves, axis=1), ddof=1)
    var_plus = (half - 1.0) / half * w + b_over_n
    return float(math.sqrt(var_plus / w))


def _autocov(x):
    """Biased autocovariance of each row via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=size, axis=1)
    ac = np.fft.irfft(f * np.conjugate(f), n=size, axis=1)[:, :n]
    return ac / n


def ess(x) -> float:
    """Effective sample size of one parameter from (chains, draws)."""
    x = _as_chains(x)
    m, n = x.shape
    if n < 4:
        raise ValueError("ESS needs at least 4 draws per chain")
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    mean_var = chain_var.mean()
    if mean_var <= 0 or not np.isfinite(mean_var):
        warnings.warn("zero variance draws; ESS set to 0", ZeroVarianceWarning, stacklevel=2)
        return 0.0
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    mean_acov = acov.mean(axis=0)
    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - mean_acov[1]) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 5 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - mean_acov[t + 1]) / var_plus
        rho_odd = 1.0 - (mean_var - mean_acov[t + 2]) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    total = m * n
    tau = -1.0 + 2.0 * np.sum(rho[: max_t + 1]) + rho[max_t + 1]
    tau = max(tau, 1.0 / math.log10(total)) if total > 1 else tau
    return float(min(total / tau, ESS_CAP * total))


def quantile(x, q):
    return np.quantile(np.asarray(x, dtype=float).ravel(), q)


# ---------------------------------------------------------------------------
# summary


@dataclass
class FitSummary:
    table: pd.DataFrame                       # one row per parameter
    regression: list[str] = field(default_factory=list)
    n_subjects: int | None = None
    n_trials: int | None = None
    model: list[str] = field(default_factory=list)
    family: str | None = None
    chains: int = 0
    warmup: int = 0
    iterations: int = 0
    elapsed: float = 0.0
    divergences: int = 0

    @property
    def max_rhat(self) -> float:
        r = self.table["rhat"].to_numpy(dtype=float)
        r = r[np.isfinite(r)]
        return float(r.max()) if r.size else float("nan")

    def converged(self, threshold=RHAT_GATE) -> bool:
        return bool(self.max_rhat <= threshold)

    def row(self, name) -> pd.Series:
        return self.table.set_index("variable").loc[name]

    def table_rows(self):
        names = self.regression or list(self.table["variable"])
        return self.table.set_index("variable").loc[names].reset_index()

    def render(self) -> str:
        lines = ["RegDDM Model Summary"]
        if self.n_subjects is not None:
            lines.append(f"Number of subjects: {self.n_subjects}")
        if self.n_trials is not None:
            lines.append(f"Number of trials: {self.n_trials}")
        if self.model:
            lines.append("Model:")
            lines += [f"  {m}" for m in self.model]
        if self.family:
            lines.append(f"Family: {self.family}")
        lines.append(
            f"Sampling: {self.chains} chains, {self.warmup} warmups and {self.iterations} "
            f"iterations were used. Longest elapsed time is {self.elapsed:.0f} s.")
        lines.append("")
        lines.append("Regression coefficients:" if self.regression else "Parameters:")
        lines += format_table(self.table_rows())
        lines.append(f"Maximum R-hat: {self.max_rhat:.3f}")
        return "\n".join(lines) + "\n"


# significant digits per column; decimals are chosen from the smallest
# magnitude in the column and capped at 6
_SIG = {"mean": 4, "sd": 3, "q2.5": 4, "q97.5": 4}
_MAX_DECIMALS = 6


def _decimals(values, sig):
    v = np.abs(np.asarray(values, dtype=float))
    v = v[np.isfinite(v) & (v > 0)]
    if v.size == 0:
        return 0
    d = sig - 1 - int(math.floor(math.log10(v.min())))
    return int(min(max(d, 0), _MAX_DECIMALS))


def format_table(df: pd.DataFrame) -> list[str]:
    """Right-aligned text table with a 1-based row index."""
    cols = [("variable", "variable")]
    cells = {"variable": [str(v) for v in df["variable"]]}
    for key, head in (("mean", "mean"), ("sd", "sd"), ("q2.5", "2.5%"), ("q97.5", "97.5%")):
        d = _decimals(df[key], _SIG[key])
        cells[key] = [f"{x:.{d}f}" if np.isfinite(x) else "NA" for x in df[key]]
        cols.append((key, head))
    cells["n_eff"] = [f"{x:.0f}" if np.isfinite(x) else "NA" for x in df["n_eff"]]
    cells["rhat"] = [f"{x:.3f}" if np.isfinite(x) else "NA" for x in df["rhat"]]
    cols += [("n_eff", "n_eff"), ("rhat", "Rhat")]
    idx = [str(i + 1) for i in range(len(df))]
    iw = max([len(s) for s in idx] + [0])
    widths = {k: max([len(h)] + [len(s) for s in cells[k]]) for k, h in cols}
    out = [" " * iw + "".join(" " + h.rjust(widths[k]) for k, h in cols)]
    for i in range(len(df)):
        out.append(idx[i].ljust(iw) + "".join(" " + cells[k][i].rjust(widths[k]) for k, _ in cols))
    return out


def summarize_array(values: np.ndarray, names) -> pd.DataFrame:
    """Per-parameter mean/sd/quantiles/ESS/R-hat from (chain, draw, param)."""
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroVarianceWarning)
        for j, name in enumerate(names):
            x = values[:, :, j]
            flat = x.ravel()
            q = np.quantile(flat, [0.025, 0.975])
            rows.append({
                "variable": name,
                "mean": float(flat.mean()),
                "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
                "q2.5": float(q[0]),
                "q97.5": float(q[1]),
                "n_eff": ess(x) if x.shape[1] >= 4 else float("nan"),
                "rhat": split_rhat(x) if x.shape[1] >= 4 else float("nan"),
            })
    return pd.DataFrame(rows, columns=["variable", "mean", "sd", "q2.5", "q97.5", "n_eff", "rhat"])


def summarize(draws, model=None) -> FitSummary:
    """Reduce posterior draws to a :class:`FitSummary`.

    With a ``model`` the report header carries subject/trial counts, the
    formulas and the family, and the regression coefficients lead the table.
    """
    table = summarize_array(draws.values, draws.names)
    cfg = draws.config
    s = FitSummary(
        table=table,
        chains=draws.n_chains,
        warmup=cfg.warmup if cfg else 0,
        iterations=cfg.iterations if cfg else draws.n_draws,
        elapsed=float(np.max(draws.elapsed)) if len(draws.elapsed) else 0.0,
        divergences=int(np.sum(draws.divergences)),
    )
    if model is not None:
        s.regression = model.regression_labels()
        s.n_subjects = model.design.n_subjects
        s.n_trials = model.design.n_trials
        s.model = model.spec.lines()
        s.family = model.spec.family
    return s
