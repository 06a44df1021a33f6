"""Replicated generate -> fit -> score runs for the simulation studies.

Each replication writes one CSV under ``<out_dir>/reps``; a replication whose
file exists is read back instead of recomputed, so an interrupted experiment
resumes where it stopped. Seeds are derived from ``(seed, N, n, q, rep)`` so
every replication is reproducible on its own and independent of scheduling.
"""
from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .fit import fit_model
from .formula import parse_formula, parse_model_spec
from .sampler import SamplerConfig
from .simulate import SimConfig, generate
from .twostep import fit_ddm_only, ols_fit

log = logging.getLogger(__name__)

RECORD_COLUMNS = ["scenario", "N", "n", "q", "rep", "seed", "method", "variable", "truth",
                  "estimate", "sd", "lower", "upper", "p", "mse_v0", "wall", "max_rhat",
                  "divergences"]


@dataclass
class ExperimentConfig:
    name: str = "sim1-outcome"
    replications: int = 30
    subjects: list[int] = field(default_factory=lambda: [50])
    trials: list[int] = field(default_factory=lambda: [50, 100, 150])
    q: list[int] = field(default_factory=lambda: [0])
    chains: int = 4
    warmup: int = 500
    iterations: int = 1000
    seed: int = 0
    threads: int = 1
    twostep: bool | None = None      # default: on for the sim1 scenarios
    reference: bool = True
    out_dir: str = "experiment_out"

    def conditions(self):
        qs = self.q if self.name == "sim2" else [0]
        return list(itertools.product(self.subjects, self.trials, qs))

    @property
    def run_twostep(self):
        return self.name != "sim2" if self.twostep is None else self.twostep


def replication_seed(seed, N, n, q, rep) -> int:
    return int(np.random.SeedSequence([int(seed), int(N), int(n), int(q), int(rep)])
               .generate_state(1)[0])


def rep_path(out_dir, N, n, q, rep) -> Path:
    return Path(out_dir) / "reps" / f"N{N}_n{n}_q{q}_rep{rep:03d}.csv"


def _target_terms(cfg: ExperimentConfig, q: int):
    """Regression coefficients scored by each scenario."""
    if cfg.name == "sim1-outcome":
        return ["beta_u"]
    if cfg.name == "sim1-predictor":
        return ["beta_v_0"]
    return ["beta_v_0"] + [f"beta_v_x{k + 1}" for k in range(q)]


def _second_step_name(var):
    # beta_v_x1 -> v_x1, beta_u -> u
    return var[len("beta_"):]


def _mse_v0(estimates, truth_subjects):
    est = np.asarray(estimates, dtype=float)
    return float(np.mean((est - truth_subjects["v_0"].to_numpy()) ** 2))


def run_replication(cfg: ExperimentConfig, N: int, n: int, q: int, rep: int) -> pd.DataFrame:
    """One generate -> fit -> score cycle; returns long-format records."""
    seed = replication_seed(cfg.seed, N, n, q, rep)
    sim = SimConfig(cfg.name, N, n, q, seed)
    subjects, trials, truth = generate(sim)
    spec = parse_model_spec(truth.formulas)
    scfg = SamplerConfig(chains=cfg.chains, warmup=cfg.warmup, iterations=cfg.iterations,
                         seed=seed, threads=1)
    ids = truth.subjects["id"].tolist()
    base = {"scenario": cfg.name, "N": N, "n": n, "q": q, "rep": rep, "seed": seed}
    rows = []
    terms = _target_terms(cfg, q)

    t0 = time.perf_counter()
    res = fit_model(spec, subjects, trials, scfg)
    wall = time.perf_counter() - t0
    tab = res.summary.table.set_index("variable")
    v0_hat = [tab.loc[f"v_0[{i}]", "mean"] for i in ids]
    for var in terms:
        r = tab.loc[var]
        rows.append({**base, "method": "regddm", "variable": var,
                     "truth": truth.coefficients.get(var, np.nan), "estimate": r["mean"],
                     "sd": r["sd"], "lower": r["q2.5"], "upper": r["q97.5"], "p": np.nan,
                     "mse_v0": _mse_v0(v0_hat, truth.subjects), "wall": wall,
                     "max_rhat": res.summary.max_rhat,
                     "divergences": int(res.draws.divergences.sum())})

    reg = parse_formula(truth.formulas[-1])
    if cfg.run_twostep:
        t0 = time.perf_counter()
        stage = fit_ddm_only(spec, subjects, trials, scfg)
        wall = time.perf_counter() - t0
        df = subjects.frame.merge(stage.estimates, on="id")
        ols = _ols_on(df, reg)
        ss = stage.fit.summary
        for var in terms:
            j = ols.names.index(_second_step_name(var))
            rows.append({**base, "method": "twostep", "variable": var,
                         "truth": truth.coefficients.get(var, np.nan), "estimate": ols.coef[j],
                         "sd": ols.se[j], "lower": np.nan, "upper": np.nan, "p": ols.p[j],
                         "mse_v0": _mse_v0(stage.estimates["v_0"], truth.subjects), "wall": wall,
                         "max_rhat": ss.max_rhat, "divergences": int(stage.fit.draws.divergences.sum())})

    if cfg.reference:
        df = subjects.frame.merge(truth.subjects, on="id")
        ols = _ols_on(df, reg)
        for var in terms:
            j = ols.names.index(_second_step_name(var))
            rows.append({**base, "method": "reference", "variable": var,
                         "truth": truth.coefficients.get(var, np.nan), "estimate": ols.coef[j],
                         "sd": ols.se[j], "lower": np.nan, "upper": np.nan, "p": ols.p[j],
                         "mse_v0": 0.0, "wall": 0.0, "max_rhat": np.nan, "divergences": 0})
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def _ols_on(df, f):
    X = np.column_stack([np.ones(len(df))] + [df[t].to_numpy(dtype=float) for t in f.rhs])
    return ols_fit(df[f.lhs].to_numpy(dtype=float), X, ["(Intercept)"] + list(f.rhs))


def _job(args):
    cfg, N, n, q, rep = args
    path = rep_path(cfg.out_dir, N, n, q, rep)
    out = run_replication(cfg, N, n, q, rep)
    tmp = path.with_suffix(".tmp")
    out.to_csv(tmp, index=False, float_format="%.10g")
    tmp.replace(path)    # the finished file is the checkpoint
    return str(path)


def run_experiment(cfg: ExperimentConfig, progress=None) -> pd.DataFrame:
    """Run every pending replication and return all records.

    Also writes ``records.csv`` (all replications) and ``aggregate.csv``
    (per-condition means) to ``cfg.out_dir``.
    """
    out = Path(cfg.out_dir)
    (out / "reps").mkdir(parents=True, exist_ok=True)
    jobs = []
    for N, n, q in cfg.conditions():
        for rep in range(cfg.replications):
            if not rep_path(out, N, n, q, rep).exists():
                jobs.append((cfg, N, n, q, rep))
    log.info("%d replications pending", len(jobs))
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            for p in ex.map(_job, jobs):
                if progress:
                    progress(p)
    else:
        for j in jobs:
            p = _job(j)
            if progress:
                progress(p)
    frames = []
    for N, n, q in cfg.conditions():
        for rep in range(cfg.replications):
            frames.append(pd.read_csv(rep_path(out, N, n, q, rep), float_precision="round_trip"))
    records = pd.concat(frames, ignore_index=True)
    records.to_csv(out / "records.csv", index=False, float_format="%.10g")
    aggregate(records).to_csv(out / "aggregate.csv", index=False, float_format="%.10g")
    return records


def aggregate(records: pd.DataFrame) -> pd.DataFrame:
    """Per-condition means over replications (the data behind the figures)."""
    keys = ["scenario", "N", "n", "q", "method", "variable"]
    g = records.groupby(keys, sort=True)
    out = g.agg(reps=("rep", "count"), truth=("truth", "first"), estimate=("estimate", "mean"),
                estimate_sd=("estimate", "std"), posterior_sd=("sd", "mean"),
                mse_v0=("mse_v0", "mean"), wall=("wall", "mean"), max_rhat=("max_rhat", "max"))
    out["bias"] = out["estimate"] - out["truth"]
    return out.reset_index()


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


# desk-scale versions of the published simulation grids
PRESETS = {
    "recovery": ExperimentConfig(name="sim1-outcome", replications=10, subjects=[20],
                                 trials=[50, 100], chains=4, warmup=200, iterations=400),
    "posterior-sd": ExperimentConfig(name="sim2", replications=5, subjects=[20, 50], trials=[50],
                                     q=[1], chains=4, warmup=200, iterations=400),
    "scaling": ExperimentConfig(name="sim2", replications=1, subjects=[20, 40], trials=[50, 100],
                                q=[0], chains=4, warmup=200, iterations=400, reference=False),
}


def preset(name: str, out_dir: str | None = None, **overrides) -> ExperimentConfig:
    cfg = replace(PRESETS[name], out_dir=out_dir or f"runs/{name}")
    return with_overrides(cfg, **overrides)
