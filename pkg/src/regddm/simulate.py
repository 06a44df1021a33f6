"""Synthetic data for the two simulation studies.

Every generator returns ``(SubjectTable, TrialTable, SimTruth)``. Subject
parameters are drawn first, then trials are drawn from the exact first-passage
sampler with constant (a, t, z) per subject and a drift that is linear in the
trial covariates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .io import SubjectTable, TrialTable, make_subject_table, make_trial_table
from .wfpt import sample_first_passage

SCENARIOS = ("sim1-outcome", "sim1-predictor", "sim2")
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class SimConfig:
    scenario: str = "sim1-outcome"
    subjects: int = 50
    trials: int = 100
    q: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.subjects < 1 or self.trials < 1:
            raise ValueError("subjects and trials must be at least 1")
        if self.q not in (0, 1, 2):
            raise ValueError("q must be 0, 1 or 2")
        if self.scenario != "sim2" and self.q != 0:
            raise ValueError(f"scenario {self.scenario!r} has no trial-level variables (q = 0)")


@dataclass
class SimTruth:
    """Latent values behind a simulated dataset.

    ``subjects`` has one row per subject with the derived DDM terms (``a_0``,
    ``t_0``, ``z_0``, ``v_0`` and any slopes ``v_<x>``); ``coefficients`` holds the
    generating values of the regression layer under the paired model.
    """

    subjects: pd.DataFrame
    coefficients: dict[str, float] = field(default_factory=dict)
    formulas: tuple[str, ...] = ()

    def as_parameters(self) -> dict[str, float]:
        """Truth keyed by the model's parameter labels, e.g. ``v_0[3]``."""
        out = dict(self.coefficients)
        for _, row in self.subjects.iterrows():
            sid = row["id"]
            for col in self.subjects.columns:
                if col == "id":
                    continue
                out[f"{col}[{sid}]"] = float(row[col])
        return out


def model_formulas(config: SimConfig) -> tuple[str, ...]:
    """The model each scenario is paired with."""
    if config.scenario == "sim1-outcome":
        return ("v ~ 1", "v_0 ~ u")
    if config.scenario == "sim1-predictor":
        return ("v ~ 1", "y ~ v_0")
    xs = [f"x{k + 1}" for k in range(config.q)]
    ddm = "v ~ " + (" + ".join(xs) if xs else "1")
    reg = "y ~ " + " + ".join(["v_0"] + [f"v_{x}" for x in xs])
    return (ddm, reg)


def _boundary_params(n, rng):
    a = rng.uniform(1.0, 3.0, n)
    t = rng.uniform(0.2, 0.5, n)
    z = rng.uniform(0.4, 0.6, n)
    return a, t, z


def simulate_trials(ids, a, t, z, v0, n_trials, rng, slopes=None, covariates=None):
    """Trials for subjects with constant boundary parameters.

    ``slopes`` maps a covariate name to per-subject slopes on drift;
    ``covariates`` maps the same names to (N, n_trials) values. Trial drift is
    ``v0 + sum_x x * v_x``.
    """
    slopes = slopes or {}
    covariates = covariates or {}
    n = len(ids)
    v = np.repeat(np.asarray(v0, float)[:, None], n_trials, axis=1)
    for name, s in slopes.items():
        v = v + covariates[name] * np.asarray(s, float)[:, None]
    rep = lambda x: np.repeat(np.asarray(x, float)[:, None], n_trials, axis=1)  # noqa: E731
    resp, rt = sample_first_passage((rep(a), rep(t), rep(z), v), rng)
    frame = pd.DataFrame({
        "id": np.repeat(np.asarray(ids), n_trials),
        "response": resp.ravel().astype(np.int64),
        "rt": rt.ravel(),
    })
    for name in slopes:
        frame[name] = covariates[name].ravel()
    assert frame.shape[0] == n * n_trials
    return frame


def _tables(subject_frame, trial_frame):
    subjects = make_subject_table(subject_frame)
    trials = make_trial_table(trial_frame, subjects)
    return subjects, trials


def _ids(n):
    return np.array([str(i + 1) for i in range(n)])


def generate_sim1_outcome(config: SimConfig, rng=None):
    """Drift intercept as the regression outcome: v_0 ~ N(1.5 + u, 0.5^2)."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.subjects
    ids = _ids(n)
    u = rng.normal(0.0, 0.5, n)
    a, t, z = _boundary_params(n, rng)
    v0 = rng.normal(1.5 + u, 0.5)
    trials = simulate_trials(ids, a, t, z, v0, config.trials, rng)
    subjects, trial_table = _tables(pd.DataFrame({"id": ids, "u": u}), trials)
    truth = SimTruth(
        pd.DataFrame({"id": ids, "a_0": a, "t_0": t, "z_0": z, "v_0": v0}),
        {"beta_0": 1.5, "beta_u": 1.0, "sigma": 0.5},
        model_formulas(config),
    )
    return subjects, trial_table, truth


def generate_sim1_predictor(config: SimConfig, rng=None):
    """Drift intercept as a predictor: y ~ N(v_0, 0.5^2)."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.subjects
    ids = _ids(n)
    v0 = rng.normal(1.5, 0.5, n)
    a, t, z = _boundary_params(n, rng)
    y = rng.normal(v0, 0.5)
    trials = simulate_trials(ids, a, t, z, v0, config.trials, rng)
    subjects, trial_table = _tables(pd.DataFrame({"id": ids, "y": y}), trials)
    truth = SimTruth(
        pd.DataFrame({"id": ids, "a_0": a, "t_0": t, "z_0": z, "v_0": v0}),
        {"beta_0": 0.0, "beta_v_0": 1.0, "sigma": 0.5},
        model_formulas(config),
    )
    return subjects, trial_table, truth


def generate_sim2(config: SimConfig, rng=None):
    """Null-effect outcome with q uniform trial covariates on drift.

    Each covariate ``x<k>`` is paired with its own subject slope ``v_x<k>``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n, m = config.subjects, config.trials
    ids = _ids(n)
    a, t, z = _boundary_params(n, rng)
    v0 = rng.normal(1.5, 0.5, n)
    names = [f"x{k + 1}" for k in range(config.q)]
    slopes = {x: rng.normal(0.0, 1.0, n) for x in names}
    covs = {x: rng.uniform(-_SQRT3, _SQRT3, (n, m)) for x in names}
    y = rng.normal(0.0, 1.0, n)
    trials = simulate_trials(ids, a, t, z, v0, m, rng, slopes, covs)
    subjects, trial_table = _tables(pd.DataFrame({"id": ids, "y": y}), trials)
    latent = {"id": ids, "a_0": a, "t_0": t, "z_0": z, "v_0": v0}
    latent.update({f"v_{x}": s for x, s in slopes.items()})
    coefs = {"beta_0": 0.0, "beta_v_0": 0.0, "sigma": 1.0}
    coefs.update({f"beta_v_{x}": 0.0 for x in names})
    truth = SimTruth(pd.DataFrame(latent), coefs, model_formulas(config))
    return subjects, trial_table, truth


GENERATORS = {
    "sim1-outcome": generate_sim1_outcome,
    "sim1-predictor": generate_sim1_predictor,
    "sim2": generate_sim2,
}


def generate(config: SimConfig, rng=None):
    return GENERATORS[config.scenario](config, rng)


def write_simulation(subjects: SubjectTable, trials: TrialTable, truth: SimTruth, out_dir):
    """Write ``subjects.csv``, ``trials.csv`` and ``truth.csv``; returns the paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "subjects.csv", out / "trials.csv", out / "truth.csv"]
    subjects.frame.to_csv(paths[0], index=False, float_format="%.17g")
    trials.frame.to_csv(paths[1], index=False, float_format="%.17g")
    truth.subjects.to_csv(paths[2], index=False, float_format="%.17g")
    return paths
