"""Write the small example dataset shipped in ``data/``.

Twelve subjects with age, education, gender and an iq score that depends on
the drift intercept, and a memory-load covariate that lowers drift per trial.
One education value is left missing to exercise the missing-covariate path.
"""
from pathlib import Path

import numpy as np
import pandas as pd

from regddm.simulate import simulate_trials

OUT = Path(__file__).resolve().parents[1] / "data"


def main(n_subjects=12, n_trials=60, seed=7):
    rng = np.random.default_rng(seed)
    ids = np.array([str(i + 1) for i in range(n_subjects)])
    a = rng.uniform(1.0, 2.0, n_subjects)
    t = rng.uniform(0.2, 0.4, n_subjects)
    z = rng.uniform(0.45, 0.55, n_subjects)
    v0 = rng.normal(2.0, 0.5, n_subjects)
    v_mem = rng.normal(-0.3, 0.1, n_subjects)
    memload = rng.integers(1, 4, (n_subjects, n_trials)).astype(float)
    trials = simulate_trials(ids, a, t, z, v0, n_trials, rng, {"memload": v_mem},
                             {"memload": memload})
    trials["rt"] = trials["rt"].round(4)
    trials["memload"] = trials["memload"].astype(int)
    age = rng.integers(20, 70, n_subjects)
    education = rng.integers(10, 20, n_subjects)
    iq = np.round(100 + 8 * (v0 - 2.0) / 0.5 - 0.1 * (age - 45) + rng.normal(0, 5, n_subjects))
    subjects = pd.DataFrame({
        "id": ids, "age": age, "education": pd.array(education, dtype="Int64"),
        "gender": np.where(rng.random(n_subjects) < 0.5, "F", "M"), "iq": iq.astype(int),
    })
    subjects.loc[4, "education"] = pd.NA
    OUT.mkdir(exist_ok=True)
    subjects.to_csv(OUT / "example_subjects.csv", index=False, na_rep="NA")
    trials[["id", "memload", "response", "rt"]].to_csv(OUT / "example_trials.csv", index=False)


if __name__ == "__main__":
    main()
