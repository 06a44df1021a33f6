import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from regddm.io import make_subject_table, make_trial_table

# timings vary with machine load; correctness is what the properties check
settings.register_profile("regddm", deadline=None, max_examples=50)
settings.load_profile("regddm")

ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> str:
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"ACCEPTANCE {criterion:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def tiny_tables(n_subjects=3, n_trials=5, seed=0, missing=False):
    """Small subject/trial tables with a trial covariate, a factor and an outcome."""
    rng = np.random.default_rng(seed)
    ids = [str(i + 1) for i in range(n_subjects)]
    iq = rng.normal(100, 15, n_subjects)
    if missing:
        iq[1 % n_subjects] = np.nan
    sub = pd.DataFrame({"id": ids, "iq": iq,
                        "g": [("F", "M")[i % 2] for i in range(n_subjects)],
                        "y": rng.normal(0, 1, n_subjects)})
    rows = [{"id": s, "response": int(rng.integers(0, 2)), "rt": 0.6 + rng.exponential(0.5),
             "x": rng.normal()} for s in ids for _ in range(n_trials)]
    S = make_subject_table(sub)
    return S, make_trial_table(pd.DataFrame(rows), S)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
