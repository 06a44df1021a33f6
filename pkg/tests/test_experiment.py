import dataclasses
import warnings

import pandas as pd
import pytest

from regddm.experiment import (PRESETS, RECORD_COLUMNS, ExperimentConfig, aggregate, preset,
                               rep_path, replication_seed, run_experiment)

TINY = dict(replications=2, subjects=[3], trials=[8], chains=1, warmup=20, iterations=40)


def test_replication_seed_deterministic_and_distinct():
    assert replication_seed(0, 20, 50, 0, 1) == replication_seed(0, 20, 50, 0, 1)
    seeds = {replication_seed(0, N, n, 0, r) for N in (20, 50) for n in (50, 100) for r in range(5)}
    assert len(seeds) == 20


def test_conditions_grid():
    assert ExperimentConfig(name="sim1-outcome", q=[1, 2]).conditions() == \
        [(50, 50, 0), (50, 100, 0), (50, 150, 0)]
    assert len(ExperimentConfig(name="sim2", trials=[50], q=[0, 1, 2]).conditions()) == 3
    assert ExperimentConfig(name="sim2").run_twostep is False
    assert ExperimentConfig(name="sim1-predictor").run_twostep is True


def test_presets():
    cfg = preset("recovery", "x", replications=3, threads=None)
    assert cfg.out_dir == "x" and cfg.replications == 3
    assert cfg.threads == PRESETS["recovery"].threads
    with pytest.raises(KeyError):
        preset("nope")


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    cfg = ExperimentConfig(name="sim1-outcome", out_dir=str(out), **TINY)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")      # tiny chains trip the R-hat warnings
        records = run_experiment(cfg)
    return cfg, records


def test_records_shape(tiny_run):
    cfg, records = tiny_run
    assert list(records.columns) == RECORD_COLUMNS
    assert sorted(records["method"].unique()) == ["reference", "regddm", "twostep"]
    assert len(records) == 2 * 3
    assert (records["variable"] == "beta_u").all()
    assert (records.loc[records["method"] == "reference", "mse_v0"] == 0).all()
    agg = pd.read_csv(f"{cfg.out_dir}/aggregate.csv")
    assert set(agg["method"]) == {"reference", "regddm", "twostep"}
    assert (agg["reps"] == 2).all()


def test_resume_reads_checkpoints(tiny_run):
    cfg, records = tiny_run
    path = rep_path(cfg.out_dir, 3, 8, 0, 1)
    frame = pd.read_csv(path)
    frame.loc[:, "estimate"] = 123.0       # a recomputed file would not carry this
    frame.to_csv(path, index=False)
    again = run_experiment(cfg)
    assert (again.loc[again["rep"] == 1, "estimate"] == 123.0).all()
    pd.testing.assert_frame_equal(again[again["rep"] == 0], records[records["rep"] == 0])


def test_replication_reproducible(tiny_run, tmp_path):
    cfg, records = tiny_run
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fresh = run_experiment(dataclasses.replace(cfg, out_dir=str(tmp_path), replications=1))
    cols = ["seed", "method", "estimate", "sd", "mse_v0"]
    pd.testing.assert_frame_equal(fresh[cols], records.loc[records["rep"] == 0, cols])


def test_aggregate_bias():
    rec = pd.DataFrame({"scenario": "s", "N": 1, "n": 1, "q": 0, "method": "m",
                        "variable": "b", "rep": [0, 1], "truth": 1.0, "estimate": [1.5, 2.5],
                        "sd": [0.1, 0.3], "mse_v0": [1.0, 3.0], "wall": 1.0, "max_rhat": [1.0, 1.2]})
    agg = aggregate(rec)
    row = agg.iloc[0]
    assert row["bias"] == pytest.approx(1.0) and row["posterior_sd"] == pytest.approx(0.2)
    assert row["mse_v0"] == 2.0 and row["max_rhat"] == 1.2 and row["reps"] == 2
