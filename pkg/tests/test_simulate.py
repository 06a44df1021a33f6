import numpy as np
import pytest

from regddm.simulate import SimConfig, generate, model_formulas, write_simulation


@pytest.mark.parametrize("scenario,q", [("sim1-outcome", 0), ("sim1-predictor", 0), ("sim2", 2)])
def test_shapes_and_truth(scenario, q):
    S, T, truth = generate(SimConfig(scenario, subjects=6, trials=7, q=q, seed=1))
    assert len(S.frame) == 6 and len(T.frame) == 42
    assert T.frame.groupby("id").size().eq(7).all()
    merged = T.frame.merge(truth.subjects[["id", "t_0"]], on="id")
    assert np.all(merged["rt"] > merged["t_0"])
    assert set(T.frame["response"].unique()) <= {0, 1}
    expected = {"id", "a_0", "t_0", "z_0", "v_0"} | {f"v_x{k + 1}" for k in range(q)}
    assert set(truth.subjects.columns) == expected
    assert truth.formulas == model_formulas(SimConfig(scenario, q=q))
    params = truth.as_parameters()
    assert params["v_0[1]"] == truth.subjects.loc[0, "v_0"]


def test_deterministic_by_seed():
    a = generate(SimConfig("sim2", 5, 10, q=1, seed=3))
    b = generate(SimConfig("sim2", 5, 10, q=1, seed=3))
    c = generate(SimConfig("sim2", 5, 10, q=1, seed=4))
    assert a[1].frame.equals(b[1].frame)
    assert not a[1].frame.equals(c[1].frame)


def test_generating_distributions():
    S, T, truth = generate(SimConfig("sim1-outcome", subjects=4000, trials=1, seed=0))
    u = S.frame["u"].to_numpy()
    v0 = truth.subjects["v_0"].to_numpy()
    assert u.std() == pytest.approx(0.5, rel=0.05)
    slope, icpt = np.polyfit(u, v0, 1)
    assert slope == pytest.approx(1.0, abs=0.05) and icpt == pytest.approx(1.5, abs=0.03)
    assert np.std(v0 - (1.5 + u)) == pytest.approx(0.5, rel=0.05)
    a = truth.subjects["a_0"]
    assert a.min() >= 1.0 and a.max() <= 3.0
    assert truth.subjects["z_0"].between(0.4, 0.6).all()


def test_sim2_covariates_uniform_unit_variance():
    _, T, _ = generate(SimConfig("sim2", subjects=50, trials=200, q=2, seed=2))
    for x in ("x1", "x2"):
        assert abs(T.frame[x]).max() <= np.sqrt(3)
        assert T.frame[x].var() == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("kwargs", [
    {"scenario": "sim3"}, {"subjects": 0}, {"trials": 0}, {"scenario": "sim2", "q": 3},
    {"scenario": "sim1-outcome", "q": 1},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_write_simulation(tmp_path):
    paths = write_simulation(*generate(SimConfig("sim1-predictor", 3, 4, seed=0)), tmp_path)
    assert [p.name for p in paths] == ["subjects.csv", "trials.csv", "truth.csv"]
    assert all(p.stat().st_size > 0 for p in paths)
