import numpy as np
import pandas as pd

from conftest import tiny_tables
from regddm import SamplerConfig, regddm
from regddm.formula import parse_model_spec
from regddm.io import make_subject_table
from regddm.twostep import fit_ddm_only

TINY = SamplerConfig(chains=1, warmup=20, iterations=40, seed=0)


def test_regddm_drops_subjects_without_trials(quiet):
    S, T = tiny_tables(4, 6)
    extra = pd.concat([S.frame, pd.DataFrame({"id": ["99"], "iq": [90.0], "g": ["F"],
                                              "y": [0.1]})], ignore_index=True)
    res = regddm(make_subject_table(extra), T, ["v ~ x", "y ~ v_0 + iq"], config=TINY)
    assert res.model.design.n_subjects == 4
    assert res.summary.regression == ["beta_0", "beta_v_0", "beta_iq", "sigma"]
    assert res.draws.values.shape == (1, 20, len(res.model.names))


def test_first_stage_posterior_means(quiet):
    S, T = tiny_tables(4, 6)
    stage = fit_ddm_only(parse_model_spec(["v ~ x", "y ~ v_0"]), S, T, TINY)
    assert list(stage.estimates.columns) == ["id", "a_0", "t_0", "z_0", "v_0", "v_x"]
    assert stage.fit.summary.regression == []
    np.testing.assert_allclose(stage.estimates["v_0"].iloc[0],
                               stage.fit.draws[f"v_0[{S.frame['id'][0]}]"].mean())
