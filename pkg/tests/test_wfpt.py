import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from regddm import wfpt
from regddm.wfpt import DdmParams, TrialOutcome

params = st.builds(
    DdmParams,
    a=st.floats(0.5, 3.0),
    t0=st.floats(0.05, 0.6),
    z=st.floats(0.1, 0.9),
    v=st.floats(-4.0, 4.0),
)


def _navarro_fuss_large(t, a, z, v, terms=200):
    """Independent large-time series for the lower boundary density."""
    u = t / a ** 2
    k = np.arange(1, terms + 1)
    s = np.sum(k * np.exp(-(k ** 2) * math.pi ** 2 * u / 2) * np.sin(k * math.pi * z))
    return math.pi / a ** 2 * math.exp(-v * a * z - v * v * t / 2) * s


@pytest.mark.parametrize("t", [0.05, 0.3, 1.0, 4.0])
@pytest.mark.parametrize("a,z,v", [(1.0, 0.5, 0.0), (2.0, 0.3, 1.5), (1.5, 0.7, -2.0)])
def test_density_matches_long_series(t, a, z, v):
    ref = _navarro_fuss_large(t, a, z, v, terms=2000 if t < 0.1 else 200)
    got = float(wfpt.density(0.2 + t, 0, a, 0.2, z, v))
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-12)


@given(params, st.floats(0.01, 5.0))
def test_reflection(p, dt):
    rt = p.t0 + dt
    lo = wfpt.log_density(rt, 0, p.a, p.t0, p.z, p.v)
    hi = wfpt.log_density(rt, 1, p.a, p.t0, 1 - p.z, -p.v)
    if 1 - (1 - p.z) == p.z:
        assert lo == hi     # same code path, bit for bit
    else:
        assert lo == pytest.approx(hi, rel=1e-12)


@given(params, st.floats(0.01, 3.0), st.floats(0.001, 1.0), st.integers(0, 1))
def test_time_shift(p, dt, shift, resp):
    rt = p.t0 + dt
    x = wfpt.log_density(rt, resp, p.a, p.t0, p.z, p.v)
    y = wfpt.log_density(rt + shift, resp, p.a, p.t0 + shift, p.z, p.v)
    assert x == pytest.approx(y, rel=1e-12, abs=1e-12)


@given(params, st.floats(-1.0, 5.0), st.integers(0, 1))
def test_nonnegative_and_zero_before_t0(p, dt, resp):
    d = float(wfpt.density(p.t0 + dt, resp, p.a, p.t0, p.z, p.v))
    assert d >= 0.0
    if dt <= 0:
        assert d == 0.0
        assert wfpt.log_density(p.t0 + dt, resp, p.a, p.t0, p.z, p.v) == -np.inf


def test_rt_equal_t0_is_zero():
    assert wfpt.log_density(0.3, 0, 1.0, 0.3, 0.5, 1.0) == -np.inf


@settings(max_examples=25, deadline=None)
@given(params)
def test_normalization(p):
    total = 0.0
    for resp in (0, 1):
        f = lambda rt: float(wfpt.density(rt, resp, p.a, p.t0, p.z, p.v))  # noqa: E731
        cuts = [p.t0, p.t0 + 0.05, p.t0 + 1, p.t0 + 5, p.t0 + 30]
        total += sum(integrate.quad(f, lo, hi, limit=200)[0] for lo, hi in zip(cuts, cuts[1:]))
    assert abs(total - 1.0) < 1e-3


@given(params)
def test_choice_probability_matches_density_mass(p):
    f = lambda rt: float(wfpt.density(rt, 1, p.a, p.t0, p.z, p.v))  # noqa: E731
    cuts = [p.t0, p.t0 + 0.05, p.t0 + 1, p.t0 + 5, p.t0 + 60]
    mass = sum(integrate.quad(f, lo, hi, limit=200)[0] for lo, hi in zip(cuts, cuts[1:]))
    assert mass == pytest.approx(wfpt.upper_choice_probability(p), abs=1e-6)


@given(params, st.floats(0.01, 3.0), st.integers(0, 1))
def test_gradient_finite_difference(p, dt, resp):
    rt = p.t0 + dt
    _, g = wfpt.log_density_and_grad(rt, resp, p.a, p.t0, p.z, p.v)
    x0 = np.array([p.a, p.t0, p.z, p.v])
    h = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        up = wfpt.log_density(rt, resp, *(x0 + e))
        dn = wfpt.log_density(rt, resp, *(x0 - e))
        fd = (up - dn) / (2 * h)
        assert abs(g[k] - fd) / max(1.0, abs(fd)) < 1e-5


@given(params, st.floats(0.005, 5.0), st.integers(0, 1))
def test_truncation_tolerance(p, dt, resp):
    tol = 1e-10
    x = float(wfpt.density(p.t0 + dt, resp, p.a, p.t0, p.z, p.v, tol=tol))
    y = float(wfpt.density(p.t0 + dt, resp, p.a, p.t0, p.z, p.v, tol=tol / 2))
    assert abs(x - y) < tol


def test_backends_agree():
    rng = np.random.default_rng(0)
    n = 500
    a, t0 = rng.uniform(0.5, 3, n), rng.uniform(0.05, 0.5, n)
    z, v = rng.uniform(0.1, 0.9, n), rng.uniform(-4, 4, n)
    rt = t0 + rng.exponential(1.0, n)
    resp = rng.integers(0, 2, n)
    lp1, g1 = wfpt.log_density_and_grad(rt, resp, a, t0, z, v, backend="compiled")
    lp2, g2 = wfpt.log_density_and_grad(rt, resp, a, t0, z, v, backend="numpy")
    np.testing.assert_allclose(lp1, lp2, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-10)


def test_extreme_parameters_stay_finite():
    lp, g = wfpt.log_density_and_grad(np.array([0.31, 5.0, 40.0]), np.array([0, 1, 0]),
                                      8.0, 0.3, 0.05, 20.0)
    assert np.all(np.isfinite(g) | np.isinf(lp))


def test_domain_validation():
    with pytest.raises(ValueError):
        DdmParams(-1.0, 0.3, 0.5, 1.0)
    with pytest.raises(ValueError):
        DdmParams(1.0, 0.3, 1.0, 1.0)
    with pytest.raises(ValueError):
        DdmParams(1.0, -0.1, 0.5, 1.0)
    with pytest.raises(ValueError):
        TrialOutcome(2, 0.5)
    with pytest.raises(wfpt.UndefinedGradientError):
        wfpt.wfpt_log_density_grad(TrialOutcome(0, 0.2), DdmParams(1.0, 0.3, 0.5, 1.0))


def test_scalar_entry_points_agree():
    p = DdmParams(1.2, 0.25, 0.45, 0.8)
    o = TrialOutcome(1, 0.9)
    assert wfpt.wfpt_log_density(o, p) == pytest.approx(
        float(wfpt.log_density(0.9, 1, 1.2, 0.25, 0.45, 0.8)))
    assert wfpt.wfpt_log_density_grad(o, p).shape == (4,)


def test_upper_probability_limits():
    assert wfpt.upper_probability(1.0, 0.3, 0.0) == pytest.approx(0.3)
    assert wfpt.upper_probability(1.0, 0.5, 50.0) == pytest.approx(1.0)
    assert wfpt.upper_probability(1.0, 0.5, -50.0) == pytest.approx(0.0, abs=1e-12)
    assert wfpt.upper_probability(2.0, 0.4, 1.0) == pytest.approx(
        1 - wfpt.upper_probability(2.0, 0.6, -1.0))


@pytest.mark.parametrize("method", ["rejection", "euler"])
def test_sampler_moments(method):
    p = DdmParams(1.5, 0.3, 0.4, 1.0)
    rng = np.random.default_rng(1)
    n = 200_000 if method == "rejection" else 20_000
    resp, rt = wfpt.sample_first_passage(p, rng, size=n, method=method)
    assert np.all(rt > p.t0)
    assert set(np.unique(resp)) <= {0, 1}
    se = math.sqrt(0.25 / n)
    tol = 5 * se + (0.01 if method == "euler" else 0.0)
    assert abs(resp.mean() - wfpt.upper_choice_probability(p)) < tol
    # mean decision time from the density
    mean_t = sum(integrate.quad(lambda t: t * float(wfpt.density(t + p.t0, r, *vars(p).values())),
                                0, 30, limit=200)[0] for r in (0, 1))
    assert abs((rt - p.t0).mean() - mean_t) < (0.01 if method == "rejection" else 0.03)


def test_sampler_deterministic_and_single():
    p = DdmParams(1.0, 0.2, 0.5, 0.5)
    a = wfpt.sample_first_passage(p, np.random.default_rng(3), size=100)
    b = wfpt.sample_first_passage(p, np.random.default_rng(3), size=100)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    one = wfpt.sample_first_passage(p, np.random.default_rng(3))
    assert isinstance(one, TrialOutcome)
    with pytest.raises(ValueError):
        wfpt.sample_first_passage(p, np.random.default_rng(3), size=5, method="bogus")
