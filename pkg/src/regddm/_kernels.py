"""Compiled per-trial WFPT log density and gradient.

Same series, term counts and error control as the array code in
:mod:`regddm.wfpt`, written as a scalar loop so each observation only pays
for the terms it needs.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)
_PI2 = math.pi * math.pi
_TINY = np.finfo(np.float64).tiny
_EPS_FLOOR = 1e-300
_MAX_TERMS = 1000.0


@njit(cache=True)
def _n_terms(u, eps):
    c = 2.0 * math.sqrt(2.0 * math.pi * u) * eps
    if c < 1.0:
        ks = 2.0 + math.sqrt(max(-2.0 * u * math.log(c), 0.0))
        ks = max(ks, math.sqrt(u) + 1.0)
    else:
        ks = 2.0
    d = math.pi * u * eps
    base = 1.0 / (math.pi * math.sqrt(u))
    if d < 1.0:
        kl = max(math.sqrt(max(-2.0 * math.log(d) / (_PI2 * u), 0.0)), base)
    else:
        kl = base
    return min(math.ceil(ks), _MAX_TERMS), min(math.ceil(kl), _MAX_TERMS)


@njit(cache=True)
def _lower(t, a, w, v, tol):
    """log density at the lower boundary and partials in (t, a, w, v)."""
    u = t / (a * a)
    log_scale = -2.0 * math.log(a) - v * a * w - v * v * t / 2.0
    eps = max(min(tol, tol * math.exp(-min(log_scale, 700.0))), _EPS_FLOOR)
    ks, kl = _n_terms(u, eps)
    if ks < kl:
        lo = -math.floor((ks - 1.0) / 2.0)
        hi = math.ceil((ks - 1.0) / 2.0)
        s0 = 0.0
        su = 0.0
        sw = 0.0
        k = lo
        while k <= hi:
            y = w + 2.0 * k
            e = math.exp(-(y * y - w * w) / (2.0 * u))
            s0 += y * e
            su += y * y * y * e
            sw += (1.0 - y * y / u) * e
            k += 1.0
        s0 = max(s0, _TINY)
        logf = -0.5 * _LOG_2PI - 1.5 * math.log(u) - w * w / (2.0 * u) + math.log(s0)
        dfu = -1.5 / u + su / (2.0 * u * u) / s0
        dfw = sw / s0
    else:
        l0 = 0.0
        lu = 0.0
        lw = 0.0
        n = int(kl)
        for ki in range(1, n + 1):
            k = float(ki)
            e = math.exp(-(k * k - 1.0) * _PI2 * u / 2.0)
            sn = math.sin(k * math.pi * w)
            l0 += k * e * sn
            lu += k * (-(k * k) * _PI2 / 2.0) * e * sn
            lw += k * k * math.pi * e * math.cos(k * math.pi * w)
        l0 = max(l0, _TINY)
        logf = _LOG_PI - _PI2 * u / 2.0 + math.log(l0)
        dfu = lu / l0
        dfw = lw / l0
    logp = log_scale + logf
    d_t = -v * v / 2.0 + dfu / (a * a)
    d_a = -2.0 / a - v * w + dfu * (-2.0 * t / (a * a * a))
    d_w = -v * a + dfw
    d_v = -a * w - v * t
    return logp, d_t, d_a, d_w, d_v


@njit(cache=True)
def logp_grad(rt, resp, a, t0, z, v, tol, logp, grad):
    """Fill ``logp`` (n,) and ``grad`` (4, n) in place; inputs are 1-d, equal length."""
    for i in range(rt.shape[0]):
        t = rt[i] - t0[i]
        if not t > 0.0:
            logp[i] = -np.inf
            for j in range(4):
                grad[j, i] = np.nan
            continue
        if resp[i] == 1.0:
            w = 1.0 - z[i]
            vv = -v[i]
            sign = -1.0
        else:
            w = z[i]
            vv = v[i]
            sign = 1.0
        lp, d_t, d_a, d_w, d_v = _lower(t, a[i], w, vv, tol)
        logp[i] = lp
        grad[0, i] = d_a
        grad[1, i] = -d_t
        grad[2, i] = sign * d_w
        grad[3, i] = sign * d_v


@njit(cache=True)
def trial_term(rt, resp, subj, base, cov, slope_param, slopes, tol, g_base, g_slopes):
    """Summed log likelihood of all trials with gradients scattered to subjects.

    ``base`` is (4, N) subject intercepts in (a, t0, z, v) order; column ``j``
    of ``cov`` (n_trials, K) multiplies ``slopes[j]`` (N,) and adds to
    parameter ``slope_param[j]``. ``g_base`` and ``g_slopes`` are accumulated
    in place. Returns ``-inf`` as soon as any trial is out of domain.
    """
    total = 0.0
    p = np.empty(4)
    k_slopes = slope_param.shape[0]
    for i in range(rt.shape[0]):
        s = subj[i]
        for k in range(4):
            p[k] = base[k, s]
        for j in range(k_slopes):
            p[slope_param[j]] += cov[i, j] * slopes[j, s]
        a = p[0]
        t0 = p[1]
        z = p[2]
        v = p[3]
        if not (a > 0.0 and t0 >= 0.0 and z > 0.0 and z < 1.0 and math.isfinite(a)
                and math.isfinite(t0) and math.isfinite(v)):
            return -np.inf
        t = rt[i] - t0
        if not t > 0.0:
            return -np.inf
        if resp[i] == 1:
            w = 1.0 - z
            vv = -v
            sign = -1.0
        else:
            w = z
            vv = v
            sign = 1.0
        lp, d_t, d_a, d_w, d_v = _lower(t, a, w, vv, tol)
        total += lp
        gk0 = d_a
        gk1 = -d_t
        gk2 = sign * d_w
        gk3 = sign * d_v
        g_base[0, s] += gk0
        g_base[1, s] += gk1
        g_base[2, s] += gk2
        g_base[3, s] += gk3
        for j in range(k_slopes):
            q = slope_param[j]
            gq = gk0 if q == 0 else gk1 if q == 1 else gk2 if q == 2 else gk3
            g_slopes[j, s] += gq * cov[i, j]
    return total


# ---------------------------------------------------------------------------
# subject hierarchy; link codes 0 identity, 1 log, 2 logit

_HALF_LOG_2PI = 0.5 * _LOG_2PI


@njit(cache=True, error_model="numpy")
def _link(x, code):
    """g(x), g'(x), g''(x) of the hierarchy link."""
    if code == 0:
        return x, 1.0, 0.0
    if code == 1:
        return math.log(x), 1.0 / x, -1.0 / (x * x)
    q = 1.0 - x
    return math.log(x) - math.log1p(-x), 1.0 / (x * q), (2.0 * x - 1.0) / (x * x * q * q)


@njit(cache=True, error_model="numpy")
def _inv_link(eta, code):
    """x = g^-1(eta) and dx/deta."""
    if code == 0:
        return eta, 1.0
    if code == 1:
        x = math.exp(eta)
        return x, x
    if eta >= 0.0:
        x = 1.0 / (1.0 + math.exp(-eta))
    else:
        e = math.exp(eta)
        x = e / (1.0 + e)
    return x, x * (1.0 - x)


@njit(cache=True, error_model="numpy")
def hier_centered(x, mu, sig, code, gx):
    """``sum_i log N(g(x_i) | g(mu), (sig g'(mu))^2) + log g'(x_i)``.

    Accumulates d/dx into ``gx`` and returns ``(lp, d/dmu, d/dsig)``.
    """
    gmu, g1mu, g2mu = _link(mu, code)
    s = sig * g1mu
    log_s = math.log(s)
    lp = 0.0
    sum_r = 0.0
    sum_ds = 0.0
    for i in range(x.shape[0]):
        gxi, g1x, g2x = _link(x[i], code)
        r = (gxi - gmu) / s
        lp += -0.5 * r * r - log_s - _HALF_LOG_2PI + math.log(g1x)
        gx[i] += -r / s * g1x + g2x / g1x
        sum_r += r / s
        sum_ds += (r * r - 1.0) / s
    return lp, sum_r * g1mu + sum_ds * sig * g2mu, sum_ds * g1mu


@njit(cache=True, error_model="numpy")
def nc_forward(mu, sig, xi, code, x, dx):
    """Non-centered map ``x_i = g^-1(g(mu) + sig g'(mu) xi_i)``; fills ``x`` and ``dx``."""
    gmu, g1mu, _ = _link(mu, code)
    for i in range(xi.shape[0]):
        x[i], dx[i] = _inv_link(gmu + sig * g1mu * xi[i], code)


@njit(cache=True, error_model="numpy")
def nc_backward(gterm, dx, mu, sig, xi, code, g_raw):
    """Chain d/dx of the subject terms back to ``xi`` (accumulated into
    ``g_raw``), and return ``(d/dmu, d/dsig)``; also adds the standard-normal
    prior of ``xi`` and returns its log density first."""
    _, g1mu, g2mu = _link(mu, code)
    lp = 0.0
    dmu = 0.0
    dsig = 0.0
    for i in range(xi.shape[0]):
        ge = gterm[i] * dx[i]
        g_raw[i] += ge * sig * g1mu - xi[i]
        dsig += ge * xi[i]
        dmu += ge * (g1mu + sig * g2mu * xi[i])
        lp += -0.5 * xi[i] * xi[i] - _HALF_LOG_2PI
    return lp, dmu, dsig * g1mu
