"""Wiener first-passage time (WFPT) numerics for the four-parameter DDM.

Conventions
-----------
The process starts at ``z * a`` between an absorbing lower boundary at 0 and an
upper boundary at ``a``, drifts with rate ``v`` and unit diffusion coefficient,
and decision time is ``rt - t0``. ``response == 1`` is the upper boundary.

The upper-boundary density is computed as the lower-boundary density with
drift ``-v`` and start ``1 - z``; both branches run through the same kernel.

The standardized lower-boundary density ``f(u | 0, 1, w)`` uses the small-time
and large-time series of Navarro & Fuss (2009), picking per observation the
expansion that needs fewer terms for the requested absolute error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import _kernels

DEFAULT_TOL = 1e-10

PARAM_NAMES = ("a", "t0", "z", "v")

_LOG_2PI = np.log(2.0 * np.pi)


class ParameterDomainError(ValueError):
    """Raised when DDM parameters fall outside their domain."""


class UndefinedGradientError(ValueError):
    """Raised when the gradient is requested at rt <= t0."""


@dataclass(frozen=True)
class DdmParams:
    """Boundary separation ``a``, non-decision time ``t0``, relative start
    ``z`` and drift ``v``."""

    a: float
    t0: float
    z: float
    v: float

    def __post_init__(self):
        check_params(self.a, self.t0, self.z, self.v)

    def reflect(self) -> "DdmParams":
        """Parameters of the mirrored process (start 1 - z, drift -v)."""
        return DdmParams(self.a, self.t0, 1.0 - self.z, -self.v)


@dataclass(frozen=True)
class TrialOutcome:
    response: int
    rt: float

    def __post_init__(self):
        if self.response not in (0, 1):
            raise ValueError(f"response must be 0 or 1, got {self.response!r}")
        if not (np.isfinite(self.rt) and self.rt > 0):
            raise ValueError(f"rt must be finite and positive, got {self.rt!r}")


def check_params(a, t0, z, v):
    a, t0, z, v = (np.asarray(x, dtype=float) for x in (a, t0, z, v))
    for name, x in zip(PARAM_NAMES, (a, t0, z, v)):
        if not np.all(np.isfinite(x)):
            raise ParameterDomainError(f"{name} must be finite")
    if np.any(a <= 0):
        raise ParameterDomainError("a must be positive")
    if np.any(t0 < 0):
        raise ParameterDomainError("t0 must be non-negative")
    if np.any((z <= 0) | (z >= 1)):
        raise ParameterDomainError("z must lie in (0, 1)")


# ---------------------------------------------------------------------------
# series kernels


# guards for extreme parameter values met while exploring far from the mode
_EPS_FLOOR = 1e-300
_MAX_TERMS = 1000.0


def _n_terms(u, eps):
    """Terms needed by each expansion for absolute error ``eps`` on f(u|0,1,w).

    Returns ``(k_small, k_large)`` as float arrays (already rounded up).
    """
    # small-time
    c = 2.0 * np.sqrt(2.0 * np.pi * u) * eps
    with np.errstate(invalid="ignore", divide="ignore"):
        ks = 2.0 + np.sqrt(np.maximum(-2.0 * u * np.log(c), 0.0))
    ks = np.where(c < 1.0, np.maximum(ks, np.sqrt(u) + 1.0), 2.0)
    # large-time
    d = np.pi * u * eps
    base = 1.0 / (np.pi * np.sqrt(u))
    with np.errstate(invalid="ignore", divide="ignore"):
        kl = np.sqrt(np.maximum(-2.0 * np.log(d) / (np.pi**2 * u), 0.0))
    kl = np.where(d < 1.0, np.maximum(kl, base), base)
    return np.minimum(np.ceil(ks), _MAX_TERMS), np.minimum(np.ceil(kl), _MAX_TERMS)


def _small_time(u, w, nterms, need_grad):
    """log f and d log f/du, d log f/dw from the small-time expansion.

    Term k contributes (w + 2k) exp(-(w + 2k)^2 / 2u); the exponent of the
    k = 0 term is factored out.
    """
    kmax = int(np.max(nterms)) if nterms.size else 2
    lo = -np.floor((nterms - 1.0) / 2.0)
    hi = np.ceil((nterms - 1.0) / 2.0)
    ks = np.arange(-((kmax - 1) // 2) - 1, (kmax - 1) // 2 + 2, dtype=float)
    mask = (ks[None, :] >= lo[:, None]) & (ks[None, :] <= hi[:, None])
    y = w[:, None] + 2.0 * ks[None, :]
    uu = u[:, None]
    e = np.where(mask, np.exp(-(y * y - w[:, None] ** 2) / (2.0 * uu)), 0.0)
    s0 = np.sum(y * e, axis=1)
    s0 = np.maximum(s0, np.finfo(float).tiny)
    logf = -0.5 * _LOG_2PI - 1.5 * np.log(u) - w * w / (2.0 * u) + np.log(s0)
    if not need_grad:
        return logf, None, None
    su = np.sum(y**3 * e, axis=1) / (2.0 * u * u)
    sw = np.sum((1.0 - y * y / uu) * e, axis=1)
    return logf, -1.5 / u + su / s0, sw / s0


def _large_time(u, w, nterms, need_grad):
    """log f and its partials from the large-time expansion.

    Term k contributes k exp(-k^2 pi^2 u / 2) sin(k pi w); the k = 1 decay is
    factored out.
    """
    kmax = int(np.max(nterms)) if nterms.size else 1
    ks = np.arange(1, kmax + 1, dtype=float)
    mask = ks[None, :] <= nterms[:, None]
    uu = u[:, None]
    e = np.where(mask, np.exp(-(ks * ks - 1.0)[None, :] * np.pi**2 * uu / 2.0), 0.0)
    sn = np.sin(ks[None, :] * np.pi * w[:, None])
    l0 = np.sum(ks * e * sn, axis=1)
    l0 = np.maximum(l0, np.finfo(float).tiny)
    logf = np.log(np.pi) - np.pi**2 * u / 2.0 + np.log(l0)
    if not need_grad:
        return logf, None, None
    lu = np.sum(ks * (-(ks**2) * np.pi**2 / 2.0) * e * sn, axis=1)
    cs = np.cos(ks[None, :] * np.pi * w[:, None])
    lw = np.sum(ks * ks * np.pi * e * cs, axis=1)
    return logf, lu / l0, lw / l0


def _lower_log_density(t, a, w, v, tol, need_grad):
    """Log density of hitting the lower boundary at decision time ``t > 0``.

    All inputs are 1-d arrays of equal length. Returns the log density and, if
    requested, partials with respect to (t, a, w, v).
    """
    u = t / (a * a)
    log_scale = -2.0 * np.log(a) - v * a * w - v * v * t / 2.0
    # absolute error tol on the density, never looser than tol on f itself
    eps = np.maximum(np.minimum(tol, tol * np.exp(-np.minimum(log_scale, 700.0))), _EPS_FLOOR)
    ks, kl = _n_terms(u, eps)
    small = ks < kl

    logf = np.empty_like(u)
    dfu = np.empty_like(u) if need_grad else None
    dfw = np.empty_like(u) if need_grad else None
    for sel, kernel, nt in ((small, _small_time, ks), (~small, _large_time, kl)):
        if not np.any(sel):
            continue
        lf, lu, lw = kernel(u[sel], w[sel], nt[sel], need_grad)
        logf[sel] = lf
        if need_grad:
            dfu[sel] = lu
            dfw[sel] = lw

    logp = log_scale + logf
    if not need_grad:
        return logp, None
    d_t = -v * v / 2.0 + dfu / (a * a)
    d_a = -2.0 / a - v * w + dfu * (-2.0 * t / a**3)
    d_w = -v * a + dfw
    d_v = -a * w - v * t
    return logp, (d_t, d_a, d_w, d_v)


def _prepare(rt, response, a, t0, z, v):
    rt, response, a, t0, z, v = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (rt, response, a, t0, z, v))
    )
    shape = rt.shape
    return shape, [x.ravel() for x in (rt, response, a, t0, z, v)]


def log_density(rt, response, a, t0, z, v, tol=DEFAULT_TOL):
    """Vectorized WFPT log density; ``-inf`` where ``rt <= t0``.

    Inputs broadcast against each other. No domain validation is done here,
    see :func:`wfpt_log_density` for the checked scalar entry point.
    """
    shape, (rt, resp, a, t0, z, v) = _prepare(rt, response, a, t0, z, v)
    out = np.full(rt.shape, -np.inf)
    t = rt - t0
    ok = t > 0
    if np.any(ok):
        upper = resp[ok] == 1
        w = np.where(upper, 1.0 - z[ok], z[ok])
        vv = np.where(upper, -v[ok], v[ok])
        out[ok], _ = _lower_log_density(t[ok], a[ok], w, vv, tol, False)
    return out.reshape(shape)


def log_density_and_grad(rt, response, a, t0, z, v, tol=DEFAULT_TOL, backend="compiled"):
    """Vectorized log density and its gradient.

    Returns ``(logp, grad)`` where ``grad`` has shape ``(4,) + shape`` holding
    the partials with respect to ``(a, t0, z, v)``. Gradient entries at
    ``rt <= t0`` are NaN.

    ``backend="compiled"`` runs a per-trial loop compiled with numba;
    ``backend="numpy"`` evaluates the same series with array operations.
    """
    shape, (rt, resp, a, t0, z, v) = _prepare(rt, response, a, t0, z, v)
    if backend == "compiled":
        logp = np.empty(rt.shape)
        grad = np.empty((4,) + rt.shape)
        _kernels.logp_grad(rt, resp, a, t0, z, v, float(tol), logp, grad)
        return logp.reshape(shape), grad.reshape((4,) + shape)
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    logp = np.full(rt.shape, -np.inf)
    grad = np.full((4,) + rt.shape, np.nan)
    t = rt - t0
    ok = t > 0
    if np.any(ok):
        upper = resp[ok] == 1
        w = np.where(upper, 1.0 - z[ok], z[ok])
        vv = np.where(upper, -v[ok], v[ok])
        lp, (d_t, d_a, d_w, d_v) = _lower_log_density(t[ok], a[ok], w, vv, tol, True)
        sign = np.where(upper, -1.0, 1.0)
        logp[ok] = lp
        grad[0, ok] = d_a
        grad[1, ok] = -d_t
        grad[2, ok] = sign * d_w
        grad[3, ok] = sign * d_v
    return logp.reshape(shape), grad.reshape((4,) + shape)


def density(rt, response, a, t0, z, v, tol=DEFAULT_TOL):
    return np.exp(log_density(rt, response, a, t0, z, v, tol))


def wfpt_log_density(outcome: TrialOutcome, params: DdmParams, tol: float = DEFAULT_TOL) -> float:
    """Log density of one trial outcome under ``params``."""
    check_params(params.a, params.t0, params.z, params.v)
    return float(log_density(outcome.rt, outcome.response, params.a, params.t0,
                             params.z, params.v, tol))


def wfpt_log_density_grad(outcome: TrialOutcome, params: DdmParams,
                          tol: float = DEFAULT_TOL) -> np.ndarray:
    """Gradient of :func:`wfpt_log_density` over ``(a, t0, z, v)``."""
    check_params(params.a, params.t0, params.z, params.v)
    if outcome.rt <= params.t0:
        raise UndefinedGradientError("gradient undefined for rt <= t0")
    _, g = log_density_and_grad(outcome.rt, outcome.response, params.a,
                                params.t0, params.z, params.v, tol)
    return np.asarray(g, dtype=float).reshape(4)


def upper_choice_probability(params: DdmParams) -> float:
    """Probability of absorbing at the upper boundary."""
    check_params(params.a, params.t0, params.z, params.v)
    return float(upper_probability(params.a, params.z, params.v))


def upper_probability(a, z, v):
    """Vectorized upper-absorption probability."""
    a, z, v = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, z, v)))
    x = 2.0 * v * a
    out = np.empty(a.shape)
    small = np.abs(x) < 1e-8
    out[small] = z[small]
    xs, zs = x[~small], z[~small]
    # (1 - exp(-x z)) / (1 - exp(-x)), written to stay finite for large |x|
    pos = xs > 0
    num = np.where(pos, -np.expm1(-xs * zs), np.expm1(-xs * zs))
    den = np.where(pos, -np.expm1(-xs), np.expm1(-xs))
    neg = ~pos
    # for x < 0 rescale by exp(x) to avoid overflow
    num = np.where(neg, np.exp(xs) - np.exp(xs * (1.0 - zs)), num)
    den = np.where(neg, np.exp(xs) - 1.0, den)
    out[~small] = num / den
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# random generation

_JSTAR_TRUNC = 0.64


def _jstar_coef(n, x):
    """n-th term of the alternating series for the J*(1, 0) density."""
    k = (n + 0.5) * np.pi
    out = np.empty_like(x)
    hi = x > _JSTAR_TRUNC
    out[hi] = k * np.exp(-0.5 * k * k * x[hi])
    xl = x[~hi]
    out[~hi] = np.exp(-1.5 * (np.log(0.5 * np.pi) + np.log(xl)) + np.log(k)
                      - 2.0 * (n + 0.5) ** 2 / xl)
    return out


def _inv_gauss_cdf(x, mu):
    """CDF of the inverse Gaussian (shape 1); ``mu = inf`` gives the Levy law."""
    s = 1.0 / np.sqrt(x)
    with np.errstate(over="ignore", invalid="ignore"):
        b = np.where(np.isinf(mu), -s, s * (x / mu - 1.0))
        a = np.where(np.isinf(mu), -s, -s * (x / mu + 1.0))
        tail = np.where(np.isinf(mu), ndtr(a), np.exp(2.0 / mu + np.log(np.maximum(ndtr(a), 1e-300))))
    return ndtr(b) + tail


def _trunc_inv_gauss(z, rng):
    """Inverse Gaussian(1/z, 1) draws truncated to (0, 0.64), one per entry of z."""
    t = _JSTAR_TRUNC
    out = np.empty_like(z)
    with np.errstate(divide="ignore"):
        mu = 1.0 / z
    pending = np.arange(z.size)
    while pending.size:
        zp, mp = z[pending], mu[pending]
        x = np.empty(pending.size)
        big = mp > t
        # mean beyond truncation: Levy proposal thinned by the tilt
        if np.any(big):
            nb = int(big.sum())
            e1 = rng.standard_exponential(nb)
            e2 = rng.standard_exponential(nb)
            good = e1 * e1 <= 2.0 * e2 / t
            xb = t / (1.0 + t * e1) ** 2
            keep = good & (rng.random(nb) <= np.exp(-0.5 * zp[big] ** 2 * xb))
            xb[~keep] = np.inf
            x[big] = xb
        if np.any(~big):
            ms = mp[~big]
            y = rng.standard_normal(ms.size) ** 2
            xs = ms + 0.5 * ms * ms * y - 0.5 * ms * np.sqrt(4.0 * ms * y + (ms * y) ** 2)
            flip = rng.random(ms.size) > ms / (ms + xs)
            xs[flip] = ms[flip] ** 2 / xs[flip]
            x[~big] = xs
        done = x < t
        out[pending[done]] = x[done]
        pending = pending[~done]
    return out


def sample_jstar(z, rng):
    """Exact draws from J*(1, z), the exit time of drifted Brownian motion
    from [-1, 1] started at 0 (Laplace transform cosh(z)/cosh(sqrt(2s + z^2))).

    Uses Devroye's alternating-series rejection scheme.
    """
    z = np.abs(np.asarray(z, dtype=float)).ravel()
    t = _JSTAR_TRUNC
    out = np.empty_like(z)
    k = np.pi**2 / 8.0 + z * z / 2.0
    p = np.pi / (2.0 * k) * np.exp(-k * t)
    with np.errstate(divide="ignore"):
        mu = np.where(z > 0, 1.0 / np.where(z > 0, z, 1.0), np.inf)
    q = 2.0 * np.exp(-z) * _inv_gauss_cdf(np.full_like(z, t), mu)
    pending = np.arange(z.size)
    while pending.size:
        n = pending.size
        x = np.empty(n)
        expo = rng.random(n) < p[pending] / (p[pending] + q[pending])
        x[expo] = t + rng.standard_exponential(int(expo.sum())) / k[pending][expo]
        if np.any(~expo):
            x[~expo] = _trunc_inv_gauss(z[pending][~expo], rng)
        s = _jstar_coef(0, x)
        y = rng.random(n) * s
        accepted = np.zeros(n, dtype=bool)
        live = np.ones(n, dtype=bool)
        m = 0
        while np.any(live):
            m += 1
            idx = np.flatnonzero(live)
            coef = _jstar_coef(m, x[idx])
            if m % 2:
                s[idx] -= coef
                acc = y[idx] <= s[idx]
                accepted[idx[acc]] = True
                live[idx[acc]] = False
            else:
                s[idx] += coef
                live[idx[y[idx] > s[idx]]] = False
        out[pending[accepted]] = x[accepted]
        pending = pending[~accepted]
    return out


def _sample_walk(a, z, v, rng):
    """Exact first-passage samples by a walk over symmetric exit intervals.

    From position x the process exits (x - r, x + r), r = min(x, a - x), with
    side independent of time: upper with probability 1 / (1 + exp(-2 v r)),
    time r^2 J*(1, v r).
    """
    n = a.size
    pos = z * a
    elapsed = np.zeros(n)
    response = np.full(n, -1, dtype=np.int64)
    live = np.arange(n)
    while live.size:
        x, al, vl = pos[live], a[live], v[live]
        r = np.minimum(x, al - x)
        tau = r * r * sample_jstar(vl * r, rng)
        up = rng.random(live.size) < 1.0 / (1.0 + np.exp(-2.0 * vl * r))
        elapsed[live] += tau
        newx = np.where(up, x + r, x - r)
        hit_up = up & (al - x <= r)
        hit_lo = ~up & (x <= r)
        response[live[hit_up]] = 1
        response[live[hit_lo]] = 0
        fin = hit_up | hit_lo
        pos[live] = newx
        live = live[~fin]
    return response, elapsed


def _sample_euler(a, z, v, rng, dt, max_time=100.0):
    """Euler-Maruyama first passages with the discrete-monitoring boundary
    shift (0.5826 sqrt(dt)) to remove the leading-order overshoot bias."""
    n = a.size
    shift = 0.5826 * np.sqrt(dt)
    lo = shift
    hi = a - shift
    x = z * a
    response = np.full(n, -1, dtype=np.int64)
    elapsed = np.full(n, np.nan)
    live = np.arange(n)
    xl = x.copy()
    step = 0
    sd = np.sqrt(dt)
    while live.size and step * dt < max_time:
        step += 1
        xl += v[live] * dt + sd * rng.standard_normal(live.size)
        up = xl >= hi[live]
        dn = xl <= lo
        fin = up | dn
        if np.any(fin):
            response[live[up]] = 1
            response[live[dn]] = 0
            elapsed[live[fin]] = step * dt
            live = live[~fin]
            xl = xl[~fin]
    return response, elapsed


def sample_first_passage(params, rng, size=None, method="rejection", dt=1e-4):
    """Draw (response, rt) pairs.

    ``params`` is a :class:`DdmParams` or a mapping/tuple of broadcastable
    arrays ``(a, t0, z, v)``. With ``size=None`` and scalar parameters a single
    :class:`TrialOutcome` is returned; otherwise ``(response, rt)`` arrays.

    ``method="rejection"`` is exact in distribution; ``method="euler"`` uses
    Euler-Maruyama with step ``dt``.
    """
    if isinstance(params, DdmParams):
        a, t0, z, v = params.a, params.t0, params.z, params.v
    elif isinstance(params, dict):
        a, t0, z, v = (params[k] for k in PARAM_NAMES)
    else:
        a, t0, z, v = params
    check_params(a, t0, z, v)
    single = size is None and all(np.ndim(x) == 0 for x in (a, t0, z, v))
    shape = (() if size is None else (size,) if np.isscalar(size) else tuple(size))
    a, t0, z, v = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, t0, z, v)))
    shape = np.broadcast_shapes(shape, a.shape)
    a, t0, z, v = (np.broadcast_to(x, shape).ravel().copy() for x in (a, t0, z, v))
    if method == "rejection":
        resp, dec = _sample_walk(a, z, v, rng)
    elif method == "euler":
        resp, dec = _sample_euler(a, z, v, rng, dt)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    rt = t0 + dec
    if single:
        return TrialOutcome(int(resp[0]), float(rt[0]))
    return resp.reshape(shape), rt.reshape(shape)
