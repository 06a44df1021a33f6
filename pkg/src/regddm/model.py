"""Hierarchical regression DDM: parameter layout, log posterior and gradient.

Structure
---------
* Trial level: ``p_ij = p_0,i + sum_c x_ij,c * p_c,i`` for each DDM parameter
  ``p`` in (a, t, z, v); the trial likelihood is the WFPT density.
* Subject level: every derived term gets a normal hierarchy across subjects.
  Intercepts of the constrained parameters use the transformed scale,
  ``g(p_0,i) ~ N(g(mu), (sigma * g'(mu))^2)`` with ``g = log`` for a and t and
  ``g = logit`` for z, so ``mu`` and ``sigma`` keep their natural-scale
  meaning to first order and the group-level priors apply as stated.
* Regression: case A links derived terms and covariates to a subject outcome
  through a GLM with canonical link; case B replaces the hierarchy of one
  derived term by a normal linear regression on subject covariates.
* Missing continuous covariates are latent, ``c_i ~ N(mu_c, sigma_c^2)`` for
  observed and missing entries alike.

All densities include their normalizing constants.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln, log_ndtr

from . import _kernels, wfpt
from .formula import DDM_PARAMS, DesignData, ModelSpec

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

# hierarchy nodes sampled as standardized offsets: DDM parameter names for
# intercepts, "slopes" for every trial-covariate slope, or derived-term names
DEFAULT_NONCENTERED = ("z",)


class ModelBuildError(ValueError):
    pass


class InitializationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# transforms


class _Identity:
    name = "identity"
    code = 0      # link code of the compiled hierarchy kernels

    @staticmethod
    def forward(eta):
        return eta

    @staticmethod
    def inverse(x):
        return x

    @staticmethod
    def dforward(eta):  # d value / d eta
        return np.ones_like(eta)

    @staticmethod
    def log_jac(eta, x):
        return np.zeros_like(eta)

    @staticmethod
    def dlog_jac(eta, x):
        return np.zeros_like(eta)

    # link used by the hierarchy: g, g', g''
    @staticmethod
    def g(x):
        return x

    @staticmethod
    def g1(x):
        return np.ones_like(x)

    @staticmethod
    def g2(x):
        return np.zeros_like(x)


class _Log:
    name = "log"
    code = 1

    @staticmethod
    def forward(eta):
        return np.exp(eta)

    @staticmethod
    def inverse(x):
        return np.log(x)

    @staticmethod
    def dforward(eta):
        return np.exp(eta)

    @staticmethod
    def log_jac(eta, x):
        return eta

    @staticmethod
    def dlog_jac(eta, x):
        return np.ones_like(eta)

    @staticmethod
    def g(x):
        return np.log(x)

    @staticmethod
    def g1(x):
        return 1.0 / x

    @staticmethod
    def g2(x):
        return -1.0 / (x * x)


class _Logit:
    name = "logit"
    code = 2

    @staticmethod
    def forward(eta):
        return expit(eta)

    @staticmethod
    def inverse(x):
        return np.log(x) - np.log1p(-x)

    @staticmethod
    def dforward(eta):
        x = expit(eta)
        return x * (1.0 - x)

    @staticmethod
    def log_jac(eta, x):
        # log(x (1 - x)) computed stably from eta
        return -np.logaddexp(0.0, eta) - np.logaddexp(0.0, -eta)

    @staticmethod
    def dlog_jac(eta, x):
        return 1.0 - 2.0 * x

    @staticmethod
    def g(x):
        return np.log(x) - np.log1p(-x)

    @staticmethod
    def g1(x):
        return 1.0 / (x * (1.0 - x))

    @staticmethod
    def g2(x):
        return (2.0 * x - 1.0) / (x * x * (1.0 - x) ** 2)


TRANSFORMS = {"identity": _Identity, "log": _Log, "logit": _Logit}
PARAM_TRANSFORM = {"a": "log", "t": "log", "z": "logit", "v": "identity"}


# ---------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class Block:
    name: str
    offset: int
    size: int
    transform: str
    labels: tuple[str, ...]

    @property
    def slice(self):
        return slice(self.offset, self.offset + self.size)


class ParamLayout:
    """Named blocks laid out contiguously in the flat unconstrained vector."""

    def __init__(self):
        self.blocks: list[Block] = []
        self.by_name: dict[str, Block] = {}
        self.size = 0

    def add(self, name, size, transform="identity", labels=None):
        if name in self.by_name:
            raise ValueError(f"duplicate block {name!r}")
        if labels is None:
            labels = (name,) if size == 1 else tuple(f"{name}[{i}]" for i in range(size))
        b = Block(name, self.size, size, transform, tuple(labels))
        self.blocks.append(b)
        self.by_name[name] = b
        self.size += size
        return b

    def __contains__(self, name):
        return name in self.by_name

    def __getitem__(self, name):
        return self.by_name[name]

    @property
    def labels(self) -> list[str]:
        return [lab for b in self.blocks for lab in b.labels]

    def constrain(self, theta) -> dict[str, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        return {b.name: TRANSFORMS[b.transform].forward(theta[b.slice]) for b in self.blocks}

    def constrain_flat(self, theta) -> np.ndarray:
        """Constrained values in label order; works on (..., size) arrays."""
        theta = np.asarray(theta, dtype=float)
        out = np.empty_like(theta)
        for b in self.blocks:
            out[..., b.slice] = TRANSFORMS[b.transform].forward(theta[..., b.slice])
        return out

    def unconstrain(self, values: dict) -> np.ndarray:
        theta = np.empty(self.size)
        for b in self.blocks:
            theta[b.slice] = TRANSFORMS[b.transform].inverse(
                np.broadcast_to(np.asarray(values[b.name], dtype=float), (b.size,)))
        return theta


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class PriorConfig:
    """Group-level priors.

    ``intercept_mean`` gives the prior on the group mean of each DDM intercept
    as ``("gamma", shape, rate)`` or ``("normal", mean, sd)``; ``intercept_sd``
    the half-normal scale for the matching group standard deviation. All other
    location parameters get ``N(0, location_sd^2)`` and scales
    ``HN(0, scale_sd)``. With ``autoscale`` the regression priors of a gaussian
    outcome and the latent-covariate priors are expressed in units of the
    observed standard deviation and centered on the observed mean.
    """

    intercept_mean: dict = field(default_factory=lambda: {
        "a": ("gamma", 1.125, 0.75),
        "t": ("gamma", 0.08, 0.2),
        "z": ("normal", 0.5, 0.5),
        "v": ("normal", 2.0, 3.0),
    })
    intercept_sd: dict = field(default_factory=lambda: {"a": 0.1, "t": 1.0, "z": 0.05, "v": 2.0})
    location_sd: float = 10.0
    scale_sd: float = 5.0
    autoscale: bool = True


def _normal_parts(x, m, s):
    """Normal log density with partials in x, m, s."""
    r = (x - m) / s
    lp = -0.5 * r * r - np.log(s) - _HALF_LOG_2PI
    dx = -r / s
    return lp, dx, -dx, (r * r - 1.0) / s


# ---------------------------------------------------------------------------
# model


@dataclass
class _Hier:
    """One hierarchy node: subject term with group mean/sd blocks."""
    term: str
    param: str
    link: type
    mu: str
    sigma: str
    raw: str | None = None      # standardized block when non-centered


class Model:
    """Log posterior of the regression DDM on the unconstrained scale."""

    def __init__(self, spec: ModelSpec, design: DesignData, priors: PriorConfig | None = None,
                 tol: float = wfpt.DEFAULT_TOL, include_trials: bool = True,
                 noncentered=DEFAULT_NONCENTERED):
        self.spec = spec
        self.noncentered = set(noncentered)
        self.design = design
        self.priors = priors or PriorConfig()
        self.tol = tol
        self.include_trials = include_trials
        self.layout = ParamLayout()
        self._scalar_priors: list[tuple[str, tuple]] = []
        self._hier: list[_Hier] = []
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self):
        spec, d, pri, lay = self.spec, self.design, self.priors, self.layout
        n = d.n_subjects
        ids = [str(s) for s in d.subject_ids]
        target = spec.regression.lhs if spec.case == "B" else None

        for term, (p, cov) in d.derived.items():
            intercept = cov is None
            tr = PARAM_TRANSFORM[p] if intercept else "identity"
            if term != target:
                mu_t = tr
                if intercept:
                    kind = pri.intercept_mean[p]
                    if p == "z" and kind[0] == "normal":
                        kind = ("normal01", kind[1], kind[2])
                    sd_kind = ("halfnormal", pri.intercept_sd[p], None)
                else:
                    kind = ("normal", 0.0, pri.location_sd)
                    sd_kind = ("halfnormal", pri.scale_sd, None)
                lay.add(f"mu_{term}", 1, mu_t)
                lay.add(f"sigma_{term}", 1, "log")
                self._scalar_priors += [(f"mu_{term}", kind), (f"sigma_{term}", sd_kind)]
                if self._is_noncentered(term, p, intercept):
                    raw = f"{term}__raw"
                    lay.add(raw, n, "identity", labels=[f"{term}[{i}]" for i in ids])
                    self._hier.append(_Hier(term, p, TRANSFORMS[tr], f"mu_{term}",
                                            f"sigma_{term}", raw))
                    continue
                self._hier.append(_Hier(term, p, TRANSFORMS[tr], f"mu_{term}", f"sigma_{term}"))
            lay.add(term, n, tr, labels=[f"{term}[{i}]" for i in ids])

        self._reg_prior = None
        if spec.regression is not None:
            self._build_regression(ids)

        self._prepare_trials()
        self._prepare_scalar_priors()
        idx = {k: [] for k in TRANSFORMS}
        for b in self.layout.blocks:
            idx[b.transform] += range(b.offset, b.offset + b.size)
        self._idx_log = np.array(idx["log"], dtype=np.int64)
        self._idx_logit = np.array(idx["logit"], dtype=np.int64)

    def _build_regression(self, ids):
        spec, d, pri, lay = self.spec, self.design, self.priors, self.layout
        reg = d.regression
        k = len(reg.columns)
        center = np.zeros(k)
        scale = np.full(k, pri.location_sd)
        sigma_scale = pri.scale_sd
        if spec.case == "A" and spec.family == "gaussian" and pri.autoscale:
            y = d.outcome
            sd = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
            sd = sd if sd > 0 else 1.0
            center[0] = float(np.mean(y))
            scale *= sd
            sigma_scale *= sd
        self._reg_prior = (center, scale)
        lay.add("beta", k, "identity", labels=[f"beta_{c}" for c in reg.columns])
        self._has_sigma = spec.family == "gaussian"
        if self._has_sigma:
            lay.add("sigma", 1, "log")
            self._scalar_priors.append(("sigma", ("halfnormal", sigma_scale, None)))

        self._missing = []
        for cov, mask in reg.missing.items():
            obs = reg.covariate_values[cov][~mask]
            if pri.autoscale and obs.size >= 2 and np.std(obs, ddof=1) > 0:
                m0, s0 = float(np.mean(obs)), float(np.std(obs, ddof=1))
            else:
                m0, s0 = 0.0, 1.0
            miss_ids = [i for i, mm in zip(ids, mask) if mm]
            lay.add(f"mis_{cov}", int(mask.sum()), "identity",
                    labels=[f"{cov}[{i}]" for i in miss_ids])
            lay.add(f"mu_{cov}", 1, "identity")
            lay.add(f"sigma_{cov}", 1, "log")
            self._scalar_priors += [(f"mu_{cov}", ("normal", m0, pri.location_sd * s0)),
                                    (f"sigma_{cov}", ("halfnormal", pri.scale_sd * s0, None))]
            self._missing.append((cov, np.flatnonzero(mask), obs))

        # column index lookups
        self._col_derived = [(j, s[1]) for j, s in enumerate(reg.sources) if s[0] == "derived"]
        self._col_cov = {s[1]: j for j, s in enumerate(reg.sources) if s[0] == "covariate"}

    def _prepare_scalar_priors(self):
        """Group scalar priors by family into offset and parameter arrays."""
        groups = {}
        for name, kind in self._scalar_priors:
            groups.setdefault(kind[0], []).append((self.layout[name].offset, kind[1], kind[2]))
        unknown = set(groups) - {"gamma", "normal", "normal01", "halfnormal"}
        if unknown:
            raise ValueError(f"unknown prior {sorted(unknown)[0]!r}")
        self._prior_groups = []
        for fam, rows in groups.items():
            idx = np.array([r[0] for r in rows], dtype=np.int64)
            p1 = np.array([r[1] for r in rows], dtype=float)
            p2 = np.array([np.nan if r[2] is None else r[2] for r in rows], dtype=float)
            if fam == "gamma":
                const = p1 * np.log(p2) - gammaln(p1)
            elif fam == "normal":
                const = -np.log(p2) - _HALF_LOG_2PI
            elif fam == "normal01":
                z1 = log_ndtr((1.0 - p1) / p2)
                z0 = log_ndtr((0.0 - p1) / p2)
                const = -np.log(p2) - _HALF_LOG_2PI - (z1 + np.log1p(-np.exp(z0 - z1)))
            else:
                const = np.log(2.0) - np.log(p1) - _HALF_LOG_2PI
            self._prior_groups.append((fam, idx, p1, p2, float(const.sum())))

    def _scalar_prior_term(self, x, gx) -> float:
        lp = 0.0
        for fam, idx, p1, p2, const in self._prior_groups:
            v = x[idx]
            if fam == "gamma":
                lp += const + ((p1 - 1.0) * np.log(v) - p2 * v).sum()
                gx[idx] += (p1 - 1.0) / v - p2
            elif fam == "halfnormal":
                r = v / p1
                lp += const - 0.5 * (r * r).sum()
                gx[idx] -= r / p1
            else:
                r = (v - p1) / p2
                lp += const - 0.5 * (r * r).sum()
                gx[idx] -= r / p2
        return lp

    def _prepare_trials(self):
        d = self.design
        self._subj = d.trial_subject
        self._slopes = {}
        for p in DDM_PARAMS:
            f = self.spec.formulas[p]
            self._slopes[p] = [(f"{p}_{c}", d.trial_covariates[p][:, j]) for j, c in enumerate(f.rhs)]
        # flat arrays for the compiled trial loop
        flat = [(k, term, cov) for k, p in enumerate(DDM_PARAMS) for term, cov in self._slopes[p]]
        self._slope_terms = [term for _, term, _ in flat]
        self._slope_param = np.array([k for k, _, _ in flat], dtype=np.int64)
        self._cov = (np.column_stack([cov for _, _, cov in flat]) if flat
                     else np.zeros((d.n_trials, 0)))
        self._cov = np.ascontiguousarray(self._cov, dtype=float)
        self._resp = np.ascontiguousarray(d.response, dtype=np.int64)
        self._subj = np.ascontiguousarray(d.trial_subject, dtype=np.int64)

    def _is_noncentered(self, term, p, intercept):
        return term in self.noncentered or (p if intercept else "slopes") in self.noncentered

    @property
    def _nc(self):
        return [h for h in self._hier if h.raw is not None]

    # -- parameter maps ---------------------------------------------------

    def values(self, theta) -> dict[str, np.ndarray]:
        """Natural-scale values of every named quantity, including
        non-centered subject terms."""
        vals = self.layout.constrain(theta)
        for h in self._nc:
            vals[h.term] = self._nc_forward(h, vals)[0]
        return vals

    @staticmethod
    def _nc_forward(h, vals):
        L = h.link
        mu = vals[h.mu][0]
        sig = vals[h.sigma][0]
        xi = vals[h.raw]
        eta = L.g(mu) + sig * L.g1(mu) * xi
        with np.errstate(over="ignore"):
            return L.forward(eta), L.dforward(eta), mu, sig, xi

    def constrain_flat(self, theta) -> np.ndarray:
        """Natural-scale draws in label order; works on (..., size) arrays."""
        theta = np.asarray(theta, dtype=float)
        out = self.layout.constrain_flat(theta)
        lay = self.layout
        for h in self._nc:
            L = h.link
            mu = out[..., lay[h.mu].slice]
            sig = out[..., lay[h.sigma].slice]
            eta = L.g(mu) + sig * L.g1(mu) * theta[..., lay[h.raw].slice]
            with np.errstate(over="ignore"):
                out[..., lay[h.raw].slice] = L.forward(eta)
        return out

    @property
    def names(self) -> list[str]:
        return self.layout.labels

    def unconstrain(self, values: dict) -> np.ndarray:
        """Inverse of :meth:`values` for a dict of natural-scale values."""
        vals = dict(values)
        for h in self._nc:
            L = h.link
            mu = np.float64(np.asarray(vals[h.mu]).ravel()[0])
            sig = np.float64(np.asarray(vals[h.sigma]).ravel()[0])
            # saturated values give non-finite offsets, which callers reject
            with np.errstate(all="ignore"):
                vals[h.raw] = (L.g(np.asarray(vals[h.term], dtype=float)) - L.g(mu)) / (sig * L.g1(mu))
        return self.layout.unconstrain(vals)

    # -- evaluation -------------------------------------------------------

    @property
    def dim(self):
        return self.layout.size

    def log_posterior(self, theta) -> float:
        return self.log_posterior_and_grad(theta)[0]

    def log_posterior_grad(self, theta) -> np.ndarray:
        return self.log_posterior_and_grad(theta)[1]

    def log_posterior_and_grad(self, theta):
        """Log posterior (unconstrained scale) and its gradient.

        Non-finite values come back as ``(-inf, zeros)`` so samplers can treat
        them as rejections.
        """
        theta = np.asarray(theta, dtype=float)
        lay = self.layout
        i_log, i_logit = self._idx_log, self._idx_logit
        x = theta.copy()
        with np.errstate(over="ignore"):
            x[i_log] = np.exp(theta[i_log])
        x[i_logit] = expit(theta[i_logit])
        gx = np.zeros(lay.size)
        # per-block views: gradient updates land in gx
        vals = {b.name: x[b.slice] for b in lay.blocks}
        grads = {b.name: gx[b.slice] for b in lay.blocks}
        nc = self._nc
        dfwd = {}
        with np.errstate(all="ignore"):
            for h in nc:
                xi = vals[h.raw]
                xt, dfwd[h.term] = np.empty(xi.size), np.empty(xi.size)
                _kernels.nc_forward(vals[h.mu][0], vals[h.sigma][0], xi, h.link.code, xt,
                                    dfwd[h.term])
                vals[h.term] = xt
                grads[h.term] = np.zeros(xi.size)
            lp = self._accumulate(vals, grads, x, gx)
            # standard-normal offsets, and subject-term gradients chained back
            # to (xi, mu, sigma)
            for h in nc:
                lpr, dmu, dsig = _kernels.nc_backward(
                    grads[h.term], dfwd[h.term], vals[h.mu][0], vals[h.sigma][0], vals[h.raw],
                    h.link.code, grads[h.raw])
                lp += lpr
                grads[h.mu][0] += dmu
                grads[h.sigma][0] += dsig
            if not np.isfinite(lp):
                return -np.inf, np.zeros(lay.size)
            # log-Jacobians of the exp and expit maps and the chain rule
            xl = x[i_logit]
            lp += float(theta[i_log].sum()) + float((np.log(xl) + np.log1p(-xl)).sum())
            gx[i_log] = gx[i_log] * x[i_log] + 1.0
            gx[i_logit] = gx[i_logit] * xl * (1.0 - xl) + 1.0 - 2.0 * xl
        if not (np.isfinite(lp) and np.all(np.isfinite(gx))):
            return -np.inf, np.zeros(lay.size)
        return lp, gx

    def _accumulate(self, vals, grads, x, gx) -> float:
        lp = self._scalar_prior_term(x, gx)
        # centered subject hierarchies; non-centered offsets are handled by
        # the caller
        for h in self._hier:
            if h.raw is None:
                lp += self._hier_term(h, vals, grads)
        # trial likelihood
        if self.include_trials and self.design.n_trials:
            lp += self._trial_term(vals, grads)
        # regression and latent covariates
        if self.spec.regression is not None:
            lp += self._regression_term(vals, grads)
        return lp

    def _hier_term(self, h: _Hier, vals, grads):
        lp, dmu, dsig = _kernels.hier_centered(vals[h.term], vals[h.mu][0], vals[h.sigma][0],
                                               h.link.code, grads[h.term])
        grads[h.mu][0] += dmu
        grads[h.sigma][0] += dsig
        return lp

    def trial_parameters(self, vals):
        """Trial-level (a, t0, z, v) arrays from subject-level values."""
        s = self._subj
        out = []
        for p in DDM_PARAMS:
            x = vals[f"{p}_0"][s]
            for term, cov in self._slopes[p]:
                x = x + cov * vals[term][s]
            out.append(x)
        return out

    def _trial_term(self, vals, grads):
        d = self.design
        n = d.n_subjects
        base = np.empty((4, n))
        for k, p in enumerate(DDM_PARAMS):
            base[k] = vals[f"{p}_0"]
        terms = self._slope_terms
        slopes = np.empty((len(terms), n))
        for j, term in enumerate(terms):
            slopes[j] = vals[term]
        g_base = np.zeros((4, n))
        g_slopes = np.zeros((len(terms), n))
        total = _kernels.trial_term(d.rt, self._resp, self._subj, base, self._cov,
                                    self._slope_param, slopes, float(self.tol), g_base, g_slopes)
        if not np.isfinite(total):
            return -np.inf
        for k, p in enumerate(DDM_PARAMS):
            grads[f"{p}_0"] += g_base[k]
        for j, term in enumerate(terms):
            grads[term] += g_slopes[j]
        return float(total)

    def regression_matrix(self, vals):
        """Subject-level design matrix with derived and latent values filled in."""
        reg = self.design.regression
        X = reg.fixed.copy()
        for j, term in self._col_derived:
            X[:, j] = vals[term]
        for cov, idx, _ in self._missing:
            j = self._col_cov.get(cov)
            if j is not None:
                X[idx, j] = vals[f"mis_{cov}"]
        return X

    def _regression_term(self, vals, grads):
        spec = self.spec
        reg = self.design.regression
        X = self.regression_matrix(vals)
        beta = vals["beta"]
        eta = X @ beta
        center, scale = self._reg_prior
        lpb, dbeta, _, _ = _normal_parts(beta, center, scale)
        lp = float(lpb.sum())
        grads["beta"] += dbeta

        if spec.case == "A":
            y = self.design.outcome
            fam = spec.family
            if fam == "gaussian":
                sig = vals["sigma"][0]
                lpy, _, dmu, ds = _normal_parts(y, eta, sig)
                lp += float(lpy.sum())
                deta = dmu
                grads["sigma"][0] += ds.sum()
            elif fam == "bernoulli":
                lp += float((y * eta - np.logaddexp(0.0, eta)).sum())
                deta = y - expit(eta)
            else:
                mu = np.exp(eta)
                lp += float((y * eta - mu - gammaln(y + 1.0)).sum())
                deta = y - mu
        else:
            term = spec.regression.lhs
            p, cov = self.design.derived[term]
            L = TRANSFORMS[PARAM_TRANSFORM[p]] if cov is None else _Identity
            x = vals[term]
            sig = vals["sigma"][0]
            g1x = L.g1(x)
            lpy, dx, dmu, ds = _normal_parts(L.g(x), eta, sig)
            lp += float((lpy + np.log(g1x)).sum())
            grads[term] += dx * g1x + L.g2(x) / g1x
            grads["sigma"][0] += ds.sum()
            deta = dmu

        grads["beta"] += X.T @ deta
        for j, term in self._col_derived:
            grads[term] += deta * beta[j]
        for cov, idx, obs in self._missing:
            name = f"mis_{cov}"
            j = self._col_cov.get(cov)
            if j is not None:
                grads[name] += deta[idx] * beta[j]
            m = vals[f"mu_{cov}"][0]
            s = vals[f"sigma_{cov}"][0]
            full = np.concatenate([obs, vals[name]])
            lpc, dc, dm, ds = _normal_parts(full, m, s)
            lp += float(lpc.sum())
            grads[name] += dc[obs.size:]
            grads[f"mu_{cov}"][0] += dm.sum()
            grads[f"sigma_{cov}"][0] += ds.sum()
        return lp

    # -- initialization ---------------------------------------------------

    def init_center(self) -> dict[str, np.ndarray]:
        """Natural-scale starting point near the prior center.

        Gamma priors contribute their mean rather than their median (the
        non-decision-time prior has a median near 5e-4). Non-decision times
        are capped at half of each subject's fastest response.
        """
        d, pri = self.design, self.priors
        n = d.n_subjects
        min_rt = np.full(n, np.inf)
        if d.n_trials:
            np.minimum.at(min_rt, d.trial_subject, d.rt)
        c = {}
        for name, kind in self._scalar_priors:
            if kind[0] == "gamma":
                c[name] = kind[1] / kind[2]
            elif kind[0] in ("normal", "normal01"):
                c[name] = kind[1]
            else:
                c[name] = 0.6745 * kind[1]
        target = self.spec.regression.lhs if self.spec.case == "B" else None
        for term, (p, cov) in d.derived.items():
            if term == target:
                if cov is None:
                    base = {"a": 1.5, "t": 0.3, "z": 0.5, "v": 0.0}[p]
                else:
                    base = 0.0
            else:
                base = c[f"mu_{term}"] if cov is None else 0.0
            x = np.full(n, float(base))
            if term == "t_0":
                x = np.minimum(x, 0.5 * min_rt)
            c[term] = x
        if "t_0" in c and "mu_t_0" in c:
            c["mu_t_0"] = float(min(c["mu_t_0"], np.median(c["t_0"])))
        if self.spec.regression is not None:
            c["beta"] = self._reg_prior[0].copy()
            for cov, idx, obs in self._missing:
                m = float(np.mean(obs)) if obs.size else 0.0
                c[f"mis_{cov}"] = np.full(idx.size, m)
        return c

    def initial_values(self, rng, max_tries: int = 100, jitter: float = 0.5) -> np.ndarray:
        """Jittered start on the unconstrained scale with a finite log posterior."""
        center = self.init_center()
        links = {h.term: h.link for h in self._nc}
        for _ in range(max_tries):
            # jitter on each quantity's own unconstrained scale, so offsets of
            # non-centered terms stay comparable to centered ones
            vals = {}
            for b in self.layout.blocks:
                name = b.name
                if name.endswith("__raw"):
                    name = name[: -len("__raw")]
                tr = links.get(name) or TRANSFORMS[b.transform]
                x = np.broadcast_to(np.asarray(center[name], dtype=float), (b.size,))
                vals[name] = tr.forward(tr.inverse(x) + rng.uniform(-jitter, jitter, size=b.size))
            theta = self.unconstrain(vals)
            lp, g = self.log_posterior_and_grad(theta)
            if np.isfinite(lp):
                return theta
        raise InitializationError(
            f"no finite log posterior after {max_tries} tries; "
            f"offending blocks: {', '.join(self._offending_blocks(theta))}")

    def _offending_blocks(self, theta):
        vals = self.values(theta)
        bad = [name for name, v in vals.items() if not np.all(np.isfinite(v))]
        if self.design.n_trials:
            a, t0, z, v = self.trial_parameters(vals)
            d = self.design
            if np.any(t0 >= d.rt):
                bad.append("t_0 (non-decision time exceeds a reaction time)")
            if np.any(a <= 0):
                bad.append("a_0")
            if np.any((z <= 0) | (z >= 1)):
                bad.append("z_0")
        return bad or ["<unknown>"]

    # -- reporting helpers -------------------------------------------------

    def regression_labels(self) -> list[str]:
        if self.spec.regression is None:
            return []
        out = list(self.layout["beta"].labels)
        if "sigma" in self.layout:
            out.append("sigma")
        return out


def build_model(spec: ModelSpec, design: DesignData, priors: PriorConfig | None = None,
                **kwargs) -> Model:
    if spec.regression is not None and spec.case == "A" and design.outcome is None:
        raise ModelBuildError(f"outcome {spec.regression.lhs!r} missing from design")
    return Model(spec, design, priors, **kwargs)
