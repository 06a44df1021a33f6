"""No-U-Turn Hamiltonian Monte Carlo with multinomial trajectory sampling.

Warmup follows the usual three-stage schedule: a fast step-size-only buffer,
a sequence of doubling windows that estimate a diagonal inverse metric, and a
final step-size buffer. Step size is tuned by dual averaging.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MAX_DELTA_H = 1000.0


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 500
    iterations: int = 1000          # total per chain, warmup included
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    threads: int = 1
    init_buffer: float = 0.15
    term_buffer: float = 0.10
    base_window: int = 25

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not (0 < self.warmup < self.iterations):
            raise ValueError("need 0 < warmup < iterations")
        if not (0 < self.target_accept < 1):
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def draws(self):
        return self.iterations - self.warmup


@dataclass
class PosteriorDraws:
    """Post-warmup draws on the constrained scale, shape (chain, draw, param)."""

    names: list[str]
    values: np.ndarray
    divergences: np.ndarray          # per chain, sampling phase
    warmup_divergences: np.ndarray
    step_size: np.ndarray            # per chain, after adaptation
    tree_depth: np.ndarray           # (chain, draw)
    accept_stat: np.ndarray          # (chain, draw)
    elapsed: np.ndarray              # seconds per chain
    config: SamplerConfig | None = None
    unconstrained: np.ndarray | None = None

    def __getitem__(self, name) -> np.ndarray:
        return self.values[:, :, self.names.index(name)]

    @property
    def n_chains(self):
        return self.values.shape[0]

    @property
    def n_draws(self):
        return self.values.shape[1]

    def mean(self, name):
        return float(np.mean(self[name]))


# ---------------------------------------------------------------------------
# adaptation


class DualAveraging:
    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat):
        self.counter += 1
        a = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        w = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - w) * self.x_bar + w * x
        return math.exp(x)

    @property
    def final(self):
        return math.exp(self.x_bar)


class WindowedVariance:
    """Welford accumulator for the diagonal metric, regularized toward 1e-3."""

    def __init__(self, dim):
        self.dim = dim
        self.reset()

    def reset(self):
        self.n = 0
        self.m = np.zeros(self.dim)
        self.s = np.zeros(self.dim)

    def add(self, x):
        self.n += 1
        d = x - self.m
        self.m += d / self.n
        self.s += d * (x - self.m)

    def estimate(self):
        n = self.n
        var = self.s / (n - 1.0)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


def adaptation_windows(warmup, init_frac=0.15, term_frac=0.10, base=25):
    """End iterations (exclusive) of the metric windows."""
    init = int(round(init_frac * warmup))
    term = int(round(term_frac * warmup))
    end = warmup - term
    ends = []
    start = init
    size = base
    while start < end:
        stop = start + size
        # stretch the last window if the next one would not fit
        if stop + 2 * size > end:
            stop = end
        ends.append(stop)
        start = stop
        size *= 2
    return init, ends


# ---------------------------------------------------------------------------
# trajectory


class _Point:
    __slots__ = ("q", "p", "lp", "grad")

    def __init__(self, q, p, lp, grad):
        self.q, self.p, self.lp, self.grad = q, p, lp, grad


class _Tree:
    __slots__ = ("sample", "log_w", "rho", "p_beg", "p_end", "ps_beg", "ps_end",
                 "valid", "n_leapfrog", "sum_accept")


def _uturn(ps_minus, ps_plus, rho):
    return float(ps_plus @ rho) > 0 and float(ps_minus @ rho) > 0


class NUTS:
    """One NUTS kernel for a fixed target; holds the integrator state."""

    def __init__(self, logp_grad, dim, max_depth=10):
        self.logp_grad = logp_grad
        self.dim = dim
        self.max_depth = max_depth
        self.inv_metric = np.ones(dim)

    def _hamiltonian(self, pt):
        return -pt.lp + 0.5 * float(pt.p @ (self.inv_metric * pt.p))

    def leapfrog(self, pt, eps):
        p = pt.p + 0.5 * eps * pt.grad
        q = pt.q + eps * self.inv_metric * p
        lp, grad = self.logp_grad(q)
        if not np.isfinite(lp):
            return _Point(q, p, -np.inf, np.zeros_like(q))
        p = p + 0.5 * eps * grad
        return _Point(q, p, lp, grad)

    def transition(self, q, lp, grad, eps, rng):
        """One NUTS transition. Returns (q, lp, grad, stats dict)."""
        p0 = rng.standard_normal(self.dim) / np.sqrt(self.inv_metric)
        start = _Point(q, p0, lp, grad)
        h0 = self._hamiltonian(start)

        fwd = bck = start
        sample = start
        ps0 = self.inv_metric * p0
        ps_minus = ps_plus = ps0
        p_minus = p_plus = p0
        rho = p0.copy()
        log_w = 0.0
        n_leapfrog = 0
        sum_accept = 0.0
        depth = 0
        divergent = False

        while depth < self.max_depth:
            forward = rng.random() > 0.5
            self._n = 0
            self._sum = 0.0
            self._div = False
            if forward:
                tree, fwd = self._build(fwd, depth, eps, h0, rng)
            else:
                tree, bck = self._build(bck, depth, -eps, h0, rng)
            n_leapfrog += self._n
            sum_accept += self._sum
            divergent |= self._div
            if not tree.valid:
                break
            depth += 1
            # biased progressive sampling at the top level
            if tree.log_w > log_w or rng.random() < math.exp(tree.log_w - log_w):
                sample = tree.sample
            log_w = np.logaddexp(log_w, tree.log_w)

            rho_old = rho
            rho = rho_old + tree.rho
            if forward:
                ok = _uturn(ps_minus, tree.ps_end, rho)
                ok = ok and _uturn(ps_minus, tree.ps_beg, rho_old + tree.p_beg)
                ok = ok and _uturn(ps_plus, tree.ps_end, tree.rho + p_plus)
                ps_plus, p_plus = tree.ps_end, tree.p_end
            else:
                ok = _uturn(tree.ps_end, ps_plus, rho)
                ok = ok and _uturn(tree.ps_beg, ps_plus, rho_old + tree.p_beg)
                ok = ok and _uturn(tree.ps_end, ps_minus, tree.rho + p_minus)
                ps_minus, p_minus = tree.ps_end, tree.p_end
            if not ok:
                break

        stats = {
            "depth": depth,
            "n_leapfrog": n_leapfrog,
            "accept_stat": sum_accept / max(n_leapfrog, 1),
            "divergent": divergent,
            "energy": self._hamiltonian(sample),
        }
        return sample.q, sample.lp, sample.grad, stats

    def _build(self, pt, depth, eps, h0, rng):
        """Build a subtree of 2**depth leapfrog steps from ``pt``.

        Returns (tree, last point). The tree's ``p_beg``/``ps_beg`` refer to the
        first new point in integration order.
        """
        tree = _Tree()
        if depth == 0:
            new = self.leapfrog(pt, eps)
            self._n += 1
            h = self._hamiltonian(new) if np.isfinite(new.lp) else np.inf
            if not np.isfinite(h):
                h = np.inf
            delta = h0 - h
            if h - h0 > MAX_DELTA_H:
                self._div = True
                tree.valid = False
            else:
                tree.valid = True
            tree.log_w = delta
            self._sum += 1.0 if delta > 0 else math.exp(delta)
            tree.sample = new
            tree.rho = new.p.copy()
            tree.p_beg = tree.p_end = new.p
            tree.ps_beg = tree.ps_end = self.inv_metric * new.p
            return tree, new

        init, mid = self._build(pt, depth - 1, eps, h0, rng)
        if not init.valid:
            return init, mid
        final, end = self._build(mid, depth - 1, eps, h0, rng)
        if not final.valid:
            return final, end
        log_w = np.logaddexp(init.log_w, final.log_w)
        tree.log_w = log_w
        # uniform progressive sampling inside subtrees
        if rng.random() < math.exp(final.log_w - log_w):
            tree.sample = final.sample
        else:
            tree.sample = init.sample
        tree.rho = init.rho + final.rho
        tree.p_beg, tree.ps_beg = init.p_beg, init.ps_beg
        tree.p_end, tree.ps_end = final.p_end, final.ps_end
        ok = _uturn(init.ps_beg, final.ps_end, tree.rho)
        ok = ok and _uturn(init.ps_beg, final.ps_beg, init.rho + final.p_beg)
        ok = ok and _uturn(init.ps_end, final.ps_end, final.rho + init.p_end)
        tree.valid = ok
        return tree, end

    def find_step_size(self, q, lp, grad, eps, rng):
        """Double or halve ``eps`` until the one-step acceptance crosses 0.8."""
        p = rng.standard_normal(self.dim) / np.sqrt(self.inv_metric)
        start = _Point(q, p, lp, grad)
        h0 = self._hamiltonian(start)
        new = self.leapfrog(start, eps)
        h = self._hamiltonian(new) if np.isfinite(new.lp) else np.inf
        delta = h0 - h
        direction = 1 if delta > math.log(0.8) else -1
        for _ in range(100):
            p = rng.standard_normal(self.dim) / np.sqrt(self.inv_metric)
            start = _Point(q, p, lp, grad)
            h0 = self._hamiltonian(start)
            new = self.leapfrog(start, eps)
            h = self._hamiltonian(new) if np.isfinite(new.lp) else np.inf
            delta = h0 - h
            if direction == 1 and not delta > math.log(0.8):
                break
            if direction == -1 and not delta < math.log(0.8):
                break
            eps = eps * 2.0 if direction == 1 else eps / 2.0
            if eps > 1e7 or eps < 1e-12:
                break
        return eps


# ---------------------------------------------------------------------------
# chains


def run_chain(logp_grad, q0, config: SamplerConfig, rng, chain_id=0):
    """Warmup plus sampling for one chain; returns unconstrained draws and stats."""
    t_start = time.perf_counter()
    dim = q0.size
    lp, grad = logp_grad(q0)
    if not np.isfinite(lp):
        raise SamplerError("initial point has a non-finite log density")
    kernel = NUTS(logp_grad, dim, config.max_tree_depth)
    q = q0.copy()
    eps = kernel.find_step_size(q, lp, grad, 1.0, rng)
    da = DualAveraging(eps, config.target_accept)
    init_end, window_ends = adaptation_windows(
        config.warmup, config.init_buffer, config.term_buffer, config.base_window)
    wv = WindowedVariance(dim)
    ends = set(window_ends)

    warm_div = 0
    for it in range(config.warmup):
        q, lp, grad, st = kernel.transition(q, lp, grad, eps, rng)
        warm_div += st["divergent"]
        eps = da.update(st["accept_stat"])
        if init_end <= it < (window_ends[-1] if window_ends else 0):
            wv.add(q)
        if it + 1 in ends:
            if wv.n >= 3:
                kernel.inv_metric = wv.estimate()
            wv.reset()
            eps = kernel.find_step_size(q, lp, grad, eps, rng)
            da.restart(eps)
    eps = da.final
    if warm_div == config.warmup:
        raise SamplerError(f"chain {chain_id}: every warmup transition diverged")

    n = config.draws
    draws = np.empty((n, dim))
    depth = np.empty(n, dtype=np.int64)
    acc = np.empty(n)
    div = 0
    for it in range(n):
        q, lp, grad, st = kernel.transition(q, lp, grad, eps, rng)
        draws[it] = q
        depth[it] = st["depth"]
        acc[it] = st["accept_stat"]
        div += st["divergent"]
    elapsed = time.perf_counter() - t_start
    log.debug("chain %d done: eps=%.3g divergences=%d elapsed=%.1fs", chain_id, eps, div, elapsed)
    return {
        "draws": draws, "depth": depth, "accept": acc, "divergences": div,
        "warmup_divergences": warm_div, "step_size": eps, "elapsed": elapsed,
        "inv_metric": kernel.inv_metric,
    }


def chain_rng(seed, chain):
    return np.random.default_rng([int(seed), int(chain)])


def _chain_job(args):
    target, config, chain = args
    rng = chain_rng(config.seed, chain)
    q0 = target.initial_values(rng)
    return run_chain(target.log_posterior_and_grad, q0, config, rng, chain)


def run_chains(target, config: SamplerConfig, names=None, constrain=None) -> PosteriorDraws:
    """Run ``config.chains`` independent chains.

    ``target`` provides ``log_posterior_and_grad(theta)`` and
    ``initial_values(rng)``; a model also provides ``names`` and
    ``constrain_flat`` mapping unconstrained draws to reported values. Chains run in worker processes
    when ``config.threads > 1``; results do not depend on the thread count.
    """
    if names is None:
        names = getattr(target, "names", None) or [f"x[{i}]" for i in range(target.dim)]
    if constrain is None:
        constrain = getattr(target, "constrain_flat", None) or (lambda x: x)
    jobs = [(target, config, c) for c in range(config.chains)]
    if config.threads > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.threads, config.chains)) as ex:
            results = list(ex.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]
    raw = np.stack([r["draws"] for r in results])
    return PosteriorDraws(
        names=list(names),
        values=constrain(raw),
        divergences=np.array([r["divergences"] for r in results]),
        warmup_divergences=np.array([r["warmup_divergences"] for r in results]),
        step_size=np.array([r["step_size"] for r in results]),
        tree_depth=np.stack([r["depth"] for r in results]),
        accept_stat=np.stack([r["accept"] for r in results]),
        elapsed=np.array([r["elapsed"] for r in results]),
        config=config,
        unconstrained=raw,
    )


@dataclass
class DensityTarget:
    """Wraps a plain ``(theta) -> (logp, grad)`` function as a sampler target."""

    logp_grad: object
    dim: int
    init: np.ndarray | None = None
    jitter: float = 0.5
    _unused: dict = field(default_factory=dict)

    def log_posterior_and_grad(self, theta):
        return self.logp_grad(theta)

    def initial_values(self, rng):
        base = np.zeros(self.dim) if self.init is None else np.asarray(self.init, dtype=float)
        return base + rng.uniform(-self.jitter, self.jitter, self.dim)
