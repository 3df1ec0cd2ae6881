"""Sampling-based failure-probability estimators that also return failure samples.

All methods sample in the standard-normal space of the model's first cyclic
transform and evaluate the limit state at ``model.inverse(u, 0)``.  Failure
is ``g(x) <= 0``.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import EstimationError, NonConvergenceError
from .rng import substream


class LimitState:
    """Vectorised limit-state function with an exact call counter.

    ``fn`` maps an ``(n, d)`` array to ``n`` values.  Every row passed
    through :meth:`__call__` counts as one call.
    """

    def __init__(self, fn, name=None):
        self.fn = fn
        self.name = name or getattr(fn, "__name__", "lsf")
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def n_calls(self):
        return self._calls

    def reset(self):
        with self._lock:
            self._calls = 0

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g = np.asarray(self.fn(x), dtype=float).reshape(-1)
        if g.shape[0] != x.shape[0]:
            raise EstimationError(
                f"limit state returned {g.shape[0]} values for {x.shape[0]} rows")
        with self._lock:
            self._calls += x.shape[0]
        return g


@dataclass(frozen=True)
class ReliabilityResult:
    pf_hat: float
    failure_samples: np.ndarray
    n_calls: int
    method: str
    levels: list = field(default_factory=list)
    dependent_samples: bool = False
    cov_estimate: float = float("nan")
    seed: int | None = None

    @property
    def n_failure(self):
        return self.failure_samples.shape[0]

    @property
    def dim(self):
        return self.failure_samples.shape[1]

    def verify(self, lsf):
        """True if every stored sample re-evaluates to ``g <= 0``."""
        return bool(np.all(lsf.fn(self.failure_samples) <= 0))

    def sidecar(self):
        return {
            "pf_hat": self.pf_hat,
            "n_calls": self.n_calls,
            "method": self.method,
            "dependent_samples": self.dependent_samples,
            "n_failure": self.n_failure,
            "cov_estimate": self.cov_estimate,
            "seed": self.seed,
            "levels": self.levels,
        }


def _g_in_u(model, lsf):
    return lambda u: lsf(model.inverse(u, 0))


def _check_pf(pf, method):
    if not 0.0 < pf < 1.0:
        raise EstimationError(
            f"{method}: estimated failure probability {pf} is outside (0, 1); "
            "the limit state fails everywhere or nowhere on the sample")


def monte_carlo(model, lsf, n, seed=0, batch=1_000_000):
    """Crude Monte Carlo with ``n`` i.i.d. samples drawn in batches."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    calls0 = lsf.n_calls
    fails = []
    nf = 0
    for k, start in enumerate(range(0, n, batch)):
        m = min(batch, n - start)
        rng = substream(seed, "mc", k)
        x = model.inverse(rng.standard_normal((m, model.dim)), 0)
        bad = lsf(x) <= 0
        nf += int(bad.sum())
        fails.append(x[bad])
    if nf == 0:
        raise EstimationError(
            f"no failures in {n} Monte Carlo samples; increase n or use "
            "subset simulation / cross-entropy importance sampling")
    pf = nf / n
    _check_pf(pf, "monte_carlo")
    return ReliabilityResult(
        pf_hat=pf,
        failure_samples=np.concatenate(fails),
        n_calls=lsf.n_calls - calls0,
        method="mc",
        levels=[{"n": n, "n_failure": nf}],
        dependent_samples=False,
        cov_estimate=float(np.sqrt((1.0 - pf) / (n * pf))),
        seed=seed,
    )


# ----------------------------------------------------------------------
# Subset simulation
# ----------------------------------------------------------------------

TARGET_ACCEPTANCE = 0.44


def _conditional_sampling(g_fun, seeds_u, seeds_g, n_total, threshold, lam, rng):
    """Adaptive conditional sampling (pCN proposal) from ``seeds``.

    Generates ``n_total`` states in chains started at the seeds, adapting
    the proposal scale (``lam`` times the per-coordinate spread of the
    seeds, capped at one) after every group of chains toward 0.44
    acceptance.  Returns the chain states in chain-major order, their limit
    state values, the chain lengths, the updated ``lam`` and the mean
    acceptance rate.
    """
    if n_total < seeds_u.shape[0]:
        seeds_u, seeds_g = seeds_u[:n_total], seeds_g[:n_total]
    ns, d = seeds_u.shape
    lengths = np.full(ns, n_total // ns)
    lengths[: n_total % ns] += 1
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    u_out = np.empty((n_total, d))
    g_out = np.empty(n_total)
    group = int(np.ceil(100 * ns / n_total))
    spread = seeds_u.std(axis=0) if ns > 1 else np.ones(d)
    hist_acc = []
    i_adapt = 0
    for start in range(0, ns, group):
        idx = np.arange(start, min(start + group, ns))
        beta = np.minimum(lam * spread, 1.0)
        cur_u = seeds_u[idx].copy()
        cur_g = seeds_g[idx].copy()
        u_out[offsets[idx]] = cur_u
        g_out[offsets[idx]] = cur_g
        acc = np.zeros(len(idx))
        steps = np.zeros(len(idx))
        for t in range(1, int(lengths[idx].max())):
            live = lengths[idx] > t
            rows = np.flatnonzero(live)
            prop = np.sqrt(1.0 - beta * beta) * cur_u[rows] + beta * rng.standard_normal((len(rows), d))
            g_prop = g_fun(prop)
            ok = g_prop <= threshold
            cur_u[rows[ok]] = prop[ok]
            cur_g[rows[ok]] = g_prop[ok]
            acc[rows] += ok
            steps[rows] += 1
            pos = offsets[idx[rows]] + t
            u_out[pos] = cur_u[rows]
            g_out[pos] = cur_g[rows]
        if steps.sum() > 0:
            rate = float(np.mean(np.minimum(1.0, acc[steps > 0] / steps[steps > 0])))
            hist_acc.append(rate)
            zeta = 1.0 / np.sqrt(i_adapt + 1)
            lam = float(np.exp(np.log(lam) + zeta * (rate - TARGET_ACCEPTANCE)))
            i_adapt += 1
    mean_acc = float(np.mean(hist_acc)) if hist_acc else float("nan")
    return u_out, g_out, lengths, lam, mean_acc


def _chain_gamma(indicator, lengths, p):
    """Correlation factor of the level estimator from within-chain autocovariance."""
    n = indicator.size
    L = int(lengths.min())
    if L < 2 or p <= 0 or p >= 1:
        return 0.0
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    chains = np.stack([indicator[o:o + L] for o in offsets]).astype(float)
    ns = chains.shape[0]
    r0 = p * (1 - p)
    gamma = 0.0
    for k in range(1, L):
        rk = np.sum(chains[:, :-k] * chains[:, k:]) / (ns * (L - k)) - p * p
        gamma += 2.0 * (1.0 - k * ns / n) * rk / r0
    return max(gamma, 0.0)


def subset_simulation(model, lsf, n_per_level=1000, p0=0.1, seed=0, n_failure_out=None,
                      max_levels=20):
    """Subset simulation with adaptive conditional sampling in U-space.

    ``n_failure_out`` controls the returned failure samples: ``None`` keeps
    the failing states of the final level; an integer runs further
    conditional sampling at threshold 0 from those states until exactly
    that many samples are collected.
    """
    n = int(n_per_level)
    if not 0.0 < p0 <= 0.5:
        raise ValueError(f"p0 must lie in (0, 0.5], got {p0}")
    ns = n * p0
    if abs(ns - round(ns)) > 1e-9 or round(ns) < 2:
        raise ValueError(f"n_per_level * p0 must be an integer >= 2, got {ns}")
    ns = int(round(ns))
    g_fun = _g_in_u(model, lsf)
    calls0 = lsf.n_calls

    rng = substream(seed, "sus", 0)
    u = rng.standard_normal((n, model.dim))
    g = g_fun(u)
    lam = 0.6
    levels = []
    probs = []
    cov2 = 0.0
    lengths = None
    for level in range(max_levels + 1):
        order = np.argsort(g, kind="stable")
        g_sorted = g[order]
        tau = 0.5 * (g_sorted[ns - 1] + g_sorted[ns])
        if tau <= 0:
            nf = int(np.sum(g <= 0))
            p_last = nf / n
            probs.append(p_last)
            gamma = 0.0 if level == 0 else _chain_gamma(g <= 0, lengths, p_last)
            if p_last > 0:
                cov2 += (1 - p_last) / (n * p_last) * (1 + gamma)
            levels.append({"threshold": 0.0, "p": p_last, "gamma": gamma})
            break
        if level == max_levels:
            raise NonConvergenceError(
                f"subset simulation did not reach the failure domain in {max_levels} levels")
        probs.append(p0)
        gamma = 0.0 if level == 0 else _chain_gamma(g <= tau, lengths, p0)
        cov2 += (1 - p0) / (n * p0) * (1 + gamma)
        rng = substream(seed, "sus", level + 1)
        perm = rng.permutation(ns)
        seeds = order[:ns][perm]
        u, g, lengths, lam, acc = _conditional_sampling(
            g_fun, u[seeds], g[seeds], n, tau, lam, rng)
        levels.append({"threshold": float(tau), "p": p0, "gamma": gamma,
                       "acceptance": acc, "lambda": lam})

    pf = float(np.prod(probs))
    fail = g <= 0
    if not fail.any():
        raise EstimationError("subset simulation produced no failure samples")
    _check_pf(pf, "subset_simulation")
    u_fail = u[fail]
    if n_failure_out is not None:
        rng = substream(seed, "sus", "failure-samples")
        k = u_fail.shape[0]
        perm = rng.permutation(k)
        u_fail, _, _, lam, acc = _conditional_sampling(
            g_fun, u_fail[perm], g[fail][perm], int(n_failure_out), 0.0, lam, rng)
        levels.append({"threshold": 0.0, "stage": "failure-samples",
                       "acceptance": acc, "n": int(n_failure_out)})
    return ReliabilityResult(
        pf_hat=pf,
        failure_samples=model.inverse(u_fail, 0),
        n_calls=lsf.n_calls - calls0,
        method="sus",
        levels=levels,
        dependent_samples=True,
        cov_estimate=float(np.sqrt(cov2)),
        seed=seed,
    )


# ----------------------------------------------------------------------
# Improved cross-entropy importance sampling
# ----------------------------------------------------------------------


def _mvn_logpdf(x, mu, cov):
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (x - mu).T)
    d = x.shape[1]
    return -0.5 * np.sum(z * z, axis=0) - np.log(np.diag(L)).sum() - 0.5 * d * np.log(2 * np.pi)


def _smooth_indicator(s, g):
    return special.ndtr(-g / s)


def _weighted_cv(w):
    m = w.mean()
    return np.inf if m <= 0 else w.std() / m


def improved_cross_entropy(model, lsf, n_per_level=1000, target_cv=1.5, seed=0,
                           n_failure_out=None, max_levels=50):
    """Improved cross-entropy IS with a single Gaussian in U-space.

    The smoothing parameter of ``Phi(-g / s)`` is lowered level by level so
    that the weights of the next level have coefficient of variation
    ``target_cv``; iteration stops once the indicator itself is reached to
    that accuracy.  Failure samples are drawn with replacement from the
    failing draws of the final level with probability proportional to their
    importance weights.
    """
    n = int(n_per_level)
    if n < 100:
        raise ValueError("n_per_level must be at least 100")
    if not target_cv > 0:
        raise ValueError("target_cv must be positive")
    d = model.dim
    g_fun = _g_in_u(model, lsf)
    calls0 = lsf.n_calls
    mu = np.zeros(d)
    cov = np.eye(d)
    s = np.inf
    levels = []
    for level in range(max_levels):
        rng = substream(seed, "ice", level)
        u = rng.multivariate_normal(mu, cov, size=n, method="cholesky")
        logw = -0.5 * np.sum(u * u, axis=1) - 0.5 * d * np.log(2 * np.pi) - _mvn_logpdf(u, mu, cov)
        g = g_fun(u)
        fail = g <= 0
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.nan_to_num(fail / _smooth_indicator(s, g))
        cv_ind = _weighted_cv(ratio)
        levels.append({"smoothing": float(s), "n_failure": int(fail.sum()),
                       "cv_indicator": float(cv_ind)})
        if cv_ind <= target_cv or level == max_levels - 1:
            break
        w = np.exp(logw - logw.max())

        def objective(t):
            return (_weighted_cv(w * _smooth_indicator(t, g)) - target_cv) ** 2

        upper = 10.0 * abs(np.mean(g)) if not np.isfinite(s) else s
        s = float(optimize.fminbound(objective, 0.0, upper))
        wt = w * _smooth_indicator(s, g)
        if wt.sum() <= 0:
            raise NonConvergenceError("cross-entropy weights vanished")
        wt = wt / wt.sum()
        mu = wt @ u
        du = u - mu
        cov = (du * wt[:, None]).T @ du + 1e-6 * np.eye(d)
    if not fail.any():
        raise NonConvergenceError(
            f"improved cross-entropy found no failure sample in {max_levels} levels")
    w_full = np.exp(logw)
    pf = float(np.mean(fail * w_full))
    _check_pf(pf, "improved_cross_entropy")
    cov_est = float(np.std(fail * w_full) / (np.sqrt(n) * pf))
    k = n if n_failure_out is None else int(n_failure_out)
    rng = substream(seed, "ice", "resample")
    wf = w_full[fail]
    pick = rng.choice(np.flatnonzero(fail), size=k, replace=True, p=wf / wf.sum())
    return ReliabilityResult(
        pf_hat=pf,
        failure_samples=model.inverse(u[pick], 0),
        n_calls=lsf.n_calls - calls0,
        method="ice",
        levels=levels,
        dependent_samples=False,
        cov_estimate=cov_est,
        seed=seed,
    )


METHODS = {"mc": monte_carlo, "sus": subset_simulation, "ice": improved_cross_entropy}
