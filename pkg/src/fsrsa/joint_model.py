"""Dependent input models and their hierarchical (Rosenblatt) transforms.

Two model types share one interface:

* :class:`NatafModel`: marginals plus a Gaussian copula.  The transform for
  any variable ordering is ``u = A^-1 z`` where ``z`` holds the normal scores
  in that ordering and ``A`` is the Cholesky factor of the copula correlation
  with rows and columns permuted accordingly.
* :class:`GenericHierarchicalModel`: an explicit chain of conditional CDFs
  for each ordering; inverses are solved by bracketed root finding when no
  closed form is available.

Orderings are 0-based tuples.  ``cyclic_orderings(d)[i]`` starts at variable
``i`` and wraps around, so under transform ``i`` variable ``i`` sits in the
first output coordinate (full effect) and variable ``i - 1`` in the last one
(independent effect).
"""

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import linalg, optimize, special

from .errors import FitError, IntegrationError, ModelError, NumericError, TransformError
from .marginals import Family, Marginal, _Z_MAX, normal_score

RHO_BOUND = 0.999


def cyclic_orderings(d):
    """The ``d`` cyclic left shifts of ``(0, ..., d-1)``."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return [tuple((i + j) % d for j in range(d)) for i in range(d)]


def _as_rows(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != d:
        raise ValueError(f"expected {d} columns, got array of shape {x.shape}")
    return x, single


class HierarchicalModel:
    """Shared behaviour of the joint input models."""

    dim: int
    names: tuple

    @property
    def orderings(self):
        return cyclic_orderings(self.dim)

    def _ordering(self, ordering):
        if ordering is None:
            return self.orderings[0]
        if isinstance(ordering, (int, np.integer)):
            return self.orderings[int(ordering)]
        ordering = tuple(int(k) for k in ordering)
        if sorted(ordering) != list(range(self.dim)):
            raise ValueError(f"{ordering} is not a permutation of range({self.dim})")
        return ordering

    def forward(self, x, ordering=0):
        raise NotImplementedError

    def inverse(self, u, ordering=0):
        raise NotImplementedError

    def sample(self, n, rng):
        """Draw ``n`` samples of X through the inverse of the first transform."""
        return self.inverse(rng.standard_normal((n, self.dim)), 0)

    def transforms(self):
        return TransformFamily(self)


@dataclass(frozen=True)
class Transform:
    model: HierarchicalModel
    ordering: tuple

    @property
    def first(self):
        """Variable whose full effect is held by output coordinate 0."""
        return self.ordering[0]

    @property
    def last(self):
        """Variable whose independent effect is held by the last coordinate."""
        return self.ordering[-1]

    def forward(self, x):
        return self.model.forward(x, self.ordering)

    def inverse(self, u):
        return self.model.inverse(u, self.ordering)


class TransformFamily(Sequence):
    """The ``d`` cyclic transforms of a model."""

    def __init__(self, model):
        self.model = model
        self._items = [Transform(model, o) for o in model.orderings]

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)


# ----------------------------------------------------------------------
# Nataf model
# ----------------------------------------------------------------------


def _validate_correlation(r, name):
    r = np.array(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ModelError(f"{name} must be square, got shape {r.shape}")
    if not np.allclose(r, r.T, atol=1e-12):
        raise ModelError(f"{name} is not symmetric")
    if not np.allclose(np.diag(r), 1.0, atol=1e-12):
        raise ModelError(f"{name} must have a unit diagonal")
    if np.any(np.abs(r) > 1.0):
        raise ModelError(f"{name} has entries outside [-1, 1]")
    return r


def nearest_correlation(r, eig_floor=1e-8):
    """Clip eigenvalues at ``eig_floor`` and rescale to a unit diagonal."""
    w, v = np.linalg.eigh(0.5 * (r + r.T))
    fixed = (v * np.maximum(w, eig_floor)) @ v.T
    s = 1.0 / np.sqrt(np.diag(fixed))
    fixed = fixed * np.outer(s, s)
    np.fill_diagonal(fixed, 1.0)
    return 0.5 * (fixed + fixed.T)


def _gh_rule(n):
    z, w = hermegauss(n)
    return z, w / np.sqrt(2.0 * np.pi)


def nataf_correlation_integral(mi, mj, rho_z, n_nodes=64):
    """Correlation of ``(X_i, X_j)`` implied by copula correlation ``rho_z``.

    Evaluates the standardised covariance integral with a tensorised
    Gauss-Hermite rule.
    """
    z, w = _gh_rule(n_nodes)
    zi = z[:, None]
    zj = rho_z * z[:, None] + np.sqrt(1.0 - rho_z * rho_z) * z[None, :]
    gi = (np.asarray(mi.from_normal(zi)) - mi.mean) / mi.std
    gj = (np.asarray(mj.from_normal(zj)) - mj.mean) / mj.std
    return float(np.sum(w[:, None] * w[None, :] * gi * gj))


def _is_gaussian(m):
    return m.family in (Family.NORMAL, Family.STANDARD_NORMAL)


def fit_nataf_correlation(marginals, sigma_x, n_nodes=64, repair=True):
    """Fit the Gaussian-copula correlation reproducing ``sigma_x``.

    Each off-diagonal entry is solved independently by Brent's method on
    ``(-0.999, 0.999)``.  Gaussian pairs and zero targets are mapped through
    unchanged.  If the assembled matrix is not positive definite it is
    repaired to the nearest correlation matrix (with a warning) unless
    ``repair`` is false, in which case :class:`ModelError` is raised.
    """
    sigma_x = _validate_correlation(sigma_x, "sigma_x")
    d = len(marginals)
    if sigma_x.shape != (d, d):
        raise ModelError(f"sigma_x shape {sigma_x.shape} does not match {d} marginals")
    sigma_z = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            target = sigma_x[i, j]
            if target == 0.0 or (_is_gaussian(marginals[i]) and _is_gaussian(marginals[j])):
                rho = target
            else:
                f = lambda r: nataf_correlation_integral(  # noqa: E731
                    marginals[i], marginals[j], r, n_nodes) - target
                lo, hi = -RHO_BOUND, RHO_BOUND
                flo, fhi = f(lo), f(hi)
                if flo * fhi > 0:
                    raise FitError(
                        f"correlation {target} between variables {i} and {j} "
                        f"is not attainable (range [{flo + target:.4f}, {fhi + target:.4f}])"
                    )
                rho = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
            sigma_z[i, j] = sigma_z[j, i] = rho
    try:
        np.linalg.cholesky(sigma_z)
    except np.linalg.LinAlgError:
        if not repair:
            raise ModelError("fitted copula correlation is not positive definite") from None
        warnings.warn("fitted copula correlation is not positive definite; "
                      "using the nearest correlation matrix", RuntimeWarning)
        sigma_z = nearest_correlation(sigma_z)
    return sigma_z


class NatafModel(HierarchicalModel):
    """Marginals joined by a Gaussian copula.

    The copula correlation is fitted at construction and the Cholesky factors
    of all cyclic orderings are cached eagerly, so instances are immutable
    and safe to share between threads.
    """

    def __init__(self, marginals, sigma_x, names=None, n_nodes=64, repair=True):
        self.marginals = tuple(marginals)
        self.dim = len(self.marginals)
        self.names = tuple(names) if names else tuple(f"x{k + 1}" for k in range(self.dim))
        if len(self.names) != self.dim:
            raise ModelError("names and marginals differ in length")
        self.sigma_x = _validate_correlation(sigma_x, "sigma_x")
        self.sigma_z = fit_nataf_correlation(self.marginals, self.sigma_x, n_nodes, repair)
        self._chol = {}
        for o in self.orderings:
            self._factor(o)

    def _factor(self, ordering):
        if ordering not in self._chol:
            idx = np.array(ordering)
            try:
                self._chol[ordering] = np.linalg.cholesky(self.sigma_z[np.ix_(idx, idx)])
            except np.linalg.LinAlgError:
                raise ModelError("copula correlation is not positive definite") from None
        return self._chol[ordering]

    def cholesky(self, ordering=0):
        return self._factor(self._ordering(ordering))

    def _check_support(self, x):
        for k, m in enumerate(self.marginals):
            bad = ~m.in_support(x[:, k])
            if np.any(bad):
                row = int(np.flatnonzero(bad)[0])
                raise TransformError(
                    f"x[{row}, {k}] = {x[row, k]!r} is outside the support of "
                    f"{self.names[k]} ({m.family.value})", row=row, coordinate=k)

    def forward(self, x, ordering=0):
        ordering = self._ordering(ordering)
        x, single = _as_rows(x, self.dim)
        self._check_support(x)
        z = np.column_stack([m.to_normal(x[:, k]) for k, m in enumerate(self.marginals)])
        u = linalg.solve_triangular(self._factor(ordering), z[:, ordering].T, lower=True).T
        return u[0] if single else u

    def inverse(self, u, ordering=0):
        ordering = self._ordering(ordering)
        u, single = _as_rows(u, self.dim)
        zp = u @ self._factor(ordering).T
        x = np.empty_like(zp)
        for pos, k in enumerate(ordering):
            x[:, k] = self.marginals[k].from_normal(zp[:, pos])
        return x[0] if single else x


# ----------------------------------------------------------------------
# Generic hierarchical model
# ----------------------------------------------------------------------


@dataclass
class Conditional:
    """One link ``F(x_j | history)`` of a Rosenblatt chain.

    ``cdf_sf(x, history)`` returns the pair ``(F, 1 - F)`` for 1-D ``x`` and a
    history array of shape ``(n, j)`` holding the previously ordered
    variables.  ``inverse(z, history)`` is an optional closed-form inverse of
    the normal score.  ``lower`` is the lower support bound and ``guess``
    returns a starting point for root finding.
    """

    cdf_sf: Callable
    inverse: Callable | None = None
    lower: float = -np.inf
    guess: Callable | None = None
    scale: float = 1.0


def _root_normal_score(cond, u, history, tol=1e-12, max_iter=200):
    """Solve ``normal_score(F(x | history)) = u`` for ``x`` elementwise.

    Bracket expansion followed by Illinois-modified regula falsi with a
    bisection safeguard; converges on the normal-score residual.
    """
    n = u.shape[0]
    u = np.clip(u, -_Z_MAX + 1e-6, _Z_MAX - 1e-6)

    def resid(x, rows):
        c, s = cond.cdf_sf(x, history[rows])
        return normal_score(c, s) - u[rows]

    all_rows = np.arange(n)
    x0 = cond.guess(history) if cond.guess is not None else np.zeros(n)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    step = np.full(n, float(cond.scale))
    f0 = resid(x0, all_rows)
    a = x0.copy()
    b = x0.copy()
    fa = f0.copy()
    fb = f0.copy()
    # expand away from x0 until the residual changes sign
    need = f0 != 0
    for _ in range(200):
        if not need.any():
            break
        rows = np.flatnonzero(need)
        up = f0[rows] < 0
        trial = np.where(up, b[rows] + step[rows], a[rows] - step[rows])
        if np.isfinite(cond.lower):
            # halve the distance to the support bound instead of crossing it
            safe = cond.lower + 0.5 * (a[rows] - cond.lower)
            trial = np.where(~up & (trial <= cond.lower), safe, trial)
        ft = resid(trial, rows)
        a_new = np.where(up, b[rows], trial)
        fa_new = np.where(up, fb[rows], ft)
        b_new = np.where(up, trial, a[rows])
        fb_new = np.where(up, ft, fa[rows])
        a[rows], fa[rows], b[rows], fb[rows] = a_new, fa_new, b_new, fb_new
        step[rows] *= 2.0
        need[rows] = (fa[rows] > 0) | (fb[rows] < 0)
    else:
        raise NumericError("could not bracket conditional-CDF root")
    x = np.where(f0 == 0, x0, 0.5 * (a + b))
    active = f0 != 0
    side = np.zeros(n, dtype=int)
    for it in range(max_iter):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        ar, br, far, fbr = a[rows], b[rows], fa[rows], fb[rows]
        denom = fbr - far
        with np.errstate(divide="ignore", invalid="ignore"):
            c = br - fbr * (br - ar) / denom
        bad = ~np.isfinite(c) | (c <= np.minimum(ar, br)) | (c >= np.maximum(ar, br))
        if it % 4 == 3:
            bad[:] = True
        c = np.where(bad, 0.5 * (ar + br), c)
        fc = resid(c, rows)
        x[rows] = c
        done = (np.abs(fc) <= tol) | (np.abs(br - ar) <= 1e-14 * np.maximum(1.0, np.abs(c)))
        left = fc < 0
        # keep a on the negative side, b on the positive side
        a[rows] = np.where(left, c, ar)
        fa[rows] = np.where(left, fc, far)
        b[rows] = np.where(left, br, c)
        fb[rows] = np.where(left, fbr, fc)
        s_old = side[rows]
        s_new = np.where(left, -1, 1)
        repeat = s_old == s_new
        fb[rows] = np.where(repeat & left, 0.5 * fb[rows], fb[rows])
        fa[rows] = np.where(repeat & ~left, 0.5 * fa[rows], fa[rows])
        side[rows] = s_new
        active[rows] = ~done
    else:
        raise NumericError("conditional-CDF inversion did not converge")
    return x


class GenericHierarchicalModel(HierarchicalModel):
    """Joint model given by explicit conditional-CDF chains.

    ``chains`` maps each cyclic ordering (tuple) to a list of
    :class:`Conditional`, one per position.  ``sampler`` optionally draws
    samples directly; by default sampling goes through the inverse of the
    first ordering.
    """

    def __init__(self, dim, chains, names=None, info=None):
        self.dim = int(dim)
        self.names = tuple(names) if names else tuple(f"x{k + 1}" for k in range(self.dim))
        self.chains = {}
        for o in self.orderings:
            if o not in chains:
                raise ModelError(f"no conditional chain supplied for ordering {o}")
            if len(chains[o]) != self.dim:
                raise ModelError(f"chain for ordering {o} has wrong length")
            self.chains[o] = list(chains[o])
        self.info = dict(info or {})

    def forward(self, x, ordering=0):
        ordering = self._ordering(ordering)
        x, single = _as_rows(x, self.dim)
        if not np.all(np.isfinite(x)):
            row, col = map(int, np.argwhere(~np.isfinite(x))[0])
            raise TransformError(f"non-finite x[{row}, {col}]", row=row, coordinate=col)
        xp = x[:, ordering]
        u = np.empty_like(xp)
        for pos, cond in enumerate(self.chains[ordering]):
            if np.isfinite(cond.lower):
                bad = xp[:, pos] <= cond.lower
                if np.any(bad):
                    row = int(np.flatnonzero(bad)[0])
                    raise TransformError(
                        f"x[{row}, {ordering[pos]}] is outside the support",
                        row=row, coordinate=ordering[pos])
            c, s = cond.cdf_sf(xp[:, pos], xp[:, :pos])
            c = np.asarray(c, dtype=float)
            s = np.asarray(s, dtype=float)
            if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
                raise NumericError(f"non-finite conditional CDF at position {pos}")
            u[:, pos] = normal_score(c, s)
        return u[0] if single else u

    def inverse(self, u, ordering=0):
        ordering = self._ordering(ordering)
        u, single = _as_rows(u, self.dim)
        xp = np.empty_like(u)
        for pos, cond in enumerate(self.chains[ordering]):
            hist = xp[:, :pos]
            if cond.inverse is not None:
                xp[:, pos] = cond.inverse(u[:, pos], hist)
            else:
                xp[:, pos] = _root_normal_score(cond, u[:, pos], hist)
        x = np.empty_like(xp)
        x[:, list(ordering)] = xp
        return x[0] if single else x


# ----------------------------------------------------------------------
# Load model: lognormal A, B and Gumbel H | A, B (location A, scale B)
# ----------------------------------------------------------------------

TAIL_P = 1e-10
_T_HI = float(-special.ndtri(TAIL_P))


@dataclass
class QuadratureConfig:
    """Node budget of the conditional-CDF integrals.

    ``nodes`` is the starting Gauss-Legendre order per integrated variable.
    At construction each evaluator's order is grown by half until the normal
    scores of a probe set change by less than ``tol``; exceeding
    ``max_nodes`` raises :class:`IntegrationError`.
    """

    nodes: int = 16
    max_nodes: int = 512
    tol: float = 1e-7
    chunk: int = 2_000_000


class _LogNormalRule:
    """Gauss-Legendre rule in the standardised log of a lognormal variable.

    The domain is truncated at the ``1e-10`` and ``1 - 1e-10`` quantiles.
    """

    def __init__(self, marginal):
        if marginal.family is not Family.LOGNORMAL:
            raise ModelError("integrated-out variables must be lognormal")
        self.mu, self.sigma = marginal.params
        self.marginal = marginal

    def value(self, t):
        return np.exp(self.mu + self.sigma * t)

    def t_of(self, x):
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def full(self, n):
        g, w = np.polynomial.legendre.leggauss(n)
        t = _T_HI * g
        w = w * _T_HI * np.exp(-0.5 * t * t)
        return self.value(t), w / w.sum()

    def split(self, x, n):
        """Nodes and weights for ``[t_lo, t(x)]`` and ``[t(x), t_hi]``.

        Weights share one normalisation so the two pieces add up to the full
        truncated mass.
        """
        t_x = np.clip(self.t_of(x), -_T_HI, _T_HI)[:, None]
        g, w = np.polynomial.legendre.leggauss(n)
        half_lo = 0.5 * (t_x + _T_HI)
        half_hi = 0.5 * (_T_HI - t_x)
        t_lo = -_T_HI + half_lo * (g + 1.0)
        t_hi = t_x + half_hi * (g + 1.0)
        w_lo = w * half_lo * np.exp(-0.5 * t_lo * t_lo)
        w_hi = w * half_hi * np.exp(-0.5 * t_hi * t_hi)
        return self.value(t_lo), w_lo, self.value(t_hi), w_hi


    def split_at(self, x, c, n):
        """Like :meth:`split`, with each piece further split at ``c``.

        Used where the integrand peaks near ``c``; returns ``2n`` nodes per
        piece.
        """
        t_x = np.clip(self.t_of(x), -_T_HI, _T_HI)[:, None]
        t_c = np.clip(self.t_of(c), -_T_HI, _T_HI)[:, None]
        g, w = np.polynomial.legendre.leggauss(n)

        def piece(lo, hi):
            half = 0.5 * (hi - lo)
            t = lo + half * (g + 1.0)
            return t, w * half * np.exp(-0.5 * t * t)

        m1 = np.minimum(t_c, t_x)
        m2 = np.maximum(t_c, t_x)
        t1, w1 = piece(-_T_HI, m1)
        t2, w2 = piece(m1, t_x)
        t3, w3 = piece(t_x, m2)
        t4, w4 = piece(m2, _T_HI)
        t_lo, w_lo = np.hstack([t1, t2]), np.hstack([w1, w2])
        t_hi, w_hi = np.hstack([t3, t4]), np.hstack([w3, w4])
        return self.value(t_lo), w_lo, self.value(t_hi), w_hi


def _gumbel_cdf_sf(h, a, b):
    z = (h - a) / b
    with np.errstate(over="ignore"):
        e = np.exp(-z)
    return np.exp(-e), -np.expm1(-e)


def _gumbel_logpdf(h, a, b):
    z = (h - a) / b
    with np.errstate(over="ignore"):
        return -np.log(b) - z - np.exp(-z)


def _ratio(log_lo, w_lo, log_hi, w_hi):
    """``(N/(N+C), C/(N+C))`` from log-integrands, stabilised by the row max."""
    shift = np.maximum(log_lo.max(axis=1), log_hi.max(axis=1))[:, None]
    if not np.all(np.isfinite(shift)):
        raise NumericError("conditional density vanishes on the integration domain")
    num = np.sum(w_lo * np.exp(log_lo - shift), axis=1)
    com = np.sum(w_hi * np.exp(log_hi - shift), axis=1)
    tot = num + com
    if np.any(tot <= 0):
        raise NumericError("conditional density vanishes on the integration domain")
    return num / tot, com / tot


def _chunked(fn, n_rows, per_row, chunk):
    """Apply ``fn(sl)`` over row slices so that rows*per_row stays below chunk."""
    step = max(1, chunk // max(per_row, 1))
    outs = [fn(slice(s, min(s + step, n_rows))) for s in range(0, n_rows, step)]
    if not outs:
        return np.empty(0), np.empty(0)
    return np.concatenate([o[0] for o in outs]), np.concatenate([o[1] for o in outs])


class LoadChain:
    """Conditional CDFs of the (A, B, H) load model.

    ``A`` and ``B`` are lognormal, ``H | A=a, B=b`` is Gumbel with location
    ``a`` and scale ``b``.  The evaluators integrate ``A`` and/or ``B`` out
    with :class:`_LogNormalRule`; all return ``(cdf, sf)`` pairs.
    """

    def __init__(self, a_marg, b_marg, quad=None):
        self.a_marg = a_marg
        self.b_marg = b_marg
        self.quad = quad or QuadratureConfig()
        self.ra = _LogNormalRule(a_marg)
        self.rb = _LogNormalRule(b_marg)
        self.nodes = dict.fromkeys(("hb", "ahb", "bah", "hm", "ah"), self.quad.nodes)

    # F(h | a, b)
    def h_given_ab(self, h, a, b):
        return _gumbel_cdf_sf(h, a, b)

    # F(h | b) = int F(h | a, b) f(a) da, split at a = h where F(h | a, b) steps
    def h_given_b(self, h, b, n=None):
        n = n or self.nodes["hb"]

        def block(sl):
            alo, wlo, ahi, whi = self.ra.split(h[sl], n)
            hh, bb = h[sl, None], b[sl, None]
            clo, slo = _gumbel_cdf_sf(hh, alo, bb)
            chi, shi = _gumbel_cdf_sf(hh, ahi, bb)
            tot = wlo.sum(axis=1) + whi.sum(axis=1)
            return ((clo * wlo).sum(axis=1) + (chi * whi).sum(axis=1)) / tot, \
                ((slo * wlo).sum(axis=1) + (shi * whi).sum(axis=1)) / tot

        return _chunked(block, len(h), 2 * n, self.quad.chunk)

    # F(a | h, b)
    def a_given_hb(self, a, h, b, n=None):
        n = n or self.nodes["ahb"]

        def block(sl):
            alo, wlo, ahi, whi = self.ra.split_at(a[sl], h[sl], n)
            hh, bb = h[sl, None], b[sl, None]
            return _ratio(_gumbel_logpdf(hh, alo, bb), wlo, _gumbel_logpdf(hh, ahi, bb), whi)

        return _chunked(block, len(a), 4 * n, self.quad.chunk)

    # F(h) = int int F(h | a, b) f(a) f(b) da db, a-integral split at a = h
    def h_marginal(self, h, n=None):
        n_a = n_b = n or self.nodes["hm"]
        bv, wb = self.rb.full(n_b)

        def block(sl):
            alo, wlo, ahi, whi = self.ra.split(h[sl], n_a)
            hh = h[sl, None, None]
            clo, slo = _gumbel_cdf_sf(hh, alo[:, :, None], bv)
            chi, shi = _gumbel_cdf_sf(hh, ahi[:, :, None], bv)
            tot = wlo.sum(axis=1) + whi.sum(axis=1)
            c = np.einsum("nij,ni,j->n", clo, wlo, wb) + np.einsum("nij,ni,j->n", chi, whi, wb)
            s = np.einsum("nij,ni,j->n", slo, wlo, wb) + np.einsum("nij,ni,j->n", shi, whi, wb)
            return c / tot, s / tot

        return _chunked(block, len(h), 2 * n_a * n_b, self.quad.chunk)

    def _log_h_given_a(self, h, a, n_b):
        """log of ``int f(h | a, b) f(b) db`` for broadcastable ``h``, ``a``."""
        bv, wb = self.rb.full(n_b)
        lp = _gumbel_logpdf(h[..., None], a[..., None], bv)
        m = lp.max(axis=-1, keepdims=True)
        with np.errstate(divide="ignore"):
            return m[..., 0] + np.log(np.sum(wb * np.exp(lp - m), axis=-1))

    # F(a | h)
    def a_given_h(self, a, h, n=None):
        n_a = n_b = n or self.nodes["ah"]

        def block(sl):
            alo, wlo, ahi, whi = self.ra.split_at(a[sl], h[sl], n_a)
            hh = h[sl, None]
            return _ratio(self._log_h_given_a(hh, alo, n_b), wlo,
                          self._log_h_given_a(hh, ahi, n_b), whi)

        return _chunked(block, len(a), 4 * n_a * n_b, self.quad.chunk)

    # F(b | a, h)
    def b_given_ah(self, b, a, h, n=None):
        n = n or self.nodes["bah"]

        def block(sl):
            blo, wlo, bhi, whi = self.rb.split(b[sl], n)
            hh, aa = h[sl, None], a[sl, None]
            return _ratio(_gumbel_logpdf(hh, aa, blo), wlo, _gumbel_logpdf(hh, aa, bhi), whi)

        return _chunked(block, len(b), 2 * n, self.quad.chunk)

    # -- adaptive node selection --------------------------------------

    def calibrate(self, probe):
        """Grow each evaluator's node count until it is converged on ``probe``.

        ``probe`` is an ``(m, 3)`` array of (a, b, h) points.  Returns the
        chosen node counts.
        """
        a, b, h = probe[:, 0], probe[:, 1], probe[:, 2]
        evaluators = {
            "hb": lambda n: self.h_given_b(h, b, n),
            "ahb": lambda n: self.a_given_hb(a, h, b, n),
            "bah": lambda n: self.b_given_ah(b, a, h, n),
            "hm": lambda n: self.h_marginal(h, n),
            "ah": lambda n: self.a_given_h(a, h, n),
        }
        for key, fn in evaluators.items():
            n = self.quad.nodes
            prev = normal_score(*fn(n))
            while True:
                n_next = int(np.ceil(1.5 * n))
                if n_next > self.quad.max_nodes:
                    raise IntegrationError(
                        f"quadrature for {key} did not converge within "
                        f"{self.quad.max_nodes} nodes")
                cur = normal_score(*fn(n_next))
                if float(np.max(np.abs(cur - prev))) <= self.quad.tol:
                    break
                n, prev = n_next, cur
            # the finer of the two converged orders is kept
            self.nodes[key] = n_next
        return dict(self.nodes)


def load_model_abh(a_marg, b_marg, quad=None, calibrate=True, probe_size=200, seed=7):
    """Generic hierarchical model over ``(A, B, H)`` with all three cyclic chains.

    Orderings: ``(A, B, H)`` uses closed forms; ``(B, H, A)`` uses
    ``F(b), F(h | b), F(a | h, b)``; ``(H, A, B)`` uses
    ``F(h), F(a | h), F(b | a, h)``.
    """
    chain = LoadChain(a_marg, b_marg, quad)

    def lower_cdf_sf(m):
        return lambda x, hist: m._cdf_sf(np.asarray(x, dtype=float))

    def lower_inv(m):
        return lambda z, hist: np.asarray(m.from_normal(z), dtype=float)

    def h_ab_inv(z, hist):
        a, b = hist[:, 0], hist[:, 1]
        return Marginal(Family.GUMBEL, (0.0, 1.0)).from_normal(z) * b + a

    h_scale = a_marg.std + b_marg.mean
    h_mean0 = a_marg.mean + np.euler_gamma * b_marg.mean

    cond_a = Conditional(lower_cdf_sf(a_marg), lower_inv(a_marg), lower=0.0)
    cond_b = Conditional(lower_cdf_sf(b_marg), lower_inv(b_marg), lower=0.0)
    chains = {
        (0, 1, 2): [
            cond_a,
            cond_b,
            Conditional(lambda h, hist: chain.h_given_ab(h, hist[:, 0], hist[:, 1]), h_ab_inv),
        ],
        (1, 2, 0): [
            cond_b,
            Conditional(lambda h, hist: chain.h_given_b(h, hist[:, 0]),
                        guess=lambda hist: a_marg.mean + np.euler_gamma * hist[:, 0],
                        scale=h_scale),
            Conditional(lambda a, hist: chain.a_given_hb(a, hist[:, 1], hist[:, 0]),
                        lower=0.0, guess=lambda hist: np.full(len(hist), a_marg.mean),
                        scale=a_marg.std),
        ],
        (2, 0, 1): [
            Conditional(lambda h, hist: chain.h_marginal(h),
                        guess=lambda hist: np.full(len(hist), h_mean0), scale=h_scale),
            Conditional(lambda a, hist: chain.a_given_h(a, hist[:, 0]),
                        lower=0.0, guess=lambda hist: np.full(len(hist), a_marg.mean),
                        scale=a_marg.std),
            Conditional(lambda b, hist: chain.b_given_ah(b, hist[:, 1], hist[:, 0]),
                        lower=0.0, guess=lambda hist: np.full(len(hist), b_marg.mean),
                        scale=b_marg.std),
        ],
    }
    model = GenericHierarchicalModel(3, chains, names=("A", "B", "H"),
                                     info={"a": a_marg.to_dict(), "b": b_marg.to_dict()})
    model.chain = chain
    if calibrate:
        rng = np.random.default_rng(seed)
        probe = model.inverse(np.clip(rng.standard_normal((probe_size, 3)) * 1.5, -5, 5), 0)
        model.calibration = chain.calibrate(probe)
    return model
