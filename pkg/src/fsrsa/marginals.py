"""Univariate distribution families used as marginals of the input models.

All functions are vectorised over ``x`` / ``p`` and return numpy arrays (or
floats for scalar input).  The maps ``to_normal`` / ``from_normal`` are the
building blocks of every isoprobabilistic transform in the package; they
switch between the CDF and the survival function so that both tails keep full
relative precision.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize, special

from .errors import DomainError, ParameterizationError

EULER_GAMMA = np.euler_gamma

# CDF values are clamped to this range before the standard-normal quantile.
P_CLAMP = 1e-15


class Family(str, Enum):
    STANDARD_NORMAL = "standard_normal"
    NORMAL = "normal"
    LOGNORMAL = "lognormal"
    GUMBEL = "gumbel"
    WEIBULL = "weibull"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"standardnormal": "standard_normal", "std_normal": "standard_normal",
                   "log_normal": "lognormal", "gauss": "normal", "gaussian": "normal"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ParameterizationError(f"unknown marginal family {name!r}") from None


_N_PARAMS = {
    Family.STANDARD_NORMAL: 0,
    Family.NORMAL: 2,
    Family.LOGNORMAL: 2,
    Family.GUMBEL: 2,
    Family.WEIBULL: 2,
}


def std_normal_ppf(p):
    """Standard-normal quantile with clamping to ``[1e-15, 1 - 1e-15]``."""
    return special.ndtri(np.clip(p, P_CLAMP, 1.0 - P_CLAMP))


def _z_from_tails(cdf, sf):
    """Normal score from a (cdf, sf) pair, using whichever tail is smaller."""
    cdf = np.asarray(cdf, dtype=float)
    sf = np.asarray(sf, dtype=float)
    lower = cdf < 0.5
    z = np.empty(np.broadcast(cdf, sf).shape)
    z[...] = np.where(lower, std_normal_ppf(cdf), -std_normal_ppf(sf))
    return z


def normal_score(cdf, sf):
    """Public alias of the tail-aware normal score used by the transforms."""
    return _z_from_tails(cdf, sf)


@dataclass(frozen=True)
class Marginal:
    """One input's univariate distribution.

    ``params`` are family-native:

    * normal: (mu, sigma)
    * lognormal: (mu_ln, sigma_ln), parameters of the underlying normal
    * gumbel: (location a, scale b), CDF ``exp(-exp(-(x - a) / b))``
    * weibull: (scale lam, shape k)
    * standard_normal: ()

    ``moments`` records the (mean, cov) pair the parameters were derived
    from, if any.
    """

    family: Family
    params: tuple = ()
    moments: tuple | None = None

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        params = tuple(float(p) for p in self.params)
        if fam is Family.STANDARD_NORMAL and not params:
            params = ()
        if len(params) != _N_PARAMS[fam]:
            raise ParameterizationError(
                f"{fam.value} expects {_N_PARAMS[fam]} parameters, got {len(params)}"
            )
        if not all(np.isfinite(params)):
            raise ParameterizationError(f"non-finite parameters {params}")
        if len(params) == 2 and params[1] <= 0:
            raise ParameterizationError(f"{fam.value} scale/shape must be positive, got {params}")
        if fam is Family.WEIBULL and params[0] <= 0:
            raise ParameterizationError(f"weibull scale must be positive, got {params[0]}")
        object.__setattr__(self, "params", params)

    # -- moments ---------------------------------------------------------

    @property
    def mean(self):
        f, p = self.family, self.params
        if f is Family.STANDARD_NORMAL:
            return 0.0
        if f is Family.NORMAL:
            return p[0]
        if f is Family.LOGNORMAL:
            return float(np.exp(p[0] + 0.5 * p[1] ** 2))
        if f is Family.GUMBEL:
            return p[0] + EULER_GAMMA * p[1]
        return p[0] * special.gamma(1.0 + 1.0 / p[1])

    @property
    def std(self):
        f, p = self.family, self.params
        if f is Family.STANDARD_NORMAL:
            return 1.0
        if f is Family.NORMAL:
            return p[1]
        if f is Family.LOGNORMAL:
            s2 = p[1] ** 2
            return float(np.exp(p[0] + 0.5 * s2) * np.sqrt(np.expm1(s2)))
        if f is Family.GUMBEL:
            return p[1] * np.pi / np.sqrt(6.0)
        lam, k = p
        g1 = special.gamma(1.0 + 1.0 / k)
        g2 = special.gamma(1.0 + 2.0 / k)
        return lam * np.sqrt(g2 - g1 * g1)

    @property
    def cov(self):
        return self.std / abs(self.mean)

    @property
    def positive_support(self):
        return self.family in (Family.LOGNORMAL, Family.WEIBULL)

    # -- distribution functions -----------------------------------------

    def _standardise(self, x):
        f, p = self.family, self.params
        if f is Family.STANDARD_NORMAL:
            return x
        return (x - p[0]) / p[1]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        if f in (Family.STANDARD_NORMAL, Family.NORMAL):
            scale = 1.0 if f is Family.STANDARD_NORMAL else p[1]
            z = self._standardise(x)
            return _scalar(np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * scale))
        if f is Family.GUMBEL:
            z = (x - p[0]) / p[1]
            with np.errstate(over="ignore"):
                return _scalar(np.exp(-z - np.exp(-z)) / p[1])
        out = np.zeros_like(x)
        pos = x > 0
        xp = x[pos]
        if f is Family.LOGNORMAL:
            z = (np.log(xp) - p[0]) / p[1]
            out[pos] = np.exp(-0.5 * z * z) / (xp * p[1] * np.sqrt(2.0 * np.pi))
        else:
            lam, k = p
            r = xp / lam
            out[pos] = (k / lam) * r ** (k - 1.0) * np.exp(-(r**k))
        return _scalar(out)

    def cdf(self, x):
        return _scalar(self._cdf_sf(np.asarray(x, dtype=float))[0])

    def sf(self, x):
        return _scalar(self._cdf_sf(np.asarray(x, dtype=float))[1])

    def _cdf_sf(self, x):
        f, p = self.family, self.params
        if f in (Family.STANDARD_NORMAL, Family.NORMAL):
            z = self._standardise(x)
            return special.ndtr(z), special.ndtr(-z)
        if f is Family.GUMBEL:
            z = (x - p[0]) / p[1]
            with np.errstate(over="ignore"):
                e = np.exp(-z)
            return np.exp(-e), -np.expm1(-e)
        cdf = np.zeros_like(x)
        sf = np.ones_like(x)
        pos = x > 0
        xp = x[pos]
        if f is Family.LOGNORMAL:
            z = (np.log(xp) - p[0]) / p[1]
            cdf[pos], sf[pos] = special.ndtr(z), special.ndtr(-z)
        else:
            lam, k = p
            t = (xp / lam) ** k
            cdf[pos], sf[pos] = -np.expm1(-t), np.exp(-t)
        return cdf, sf

    def inv_cdf(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0) & (p < 1))):
            raise DomainError("inv_cdf requires p strictly inside (0, 1)")
        return _scalar(self._quantile(p, 1.0 - p, p < 0.5))

    def _quantile(self, p, q, use_lower):
        """Quantile from lower tail ``p`` where ``use_lower`` else upper tail ``q``."""
        f, prm = self.family, self.params
        if f in (Family.STANDARD_NORMAL, Family.NORMAL, Family.LOGNORMAL):
            z = np.where(use_lower, special.ndtri(p), -special.ndtri(q))
            return self._from_z_closed(z)
        if f is Family.GUMBEL:
            a, b = prm
            with np.errstate(divide="ignore", invalid="ignore"):
                lo = a - b * np.log(-np.log(p))
                hi = a - b * np.log(-np.log1p(-q))
            return np.where(use_lower, lo, hi)
        lam, k = prm
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = lam * (-np.log1p(-p)) ** (1.0 / k)
            hi = lam * (-np.log(q)) ** (1.0 / k)
        return np.where(use_lower, lo, hi)

    def _from_z_closed(self, z):
        f, p = self.family, self.params
        if f is Family.STANDARD_NORMAL:
            return z
        if f is Family.NORMAL:
            return p[0] + p[1] * z
        return np.exp(p[0] + p[1] * z)

    # -- maps to and from standard-normal space ---------------------------

    def to_normal(self, x):
        """``Phi^-1(F(x))`` evaluated through the smaller tail."""
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        if f is Family.STANDARD_NORMAL:
            return _scalar(x.copy())
        if f is Family.NORMAL:
            return _scalar((x - p[0]) / p[1])
        if f is Family.LOGNORMAL:
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (np.log(x) - p[0]) / p[1]
            return _scalar(np.clip(z, -_Z_MAX, _Z_MAX))
        cdf, sf = self._cdf_sf(x)
        return _scalar(_z_from_tails(cdf, sf))

    def from_normal(self, z):
        """Inverse of :meth:`to_normal`."""
        z = np.asarray(z, dtype=float)
        f = self.family
        if f in (Family.STANDARD_NORMAL, Family.NORMAL, Family.LOGNORMAL):
            return _scalar(self._from_z_closed(z))
        return _scalar(self._quantile(special.ndtr(z), special.ndtr(-z), z < 0))

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.isfinite(x)
        if self.positive_support:
            ok &= x > 0
        return ok

    def to_dict(self):
        out = {"family": self.family.value, "params": list(self.params)}
        if self.moments is not None:
            out["mean"], out["cov"] = self.moments
        return out


# |Phi^-1(1e-15)|
_Z_MAX = float(-special.ndtri(P_CLAMP))


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def _weibull_cov(k):
    g1 = special.gamma(1.0 + 1.0 / k)
    g2 = special.gamma(1.0 + 2.0 / k)
    return np.sqrt(g2 / (g1 * g1) - 1.0)


def from_moments(family, mean, cov):
    """Build a :class:`Marginal` that reproduces ``mean`` and ``cov``.

    Weibull shape is found by bisection on the cov-vs-shape relation over
    ``[0.1, 50]`` (the relation is monotone decreasing).  Gumbel uses the
    maxima convention: ``b = sigma * sqrt(6) / pi``, ``a = mean - gamma_E * b``.
    """
    fam = Family.parse(family)
    mean = float(mean)
    cov = float(cov)
    if not cov > 0:
        raise ParameterizationError(f"cov must be positive, got {cov}")
    sigma = abs(mean) * cov
    if fam is Family.STANDARD_NORMAL:
        raise ParameterizationError("standard_normal has no free moments")
    if fam is Family.NORMAL:
        params = (mean, sigma)
    elif fam is Family.GUMBEL:
        b = sigma * np.sqrt(6.0) / np.pi
        params = (mean - EULER_GAMMA * b, b)
    elif fam is Family.LOGNORMAL:
        if mean <= 0:
            raise ParameterizationError("lognormal mean must be positive")
        s2 = np.log1p(cov * cov)
        params = (np.log(mean) - 0.5 * s2, np.sqrt(s2))
    else:
        if mean <= 0:
            raise ParameterizationError("weibull mean must be positive")
        lo, hi = 0.1, 50.0
        resid = lambda k: _weibull_cov(k) - cov  # noqa: E731
        if resid(lo) * resid(hi) > 0:
            raise ParameterizationError(
                f"weibull shape for cov={cov} not bracketed in [{lo}, {hi}]"
            )
        k = optimize.bisect(resid, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
        params = (mean / special.gamma(1.0 + 1.0 / k), k)
    return Marginal(fam, params, moments=(mean, cov))


def from_dict(entry):
    """Parse ``{family, mean, cov}`` or ``{family, params: [...]}``."""
    if "family" not in entry:
        raise ParameterizationError(f"marginal entry lacks 'family': {entry}")
    if "params" in entry:
        return Marginal(entry["family"], tuple(entry["params"]))
    if "mean" in entry and "cov" in entry:
        return from_moments(entry["family"], entry["mean"], entry["cov"])
    if Family.parse(entry["family"]) is Family.STANDARD_NORMAL:
        return Marginal(Family.STANDARD_NORMAL)
    raise ParameterizationError(f"marginal entry needs 'params' or 'mean'+'cov': {entry}")
