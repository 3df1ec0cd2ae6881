"""Gaussian-kernel density estimates in standard-normal space.

The sensitivity estimators need ``V[f(U) / phi(U)]`` for a kernel estimate
``f`` of a failure-conditioned density and ``U`` standard normal.  In one
dimension this is done by a fixed trapezoid rule; in higher dimensions by
Monte Carlo.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BandwidthError
from .rng import substream

LOG_2PI = np.log(2.0 * np.pi)


def silverman_factor(k, n):
    """Silverman scale factor ``(4 / (k + 2))**(1/(k+4)) * n**(-1/(k+4))``."""
    k = int(k)
    if k < 1:
        raise ValueError("dimension must be at least 1")
    if n < 1:
        raise ValueError("sample size must be at least 1")
    return (4.0 / (k + 2)) ** (1.0 / (k + 4)) * float(n) ** (-1.0 / (k + 4))


def silverman_bandwidth(samples):
    """Per-column kernel standard deviations by Silverman's rule."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if n < 2:
        raise BandwidthError(f"need at least 2 samples for a bandwidth, got {n}")
    sd = x.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise BandwidthError(f"column(s) {bad.tolist()} are constant; bandwidth undefined")
    return silverman_factor(k, n) * sd


@dataclass(frozen=True)
class RatioVarianceConfig:
    """How ``V[f / phi]`` is evaluated.

    ``mode`` is ``"auto"`` (trapezoid for one dimension, Monte Carlo
    otherwise), ``"quadrature"`` (one dimension only), ``"mc"`` (fresh
    standard normals) or ``"kde_is"`` (points drawn from the estimate
    itself, using ``E_phi[r^2] = E_f[r]``).
    """

    mode: str = "auto"
    truncation: float = 6.0
    grid_halfwidth: float = 8.0
    grid_points: int = 2001
    n_eval: int = 100_000
    seed: int = 0


@dataclass(frozen=True)
class KdeModel:
    samples: np.ndarray
    bandwidth: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] == 0:
            raise BandwidthError("cannot build a density estimate from zero samples")
        if not np.all(np.isfinite(x)):
            raise BandwidthError("samples contain non-finite values")
        h = silverman_bandwidth(x) if self.bandwidth is None else np.atleast_1d(
            np.asarray(self.bandwidth, dtype=float))
        if h.shape != (x.shape[1],):
            raise BandwidthError(f"bandwidth must have {x.shape[1]} entries, got {h.shape}")
        if not np.all(h > 0) or not np.all(np.isfinite(h)):
            raise BandwidthError(f"bandwidths must be positive and finite, got {h}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "bandwidth", h)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def pdf(self, u, chunk=4_000_000):
        """Evaluate the estimate at the rows of ``u`` (shape ``(m, k)`` or ``(m,)`` for k=1)."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u[:, None] if self.dim == 1 else u[None, :]
        if u.shape[1] != self.dim:
            raise ValueError(f"points have {u.shape[1]} columns, estimate has {self.dim}")
        h = self.bandwidth
        xs = self.samples / h
        us = u / h
        out = np.zeros(u.shape[0])
        # kernels further than 8.5 bandwidths contribute below 1e-15 relative
        lo = xs.min(axis=0) - 8.5
        hi = xs.max(axis=0) + 8.5
        near = np.flatnonzero(np.all((us >= lo) & (us <= hi), axis=1))
        if near.size == 0:
            return out
        x2 = np.sum(xs * xs, axis=1)
        step = max(1, chunk // self.n)
        log_norm = -np.log(self.n) - np.log(h).sum() - 0.5 * self.dim * LOG_2PI
        for start in range(0, near.size, step):
            rows = near[start:start + step]
            v = us[rows]
            d2 = np.sum(v * v, axis=1)[:, None] + x2[None, :] - 2.0 * (v @ xs.T)
            np.maximum(d2, 0.0, out=d2)
            out[rows] = np.exp(-0.5 * d2).sum(axis=1) * np.exp(log_norm)
        return out

    def sample(self, m, rng):
        """Draw ``m`` points from the estimate."""
        pick = rng.integers(0, self.n, size=m)
        return self.samples[pick] + rng.standard_normal((m, self.dim)) * self.bandwidth

    def ratio_variance(self, config=None):
        value, _ = ratio_variance_detail(self, config)
        return value


def kde_eval(model, u):
    """Density estimate at a single point or at the rows of ``u``."""
    u = np.asarray(u, dtype=float)
    if u.ndim <= 1 and u.size == model.dim:
        return float(model.pdf(u.reshape(1, -1))[0])
    return model.pdf(u)


def _log_phi(u):
    return -0.5 * np.sum(u * u, axis=1) - 0.5 * u.shape[1] * LOG_2PI


def ratio_variance_detail(model, config=None):
    """``V[f(U) / phi(U)]`` for ``U`` standard normal, with diagnostics.

    Contributions outside ``[-t, t]^k`` (``t = config.truncation``) are
    dropped.  Returns ``(value, info)``; ``info`` records the mode used,
    the retained mass of the estimate and the mean ratio.
    """
    cfg = config or RatioVarianceConfig()
    mode = cfg.mode
    if mode == "auto":
        mode = "quadrature" if model.dim == 1 else "mc"
    t = cfg.truncation
    if mode == "quadrature":
        if model.dim != 1:
            raise ValueError("quadrature mode is only available in one dimension")
        grid = np.linspace(-cfg.grid_halfwidth, cfg.grid_halfwidth, cfg.grid_points)
        f = model.pdf(grid[:, None])
        keep = np.abs(grid) <= t
        phi = np.exp(-0.5 * grid * grid - 0.5 * LOG_2PI)
        r2 = np.where(keep, f * f / phi, 0.0)
        mean_r = np.trapezoid(np.where(keep, f, 0.0), grid)
        second = np.trapezoid(r2, grid)
        mass = mean_r
    elif mode == "mc":
        rng = substream(cfg.seed, "kde-mc", model.dim)
        u = rng.standard_normal((int(cfg.n_eval), model.dim))
        keep = np.all(np.abs(u) <= t, axis=1)
        r = np.zeros(u.shape[0])
        uk = u[keep]
        r[keep] = model.pdf(uk) * np.exp(-_log_phi(uk))
        mean_r = float(r.mean())
        second = float(np.mean(r * r))
        mass = mean_r
    elif mode == "kde_is":
        rng = substream(cfg.seed, "kde-is", model.dim)
        u = model.sample(int(cfg.n_eval), rng)
        keep = np.all(np.abs(u) <= t, axis=1)
        mass = float(keep.mean())
        uk = u[keep]
        r = np.zeros(u.shape[0])
        r[keep] = model.pdf(uk) * np.exp(-_log_phi(uk))
        second = float(r.mean())
        mean_r = mass
    else:
        raise ValueError(f"unknown ratio-variance mode {cfg.mode!r}")
    value = float(second - mean_r * mean_r)
    if not np.isfinite(value):
        value = float("nan")
    info = {"mode": mode, "retained_mass": float(mass), "mean_ratio": float(mean_r),
            "truncation": t}
    if mode != "quadrature":
        info["n_eval"] = int(cfg.n_eval)
    return max(value, 0.0) if np.isfinite(value) else value, info


def ratio_variance(model, config=None):
    return ratio_variance_detail(model, config)[0]
