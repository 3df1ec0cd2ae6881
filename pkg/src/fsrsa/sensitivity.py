"""Reliability sensitivity indices for dependent inputs from failure samples.

For every variable ``X_i`` four indices of the failure indicator are
estimated: the full first-order index ``S``, its independent counterpart
``S_ind``, and the total indices ``ST`` and ``ST_ind``.  The failure
samples are mapped to standard-normal space once per cyclic ordering; a
variable's full effect sits in coordinate 0 of its own ordering and its
independent effect in the last coordinate of the next ordering.  Every
index is then ``P/(1-P)`` times the variance of a kernel-density ratio.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BandwidthError, EstimationError
from .kde import KdeModel, RatioVarianceConfig, ratio_variance_detail
from .rare_event import ReliabilityResult
from .rng import substream

KINDS = ("S", "S_ind", "ST", "ST_ind")


@dataclass(frozen=True)
class FailureSampleSetU:
    """Failure samples mapped through each cyclic transform.

    ``u[i]`` holds ``T^i(x)`` row by row; row ``j`` of every entry derives
    from row ``j`` of ``x``.
    """

    u: tuple
    orderings: tuple
    x: np.ndarray
    names: tuple
    dependent_samples: bool = False
    source: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    def take(self, rows):
        rows = np.asarray(rows)
        return replace(self, u=tuple(ui[rows] for ui in self.u), x=self.x[rows])


def transform_failure_samples(result, model):
    """Map failure samples (a :class:`ReliabilityResult` or an array) to all orderings."""
    if isinstance(result, ReliabilityResult):
        x = result.failure_samples
        dependent = result.dependent_samples
        source = {"method": result.method, "pf_hat": result.pf_hat,
                  "n_calls": result.n_calls, "seed": result.seed}
    else:
        x = np.asarray(result, dtype=float)
        dependent = False
        source = {}
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise ValueError(f"samples have {x.shape[1]} columns, model has dimension {model.dim}")
    orderings = tuple(model.orderings)
    u = tuple(np.asarray(model.forward(x, o)) for o in orderings)
    return FailureSampleSetU(u=u, orderings=orderings, x=x, names=tuple(model.names),
                             dependent_samples=dependent, source=source)


def index_columns(d, i, kind, total_convention="as_defined"):
    """``(ordering, columns)`` whose density estimate gives index ``kind`` of variable ``i``.

    ``total_convention="swapped"`` exchanges the orderings used by the two
    total indices.
    """
    nxt = (i + 1) % d
    rest_own = tuple(range(1, d))       # U^i without X_i (which sits first)
    rest_next = tuple(range(d - 1))     # U^{i+1} without X_i (which sits last)
    table = {
        "S": (i, (0,)),
        "S_ind": (nxt, (d - 1,)),
        "ST": (nxt, rest_next),
        "ST_ind": (i, rest_own),
    }
    if total_convention == "swapped":
        table["ST"], table["ST_ind"] = table["ST_ind"], table["ST"]
    elif total_convention != "as_defined":
        raise ValueError(f"unknown total_convention {total_convention!r}")
    return table[kind]


@dataclass(frozen=True)
class SensitivityOptions:
    compute_totals: bool = True
    total_dim_cap: int = 6
    min_samples: int = 500
    variance: RatioVarianceConfig = field(default_factory=RatioVarianceConfig)
    total_convention: str = "as_defined"


@dataclass
class SensitivityReport:
    """Indices per variable.

    ``records[name][kind]`` is a dict with ``value`` (clipped to [0, 1] or
    ``None``), ``raw``, ``clipped`` and ``error``.
    """

    names: tuple
    records: dict
    pf_hat: float
    metadata: dict = field(default_factory=dict)
    bootstrap: dict | None = None

    def value(self, kind, var):
        name = self.names[var] if isinstance(var, (int, np.integer)) else var
        return self.records[name][kind]["value"]

    def array(self, kind):
        return np.array([np.nan if (v := self.value(kind, n)) is None else v for n in self.names])

    def raw_array(self, kind):
        return np.array([np.nan if (v := self.records[n][kind]["raw"]) is None else v
                         for n in self.names])

    def to_dict(self):
        return {
            "pf_hat": self.pf_hat,
            "variables": list(self.names),
            "indices": {n: {k: dict(self.records[n][k]) for k in KINDS} for n in self.names},
            "metadata": self.metadata,
            "bootstrap": self.bootstrap,
        }

    def rows(self):
        """One row per variable and index type, for tabular output."""
        out = []
        for n in self.names:
            for k in KINDS:
                rec = self.records[n][k]
                row = {"variable": n, "index": k, "value": rec["value"], "raw": rec["raw"],
                       "clipped": rec["clipped"], "error": rec["error"] or ""}
                if self.bootstrap:
                    b = self.bootstrap["indices"][n][k]
                    row.update(boot_mean=b["mean"], boot_std=b["std"], boot_cov=b["cov"])
                out.append(row)
        return out


def _record(raw, error=None):
    if raw is None or not np.isfinite(raw):
        return {"value": None, "raw": None if raw is None else float(raw), "clipped": False,
                "error": error or "non-finite estimate"}
    val = min(max(raw, 0.0), 1.0)
    return {"value": float(val), "raw": float(raw), "clipped": bool(val != raw), "error": error}


def _ratio_factor(pf_hat):
    return pf_hat / (1.0 - pf_hat)


def fs_indices(fsu, pf_hat, options=None):
    """Failure-sample estimates of ``S``, ``S_ind``, ``ST`` and ``ST_ind`` for all variables."""
    opt = options or SensitivityOptions()
    if not 0.0 < pf_hat < 1.0:
        raise ValueError(f"pf_hat must lie in (0, 1), got {pf_hat}")
    if fsu.n < opt.min_samples:
        raise EstimationError(
            f"{fsu.n} failure samples is below the minimum of {opt.min_samples}")
    d = fsu.dim
    c = _ratio_factor(pf_hat)
    cache = {}
    bandwidths = {}
    eval_info = {}

    def variance(ordering, cols):
        key = (ordering, cols)
        if key not in cache:
            try:
                kde = KdeModel(fsu.u[ordering][:, cols])
                v, info = ratio_variance_detail(kde, opt.variance)
                bandwidths[f"{ordering}:{','.join(map(str, cols))}"] = kde.bandwidth.tolist()
                eval_info[f"{ordering}:{','.join(map(str, cols))}"] = info
                cache[key] = (v, None)
            except BandwidthError as exc:
                cache[key] = (None, str(exc))
        return cache[key]

    totals = opt.compute_totals and d - 1 <= opt.total_dim_cap
    records = {}
    for i, name in enumerate(fsu.names):
        rec = {}
        for kind in KINDS:
            if kind.startswith("ST"):
                if d == 1:
                    rec[kind] = _record(1.0)
                    continue
                if not totals:
                    why = ("not computed: dimensionality" if opt.compute_totals
                           else "not computed: disabled")
                    rec[kind] = {"value": None, "raw": None, "clipped": False, "error": why}
                    continue
            ordering, cols = index_columns(d, i, kind, opt.total_convention)
            v, err = variance(ordering, cols)
            if err is not None:
                rec[kind] = _record(None, err)
                continue
            raw = 1.0 - c * v if kind.startswith("ST") else c * v
            rec[kind] = _record(raw)
        records[name] = rec
    meta = {
        "estimator": "failure_samples",
        "n_failure": fsu.n,
        "bandwidths": bandwidths,
        "variance_evaluation": eval_info,
        "totals_computed": bool(totals or d == 1),
        "total_convention": opt.total_convention,
        "dependent_samples": fsu.dependent_samples,
        "source": dict(fsu.source),
    }
    return SensitivityReport(names=fsu.names, records=records, pf_hat=float(pf_hat), metadata=meta)


def _summarise(samples):
    """Mean, std and c.o.v. over resamples, ignoring missing values."""
    a = np.array([np.nan if s is None else s for s in samples], dtype=float)
    a = a[np.isfinite(a)]
    if a.size == 0:
        return {"mean": None, "std": None, "cov": None, "n": 0}
    m = float(a.mean())
    s = float(a.std(ddof=1)) if a.size > 1 else 0.0
    cov = 0.0 if s == 0.0 else (float(s / abs(m)) if m != 0 else None)
    return {"mean": m, "std": s, "cov": cov, "n": int(a.size)}


def bootstrap_cov(fsu, pf_hat, B=100, resample_size=None, seed=0, options=None):
    """Bootstrap mean, standard deviation and c.o.v. of every index.

    Rows are resampled with replacement, consistently across orderings,
    from the whole pool of failure samples; indices are clipped in each
    resample before aggregation.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    m = fsu.n if resample_size is None else int(resample_size)
    rng = substream(seed, "bootstrap")
    draws = {n: {k: [] for k in KINDS} for n in fsu.names}
    for _ in range(B):
        rows = rng.integers(0, fsu.n, size=m)
        rep = fs_indices(fsu.take(rows), pf_hat, options)
        for n in fsu.names:
            for k in KINDS:
                draws[n][k].append(rep.records[n][k]["value"])
    return {
        "B": int(B),
        "resample_size": m,
        "seed": seed,
        "pool": fsu.n,
        "dependent_samples": fsu.dependent_samples,
        "indices": {n: {k: _summarise(draws[n][k]) for k in KINDS} for n in fsu.names},
    }


# ----------------------------------------------------------------------
# Pick-freeze reference
# ----------------------------------------------------------------------


def _jansen(fa, fb, fab):
    """First-order and total Jansen estimates for every column of ``fab``."""
    var = np.var(np.concatenate([fa, fb]))
    if not var > 0:
        return None
    first = (var - 0.5 * np.mean((fb[:, None] - fab) ** 2, axis=0)) / var
    total = 0.5 * np.mean((fa[:, None] - fab) ** 2, axis=0) / var
    return first, total


def pick_freeze_reference(model, lsf, n, seed=0, indicator=True, B=100):
    """Pick-freeze (Jansen) estimates of all four index types.

    Each of the ``d`` orderings gets its own sample matrices ``A`` and
    ``B`` of ``n/2`` rows plus ``d`` column-swapped copies, so the total
    number of limit-state calls is ``n d (d + 2) / 2``.  The model output
    is the failure indicator; with ``indicator=False`` it is ``g`` itself.
    Standard errors come from a bootstrap over rows of the stored outputs.
    """
    n = int(n)
    if n < 100:
        raise ValueError("n must be at least 100")
    d = model.dim
    m = n // 2
    calls0 = lsf.n_calls
    per_ordering = []
    for i, ordering in enumerate(model.orderings):
        rng = substream(seed, "pick-freeze", i)
        a = rng.standard_normal((m, d))
        b = rng.standard_normal((m, d))
        ab = np.repeat(a[None], d, axis=0)
        for j in range(d):
            ab[j, :, j] = b[:, j]
        x = model.inverse(np.concatenate([a, b, ab.reshape(-1, d)]), ordering)
        y = lsf(x)
        if indicator:
            y = (y <= 0).astype(float)
            if not y.any():
                raise EstimationError(
                    f"no failures among the pick-freeze samples of ordering {i}; increase n")
        per_ordering.append((y[:m], y[m:2 * m], y[2 * m:].reshape(d, m).T))
    n_calls = lsf.n_calls - calls0

    def estimate(rows):
        est = []
        for fa, fb, fab in per_ordering:
            r = _jansen(fa[rows], fb[rows], fab[rows])
            if r is None:
                raise EstimationError("pick-freeze output has zero variance")
            est.append(r)
        out = {}
        for i in range(d):
            nxt = (i + 1) % d
            out[i] = {
                "S": est[i][0][0],
                "S_ind": est[nxt][0][d - 1],
                "ST": est[nxt][1][d - 1],
                "ST_ind": est[i][1][0],
            }
        return out

    full = estimate(np.arange(m))
    names = tuple(model.names)
    records = {names[i]: {k: _record(float(full[i][k])) for k in KINDS} for i in range(d)}
    rng = substream(seed, "pick-freeze", "bootstrap")
    draws = {nm: {k: [] for k in KINDS} for nm in names}
    for _ in range(int(B)):
        est = estimate(rng.integers(0, m, size=m))
        for i, nm in enumerate(names):
            for k in KINDS:
                draws[nm][k].append(min(max(float(est[i][k]), 0.0), 1.0))
    pf = float(np.mean([np.mean(np.concatenate([fa, fb])) for fa, fb, _ in per_ordering]))
    report = SensitivityReport(
        names=names, records=records, pf_hat=pf,
        metadata={"estimator": "pick_freeze_jansen", "n": n, "rows_per_matrix": m,
                  "n_calls": int(n_calls), "output": "indicator" if indicator else "g",
                  "seed": seed},
        bootstrap={"B": int(B), "resample_size": m, "seed": seed,
                   "indices": {nm: {k: _summarise(draws[nm][k]) for k in KINDS}
                               for nm in names}} if B >= 2 else None,
    )
    return report


__all__ = [
    "FailureSampleSetU", "SensitivityOptions", "SensitivityReport",
    "bootstrap_cov", "fs_indices", "index_columns", "pick_freeze_reference",
    "transform_failure_samples",
]
