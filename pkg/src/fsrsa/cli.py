"""Command-line front end.

Subcommands: ``fit``, ``reliability``, ``sensitivity``, ``benchmark`` and
``pipeline``.  A YAML config file is authoritative; flags override it.
"""

import argparse
import platform
import sys
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__, benchmarks, config as config_mod
from .errors import ConfigError, FsrsaError
from .io import (
    ExternalLimitState,
    dumps_json,
    read_json,
    read_samples_csv,
    write_json,
    write_rows_csv,
    write_samples_csv,
)
from .joint_model import NatafModel, nataf_correlation_integral
from .kde import RatioVarianceConfig
from .marginals import from_dict as marginal_from_dict
from .rare_event import (
    LimitState,
    ReliabilityResult,
    improved_cross_entropy,
    monte_carlo,
    subset_simulation,
)
from .sensitivity import (
    SensitivityOptions,
    bootstrap_cov,
    fs_indices,
    transform_failure_samples,
)


# ----------------------------------------------------------------------
# Building blocks
# ----------------------------------------------------------------------


class Problem:
    """Resolved model and limit state for a run."""

    def __init__(self, cfg):
        self._cache = {}
        m = cfg.model
        if m.benchmark is not None:
            self.model = self._benchmark(m.benchmark).model
        elif m.preset is not None:
            self.model = benchmarks.PRESETS[m.preset]()
        elif m.marginals is not None:
            marginals = [marginal_from_dict(s) for s in m.marginals]
            self.model = NatafModel(marginals, np.asarray(m.correlation, dtype=float),
                                    names=m.names, n_nodes=m.nataf_nodes)
        else:
            self.model = self._benchmark(cfg.lsf.benchmark).model
        if cfg.lsf.benchmark is not None:
            self.lsf = self._benchmark(cfg.lsf.benchmark).fresh_lsf()
            self.external = None
        else:
            self.external = ExternalLimitState(cfg.lsf.command, cfg.lsf.workers,
                                               cfg.lsf.batch_size)
            self.lsf = LimitState(self.external, self.external.__name__)
        self.handshake_calls = 0
        if self.external is not None and cfg.lsf.handshake:
            x0 = self.model.inverse(np.zeros((1, self.model.dim)), 0)
            self.external(x0)
            self.handshake_calls = 1

    def _benchmark(self, name):
        if name not in self._cache:
            self._cache[name] = benchmarks.get(name)
        return self._cache[name]


def run_reliability(cfg, problem):
    m = cfg.method
    extra = {} if m.max_levels is None else {"max_levels": m.max_levels}
    if m.name == "mc":
        return monte_carlo(problem.model, problem.lsf, m.n, seed=cfg.seed)
    if m.name == "sus":
        return subset_simulation(problem.model, problem.lsf, m.n_per_level, m.p0, seed=cfg.seed,
                                 n_failure_out=m.n_failure_out, **extra)
    return improved_cross_entropy(problem.model, problem.lsf, m.n_per_level, m.target_cv,
                                  seed=cfg.seed, n_failure_out=m.n_failure_out, **extra)


def sensitivity_options(cfg):
    s = cfg.sensitivity
    v = s.variance
    return SensitivityOptions(
        compute_totals=s.compute_totals,
        total_dim_cap=s.total_dim_cap,
        min_samples=s.min_samples,
        total_convention=s.total_convention,
        variance=RatioVarianceConfig(mode=v.mode, truncation=v.truncation,
                                     grid_halfwidth=v.grid_halfwidth,
                                     grid_points=v.grid_points, n_eval=v.n_eval, seed=cfg.seed),
    )


def run_sensitivity(cfg, fsu, pf_hat):
    opts = sensitivity_options(cfg)
    report = fs_indices(fsu, pf_hat, opts)
    b = cfg.sensitivity.bootstrap
    if b.B >= 2:
        report.bootstrap = bootstrap_cov(fsu, pf_hat, b.B, b.resample_size, seed=cfg.seed,
                                         options=opts)
    return report


def _versions():
    out = {"fsrsa": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "PyYAML"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _settings(cfg):
    """Method choices in force for this run, recorded in the manifest."""
    return {
        "orderings": "cyclic left shifts, 0-based; ordering i = (i, i+1, ..., i-1)",
        "sampling_space": "standard-normal space of ordering 0",
        "full_effect_coordinate": "first coordinate of ordering i",
        "independent_effect_coordinate": "last coordinate of ordering i+1",
        "total_convention": cfg.sensitivity.total_convention,
        "total_dim_cap": cfg.sensitivity.total_dim_cap,
        "kernel": "gaussian, diagonal bandwidth",
        "bandwidth": "silverman (4/(k+2))^(1/(k+4)) n^(-1/(k+4)) sd (ddof=1)",
        "variance_evaluation": dict(vars(cfg.sensitivity.variance)),
        "clipping": "to [0, 1], per index and per bootstrap resample",
        "sus_kernel": "adaptive conditional sampling, target acceptance 0.44",
        "ice_family": "single Gaussian with full covariance",
        "rng": "Philox substreams keyed by (seed, stage, index)",
        "nataf_quadrature_nodes": cfg.model.nataf_nodes,
    }


def run_pipeline(cfg, out_dir=None):
    """Reliability run, transforms, indices and optional bootstrap; writes all artifacts."""
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    problem = Problem(cfg)
    result = run_reliability(cfg, problem)
    files = {}
    write_samples_csv(out / "failure_samples.csv", result.failure_samples)
    write_json(out / "failure_samples.json", _sidecar(result, problem.model))
    files["failure_samples"] = "failure_samples.csv"
    files["sidecar"] = "failure_samples.json"
    report = None
    if cfg.sensitivity.enabled:
        fsu = transform_failure_samples(result, problem.model)
        report = run_sensitivity(cfg, fsu, result.pf_hat)
        files.update(_write_report(out, report, cfg.output.formats))
    manifest = {
        "versions": _versions(),
        "seed": cfg.seed,
        "n_calls": result.n_calls,
        "handshake_calls": problem.handshake_calls,
        "pf_hat": result.pf_hat,
        "method": result.method,
        "config": cfg.to_dict(),
        "settings": _settings(cfg),
        "files": files,
    }
    write_json(out / "manifest.json", manifest)
    return {"result": result, "report": report, "manifest": manifest, "directory": str(out)}


def _sidecar(result, model):
    side = result.sidecar()
    side["variables"] = list(model.names)
    return side


def _write_report(out, report, formats):
    files = {}
    if "json" in formats:
        write_json(out / "report.json", report.to_dict())
        files["report_json"] = "report.json"
    if "csv" in formats:
        write_rows_csv(out / "report.csv", report.rows())
        files["report_csv"] = "report.csv"
    return files


def load_failure_samples(csv_path, sidecar_path=None):
    """Failure samples and their sidecar as a :class:`ReliabilityResult`."""
    csv_path = Path(csv_path)
    side = read_json(sidecar_path or csv_path.with_suffix(".json"))
    x = read_samples_csv(csv_path)
    return ReliabilityResult(
        pf_hat=float(side["pf_hat"]),
        failure_samples=x,
        n_calls=int(side.get("n_calls", 0)),
        method=side.get("method", "unknown"),
        levels=side.get("levels", []),
        dependent_samples=bool(side.get("dependent_samples", False)),
        cov_estimate=float("nan") if side.get("cov_estimate") is None else side["cov_estimate"],
        seed=side.get("seed"),
    )


def fit_report(model):
    """Fitted copula correlation and the correlations it reproduces."""
    if not isinstance(model, NatafModel):
        raise ConfigError("fit needs a Nataf model (marginals plus correlation)")
    d = model.dim
    reproduced = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            reproduced[i, j] = reproduced[j, i] = nataf_correlation_integral(
                model.marginals[i], model.marginals[j], model.sigma_z[i, j])
    return {
        "variables": list(model.names),
        "marginals": [m.to_dict() for m in model.marginals],
        "sigma_x": model.sigma_x,
        "sigma_z": model.sigma_z,
        "reproduced_sigma_x": reproduced,
        "max_abs_residual": float(np.max(np.abs(reproduced - model.sigma_x))),
    }


# ----------------------------------------------------------------------
# Argument handling
# ----------------------------------------------------------------------


def _common(p, method=True):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--benchmark", help="built-in problem for both model and limit state")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    if method:
        p.add_argument("--method", choices=config_mod.METHOD_NAMES)
        p.add_argument("--n", type=float, help="Monte Carlo sample size")
        p.add_argument("--n-per-level", type=float)
        p.add_argument("--p0", type=float)
        p.add_argument("--target-cv", type=float)
        p.add_argument("--n-failure-out", type=float)
        p.add_argument("--workers", type=int, help="concurrent external evaluator processes")


def _sens_flags(p):
    p.add_argument("--bootstrap", type=int, metavar="B", help="bootstrap resamples (0 = off)")
    p.add_argument("--resample-size", type=int)
    p.add_argument("--no-totals", action="store_true", help="skip total indices")
    p.add_argument("--variance-mode", choices=("auto", "quadrature", "mc", "kde_is"))
    p.add_argument("--n-eval", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fsrsa",
        description="Reliability sensitivity indices for dependent inputs from failure samples.")
    parser.add_argument("--version", action="version", version=f"fsrsa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the Gaussian-copula correlation of a Nataf model")
    _common(p, method=False)

    p = sub.add_parser("reliability", help="estimate the failure probability and keep failure samples")
    _common(p)
    p.add_argument("--failure-out", help="CSV path for the failure samples (sidecar: same stem, .json)")

    p = sub.add_parser("sensitivity", help="sensitivity indices from failure samples")
    _common(p)
    _sens_flags(p)
    p.add_argument("--failure-samples", help="failure-sample CSV written by 'reliability'")
    p.add_argument("--sidecar", help="JSON sidecar (default: CSV path with .json)")

    p = sub.add_parser("benchmark", help="list or run built-in problems")
    p.add_argument("action", choices=("list", "run"))
    p.add_argument("name", nargs="?")
    _common(p)
    _sens_flags(p)

    p = sub.add_parser("pipeline", help="reliability, transforms, indices and bootstrap in one run")
    _common(p)
    _sens_flags(p)
    return parser


def _set(d, path, value):
    if value is None:
        return
    *head, last = path
    for k in head:
        if d.get(k) is None:
            d[k] = {}
        d = d[k]
    d[last] = value


def config_from_args(args):
    data = {}
    if getattr(args, "config", None):
        import yaml

        with open(args.config, encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"invalid YAML in {args.config}: {exc}") from None
    name = getattr(args, "benchmark", None) or (
        args.name if getattr(args, "action", None) == "run" else None)
    if name is not None:
        data["model"] = {"benchmark": name}
        data.setdefault("lsf", {})
        data["lsf"] = {k: v for k, v in data["lsf"].items() if k != "command"}
        data["lsf"]["benchmark"] = name
    _set(data, ("seed",), args.seed)
    _set(data, ("output", "directory"), args.out)
    for flag, key in (("method", "name"), ("n", "n"), ("n_per_level", "n_per_level"),
                      ("p0", "p0"), ("target_cv", "target_cv"),
                      ("n_failure_out", "n_failure_out")):
        _set(data, ("method", key), getattr(args, flag, None))
    _set(data, ("lsf", "workers"), getattr(args, "workers", None))
    _set(data, ("sensitivity", "bootstrap", "B"), getattr(args, "bootstrap", None))
    _set(data, ("sensitivity", "bootstrap", "resample_size"), getattr(args, "resample_size", None))
    if getattr(args, "no_totals", False):
        _set(data, ("sensitivity", "compute_totals"), False)
    _set(data, ("sensitivity", "variance", "mode"), getattr(args, "variance_mode", None))
    _set(data, ("sensitivity", "variance", "n_eval"), getattr(args, "n_eval", None))
    return config_mod.from_dict(data)


def _cmd_fit(args):
    cfg = config_from_args(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = cfg.model
        if m.marginals is not None:
            model = NatafModel([marginal_from_dict(s) for s in m.marginals],
                               np.asarray(m.correlation, dtype=float), names=m.names,
                               n_nodes=m.nataf_nodes)
        else:
            model = benchmarks.get(m.benchmark or cfg.lsf.benchmark).model
    rep = fit_report(model)
    rep["repaired"] = any("nearest correlation" in str(w.message) for w in caught)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "fit.json", rep)
    sys.stdout.write(dumps_json(rep))
    return 0


def _cmd_reliability(args):
    cfg = config_from_args(args)
    problem = Problem(cfg)
    result = run_reliability(cfg, problem)
    side = _sidecar(result, problem.model)
    target = args.failure_out or str(Path(cfg.output.directory) / "failure_samples.csv")
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_samples_csv(target, result.failure_samples)
    write_json(target.with_suffix(".json"), side)
    sys.stdout.write(dumps_json({k: side[k] for k in
                                 ("pf_hat", "n_calls", "method", "dependent_samples", "n_failure")}))
    return 0


def _cmd_sensitivity(args):
    cfg = config_from_args(args)
    if not args.failure_samples:
        summary = run_pipeline(cfg)
        sys.stdout.write(dumps_json({"directory": summary["directory"],
                                     "files": summary["manifest"]["files"]}))
        return 0
    problem = Problem(cfg)
    result = load_failure_samples(args.failure_samples, args.sidecar)
    fsu = transform_failure_samples(result, problem.model)
    report = run_sensitivity(cfg, fsu, result.pf_hat)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    files = _write_report(out, report, cfg.output.formats)
    write_json(out / "manifest.json", {
        "versions": _versions(), "seed": cfg.seed, "n_calls": result.n_calls,
        "pf_hat": result.pf_hat, "method": result.method, "config": cfg.to_dict(),
        "settings": _settings(cfg), "files": files,
        "input": {"failure_samples": str(args.failure_samples)},
    })
    sys.stdout.write(dumps_json({"directory": str(out), "files": files}))
    return 0


def _cmd_benchmark(args):
    if args.action == "list":
        for name in sorted(benchmarks.REGISTRY):
            sys.stdout.write(name + "\n")
        return 0
    if not args.name:
        raise ConfigError("benchmark run needs a problem name; available: "
                          + ", ".join(sorted(benchmarks.REGISTRY)))
    if args.name not in benchmarks.REGISTRY:
        raise ConfigError(f"unknown benchmark {args.name!r}; available: "
                          + ", ".join(sorted(benchmarks.REGISTRY)))
    return _cmd_pipeline(args)


def _cmd_pipeline(args):
    cfg = config_from_args(args)
    summary = run_pipeline(cfg)
    man = summary["manifest"]
    sys.stdout.write(dumps_json({"directory": summary["directory"], "pf_hat": man["pf_hat"],
                                 "n_calls": man["n_calls"], "files": man["files"]}))
    return 0


COMMANDS = {
    "fit": _cmd_fit,
    "reliability": _cmd_reliability,
    "sensitivity": _cmd_sensitivity,
    "benchmark": _cmd_benchmark,
    "pipeline": _cmd_pipeline,
}


def _error_payload(exc):
    err = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("row", "coordinate"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    return {"error": err}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (FsrsaError, ValueError, KeyError, OSError) as exc:
        payload = _error_payload(exc)
        sys.stderr.write(dumps_json(payload))
        out = getattr(args, "out", None)
        if out:
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                write_json(Path(out) / "error.json", payload)
            except OSError:
                pass
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
