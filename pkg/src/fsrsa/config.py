"""Run configuration: YAML file <-> nested dataclasses.

Unknown keys are rejected so typos surface early.  ``to_dict`` followed by
``from_dict`` reproduces the same configuration.
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass

import yaml

from .errors import ConfigError

METHOD_NAMES = ("mc", "sus", "ice")


@dataclass
class ModelConfig:
    """Input model.  Either a benchmark name, a generic preset, or Nataf marginals
    plus a correlation matrix.  ``copula`` (``nataf`` or ``generic``) is optional
    and checked against the other keys when given.
    """

    benchmark: str | None = None
    copula: str | None = None
    preset: str | None = None
    names: list | None = None
    marginals: list | None = None
    correlation: list | None = None
    nataf_nodes: int = 64


@dataclass
class LsfConfig:
    """Limit state.  Either a benchmark name or an external command."""

    benchmark: str | None = None
    command: list | None = None
    workers: int = 1
    batch_size: int = 10_000
    handshake: bool = True


@dataclass
class MethodConfig:
    name: str = "mc"
    n: int = 1_000_000
    n_per_level: int = 10_000
    p0: float = 0.1
    target_cv: float = 1.5
    n_failure_out: int | None = None
    max_levels: int | None = None


@dataclass
class VarianceConfig:
    mode: str = "auto"
    truncation: float = 6.0
    grid_halfwidth: float = 8.0
    grid_points: int = 2001
    n_eval: int = 100_000


@dataclass
class BootstrapConfig:
    B: int = 0
    resample_size: int | None = None


@dataclass
class SensitivityConfig:
    enabled: bool = True
    compute_totals: bool = True
    total_dim_cap: int = 6
    min_samples: int = 500
    total_convention: str = "as_defined"
    variance: VarianceConfig = field(default_factory=VarianceConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)


@dataclass
class OutputConfig:
    directory: str = "results"
    formats: list = field(default_factory=lambda: ["json", "csv"])


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    lsf: LsfConfig = field(default_factory=LsfConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        from . import benchmarks

        if self.method.name not in METHOD_NAMES:
            raise ConfigError(f"method.name must be one of {METHOD_NAMES}, got {self.method.name!r}")
        for block, name in (("model", self.model.benchmark), ("lsf", self.lsf.benchmark)):
            if name is not None and name not in benchmarks.REGISTRY:
                raise ConfigError(f"{block}.benchmark: unknown benchmark {name!r}; available: "
                                  f"{', '.join(sorted(benchmarks.REGISTRY))}")
        if self.model.preset is not None and self.model.preset not in benchmarks.PRESETS:
            raise ConfigError(f"model.preset: unknown preset {self.model.preset!r}; available: "
                              f"{', '.join(sorted(benchmarks.PRESETS))}")
        explicit = self.model.marginals is not None
        copula = self.model.copula
        if copula not in (None, "nataf", "generic"):
            raise ConfigError(f"model.copula must be 'nataf' or 'generic', got {copula!r}")
        if copula == "nataf" and not explicit:
            raise ConfigError("model.copula 'nataf' needs marginals and correlation")
        if copula == "generic" and self.model.preset is None:
            raise ConfigError("model.copula 'generic' needs a preset; available: "
                              f"{', '.join(sorted(benchmarks.PRESETS))}")
        sources = sum([self.model.benchmark is not None, self.model.preset is not None, explicit])
        if sources > 1:
            raise ConfigError("model: give exactly one of benchmark, preset or marginals")
        if sources == 0 and self.lsf.benchmark is None:
            raise ConfigError("model: no input model given (benchmark, preset or marginals)")
        if explicit and self.model.correlation is None:
            raise ConfigError("model.correlation is required with explicit marginals")
        if (self.lsf.benchmark is None) == (self.lsf.command is None):
            raise ConfigError("lsf: give exactly one of benchmark or command")
        if self.lsf.workers < 1:
            raise ConfigError("lsf.workers must be at least 1")
        if self.sensitivity.total_convention not in ("as_defined", "swapped"):
            raise ConfigError("sensitivity.total_convention must be 'as_defined' or 'swapped'")
        bad = set(self.output.formats) - {"json", "csv"}
        if bad:
            raise ConfigError(f"output.formats: unsupported {sorted(bad)}")
        return self

    def to_dict(self):
        return asdict(self)


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {unknown}; allowed: {sorted(known)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = _coerce(value, known[name].default, f"{path}.{name}" if path else name)
    return cls(**kwargs)


def _coerce(value, default, path):
    """Numbers written like ``1e6`` load as strings in YAML 1.1; accept them."""
    if isinstance(value, bool) or isinstance(default, bool):
        return value
    if isinstance(value, str) and (isinstance(default, (int, float)) or default is None):
        try:
            value = float(value)
        except ValueError:
            if default is None:
                return value
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if isinstance(default, int) or (default is None and isinstance(value, float)):
        if isinstance(value, float) and value.is_integer():
            return int(value)
    return value


def from_dict(data):
    return _build(RunConfig, data or {}, "").validate()


def loads(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return from_dict(data)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(config):
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
