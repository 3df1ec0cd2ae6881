"""Failure-sample-based reliability sensitivity analysis for dependent inputs."""

from .errors import FsrsaError
from .marginals import Marginal, from_moments
from .joint_model import (
    GenericHierarchicalModel,
    NatafModel,
    cyclic_orderings,
    fit_nataf_correlation,
)
from .rare_event import (
    LimitState,
    ReliabilityResult,
    improved_cross_entropy,
    monte_carlo,
    subset_simulation,
)
from .kde import KdeModel, silverman_bandwidth
from .sensitivity import (
    SensitivityReport,
    bootstrap_cov,
    fs_indices,
    pick_freeze_reference,
    transform_failure_samples,
)

__version__ = "0.1.0"

__all__ = [
    "FsrsaError",
    "Marginal",
    "from_moments",
    "NatafModel",
    "GenericHierarchicalModel",
    "cyclic_orderings",
    "fit_nataf_correlation",
    "LimitState",
    "ReliabilityResult",
    "monte_carlo",
    "subset_simulation",
    "improved_cross_entropy",
    "KdeModel",
    "silverman_bandwidth",
    "SensitivityReport",
    "transform_failure_samples",
    "fs_indices",
    "bootstrap_cov",
    "pick_freeze_reference",
]
