"""Built-in benchmark problems."""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .joint_model import NatafModel, load_model_abh as _load_model_abh
from .marginals import Family, Marginal, from_moments
from .rare_event import LimitState


@dataclass
class BenchmarkProblem:
    name: str
    model: object
    lsf: LimitState
    reference_pf: tuple | None = None  # (value, (lo, hi)) or (value, None)
    reference_assertions: dict = field(default_factory=dict)
    regression: dict = field(default_factory=dict)  # label -> (x, g(x))
    description: str = ""

    @property
    def dim(self):
        return self.model.dim

    def fresh_lsf(self):
        """A new :class:`LimitState` with a zeroed call counter."""
        return LimitState(self.lsf.fn, self.lsf.name)

    def with_identity_correlation(self):
        """Same marginals and limit state, independent inputs (Nataf models only)."""
        if not isinstance(self.model, NatafModel):
            raise TypeError("identity-correlation variant needs a Nataf model")
        model = NatafModel(self.model.marginals, np.eye(self.dim), self.model.names)
        return BenchmarkProblem(self.name + "-independent", model, self.fresh_lsf(),
                                description=self.description + " (independent inputs)")


# ----------------------------------------------------------------------


def _nonlinear_g(x):
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    return (x1**3 + 10 * x2**2 + 0.1 * np.sin(np.pi * x2)
            + 10 * x3**2 + 40 * np.sin(np.pi * x3) + 38)


NONLINEAR_CORRELATION = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.8], [0.3, 0.8, 1.0]])


def nonlinear_test_function():
    marginals = [Marginal(Family.NORMAL, (0.0, 1.0))] * 3
    model = NatafModel(marginals, NONLINEAR_CORRELATION, names=("x1", "x2", "x3"))
    return BenchmarkProblem(
        name="nonlinear",
        model=model,
        lsf=LimitState(_nonlinear_g, "nonlinear"),
        reference_pf=(5.34e-3, (5.28e-3, 5.40e-3)),
        reference_assertions={"failure_corr_x1_x2": -0.66},
        regression={"origin": ([0.0, 0.0, 0.0], 38.0)},
        description="cubic/sinusoidal limit state with correlated Gaussian inputs",
    )


# ----------------------------------------------------------------------

S1, S2, AREA, THETA = 0.03, 0.015, 0.190, 2.0
# N/mm^2 -> kN/m^2
YIELD_UNIT = 1e3

SHORT_COLUMN_CORRELATION = np.array([
    [1.0, 0.5, 0.3, 0.0],
    [0.5, 1.0, 0.3, 0.0],
    [0.3, 0.3, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])


def _short_column_g(x):
    m1, m2, p, y = x[:, 0], x[:, 1], x[:, 2], x[:, 3] * YIELD_UNIT
    return 1.0 - m1 / (S1 * y) - m2 / (S2 * y) - (p / (AREA * y)) ** THETA


def short_column():
    """Short column under biaxial bending and axial load.

    Moments in kNm, axial force in kN, yield strength declared in N/mm^2 and
    converted to kN/m^2 inside the limit state.  The (P, P) correlation entry
    is 1.0.
    """
    marginals = [
        from_moments(Family.NORMAL, 250.0, 0.3),
        from_moments(Family.NORMAL, 125.0, 0.3),
        from_moments(Family.GUMBEL, 2500.0, 0.2),
        from_moments(Family.WEIBULL, 40.0, 0.1),
    ]
    model = NatafModel(marginals, SHORT_COLUMN_CORRELATION, names=("M1", "M2", "P", "Y"))
    mean = [250.0, 125.0, 2500.0, 40.0]
    return BenchmarkProblem(
        name="short_column",
        model=model,
        lsf=LimitState(_short_column_g, "short_column"),
        reference_pf=(9.29e-3, (9.21e-3, 9.36e-3)),
        regression={"mean": (mean, 0.4751269621421975)},
        description="short column subjected to biaxial bending",
    )


# ----------------------------------------------------------------------


def linear_first_order_oracle(beta, w_i):
    """First-order index of ``U_i`` for ``g = beta - w^T u``.

    Variance of ``P(F | U_i)`` over ``U_i ~ N(0, 1)`` by adaptive quadrature,
    normalised by ``pf (1 - pf)``.
    """
    pf = special.ndtr(-beta)
    if abs(w_i) >= 1.0 - 1e-15:
        return 1.0
    if w_i == 0.0:
        return 0.0
    s = np.sqrt(1.0 - w_i * w_i)
    phi = lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)  # noqa: E731
    second, _ = integrate.quad(
        lambda x: special.ndtr((w_i * x - beta) / s) ** 2 * phi(x), -np.inf, np.inf,
        epsabs=1e-16, epsrel=1e-12, limit=200)
    return float((second - pf * pf) / (pf * (1 - pf)))


def linear_gaussian_oracle(beta, d, weights=None):
    """``g = beta - w^T u`` on ``d`` independent standard normals.

    ``weights`` default to equal weights; they must have unit Euclidean norm.
    """
    w = np.full(d, 1.0 / np.sqrt(d)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (d,):
        raise ValueError(f"weights must have length {d}")
    norm = np.linalg.norm(w)
    if norm == 0:
        raise ValueError("weight vector must be nonzero")
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"weights must have unit norm, got {norm}")
    model = NatafModel([Marginal(Family.STANDARD_NORMAL)] * d, np.eye(d),
                       names=tuple(f"u{k + 1}" for k in range(d)))

    def g(x):
        return beta - x @ w

    g.__name__ = "linear"
    pf = float(special.ndtr(-beta))
    first = [linear_first_order_oracle(beta, wi) for wi in w]
    return BenchmarkProblem(
        name=f"linear_gaussian_b{beta:g}_d{d}",
        model=model,
        lsf=LimitState(g, "linear"),
        reference_pf=(pf, None),
        reference_assertions={"first_order": first, "weights": w.tolist(), "beta": beta},
        regression={"origin": ([0.0] * d, float(beta))},
        description="linear limit state in independent standard-normal space",
    )


def conditional_pf_linear(beta, w_i, x):
    """``P(F | U_i = x)`` for the linear oracle."""
    if abs(w_i) >= 1.0:
        return (w_i * np.asarray(x) >= beta).astype(float)
    return special.ndtr((w_i * np.asarray(x) - beta) / np.sqrt(1.0 - w_i * w_i))


# ----------------------------------------------------------------------

LOAD_A = (2274.97, 0.2)
LOAD_B = (225.02, 0.2)
# Capacity with P(H > H_CAP) = 1e-3, from the quadrature marginal F(h) and
# checked by a 1e7-sample pilot Monte Carlo (scripts/calibrate_load_capacity.py).
H_CAP = 4583.232151451133


def load_model_abh(quad=None):
    """Hierarchical (A, B, H) wind-load model with a synthetic capacity limit state.

    ``A``, ``B`` lognormal; ``H | A, B`` Gumbel with location ``A`` and scale
    ``B``.  The limit state ``g = H_CAP - H`` involves ``H`` only, so ``A``
    and ``B`` act purely through the probabilistic model.
    """
    a = from_moments(Family.LOGNORMAL, *LOAD_A)
    b = from_moments(Family.LOGNORMAL, *LOAD_B)
    model = _load_model_abh(a, b, quad)

    def g(x):
        return H_CAP - x[:, 2]

    g.__name__ = "load_capacity"
    return BenchmarkProblem(
        name="load_model_abh",
        model=model,
        lsf=LimitState(g, "load_capacity"),
        reference_pf=(1e-3, None),
        reference_assertions={"S_ind_zero": ["A", "B"]},
        regression={"origin_h": ([LOAD_A[0], LOAD_B[0], 0.0], H_CAP)},
        description="lognormal hyper-parameters A, B and Gumbel load H | A, B",
    )


REGISTRY = {
    "nonlinear": nonlinear_test_function,
    "short_column": short_column,
    "load_model_abh": load_model_abh,
    "linear_gaussian": lambda beta=3.0, d=2, weights=None: linear_gaussian_oracle(beta, d, weights),
}


PRESETS = {
    "load_model_abh": lambda: load_model_abh().model,
}


def get(name, **kwargs):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(sorted(REGISTRY))}") from None
    return factory(**kwargs)
