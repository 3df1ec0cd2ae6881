import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from fsrsa.errors import FitError, ModelError, TransformError
from fsrsa.joint_model import (
    Conditional,
    GenericHierarchicalModel,
    NatafModel,
    cyclic_orderings,
    fit_nataf_correlation,
    load_model_abh,
    nearest_correlation,
)
from fsrsa.marginals import Family, Marginal, from_moments

STD = Marginal(Family.STANDARD_NORMAL)


def gaussian_model(rho):
    return NatafModel([STD, STD], np.array([[1.0, rho], [rho, 1.0]]))


# -- orderings -------------------------------------------------------------


def test_cyclic_orderings_d3():
    # 0-based version of (1,2,3), (2,3,1), (3,1,2)
    assert cyclic_orderings(3) == [(0, 1, 2), (1, 2, 0), (2, 0, 1)]


def test_cyclic_orderings_d1():
    assert cyclic_orderings(1) == [(0,)]


@given(d=st.integers(1, 12))
def test_each_ordering_is_left_rotation_of_previous(d):
    orders = cyclic_orderings(d)
    assert len(orders) == d
    for prev, cur in zip(orders, orders[1:]):
        assert cur == prev[1:] + prev[:1]


def test_cyclic_orderings_rejects_zero():
    with pytest.raises(ValueError):
        cyclic_orderings(0)


# -- Nataf fitting ------------------------------------------------------------


@given(r=st.floats(-0.95, 0.95))
def test_gaussian_marginals_keep_correlation(r):
    s = np.array([[1.0, r], [r, 1.0]])
    assert np.array_equal(fit_nataf_correlation([STD, Marginal(Family.NORMAL, (3.0, 2.0))], s), s)


def test_zero_correlation_maps_to_zero():
    ms = [from_moments(Family.LOGNORMAL, 1.0, 0.8), from_moments(Family.GUMBEL, 10.0, 0.3)]
    assert fit_nataf_correlation(ms, np.eye(2))[0, 1] == 0.0


def _hermite_oracle(mi, mj, rho, n=96):
    """Independent evaluation of the copula correlation integral (physicists' nodes)."""
    t, w = np.polynomial.hermite.hermgauss(n)
    z1 = np.sqrt(2.0) * t
    zi, zj = np.meshgrid(z1, z1, indexing="ij")
    ww = np.outer(w, w) / np.pi
    xi = mi.from_normal(zi)
    xj = mj.from_normal(rho * zi + np.sqrt(1 - rho * rho) * zj)
    cov = np.sum(ww * (xi - mi.mean) * (xj - mj.mean))
    return cov / (mi.std * mj.std)


@pytest.mark.parametrize("pair,target", [
    ((from_moments(Family.GUMBEL, 2500.0, 0.2), from_moments(Family.WEIBULL, 40.0, 0.1)), 0.4),
    ((from_moments(Family.WEIBULL, 5.0, 0.5), from_moments(Family.NORMAL, 1.0, 0.2)), -0.6),
    ((from_moments(Family.GUMBEL, 1.0, 0.3), from_moments(Family.GUMBEL, 2.0, 0.5)), 0.7),
])
def test_fitted_copula_reproduces_target_by_independent_quadrature(pair, target):
    s = np.array([[1.0, target], [target, 1.0]])
    rz = fit_nataf_correlation(list(pair), s)
    assert rz[0, 1] == rz[1, 0]
    assert _hermite_oracle(pair[0], pair[1], rz[0, 1]) == pytest.approx(target, abs=1e-6)


def test_unattainable_correlation_raises_fit_error():
    ms = [from_moments(Family.LOGNORMAL, 1.0, 2.0), from_moments(Family.LOGNORMAL, 1.0, 2.0)]
    with pytest.raises(FitError):
        fit_nataf_correlation(ms, np.array([[1.0, -0.9], [-0.9, 1.0]]))


INDEFINITE = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])


def test_indefinite_fit_is_repaired_with_warning():
    with pytest.warns(RuntimeWarning):
        rz = fit_nataf_correlation([STD] * 3, INDEFINITE)
    assert np.all(np.linalg.eigvalsh(rz) > 0)
    assert np.allclose(np.diag(rz), 1.0)


def test_indefinite_fit_without_repair_raises():
    with pytest.raises(ModelError):
        fit_nataf_correlation([STD] * 3, INDEFINITE, repair=False)


def test_nearest_correlation_keeps_valid_matrix():
    r = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert np.allclose(nearest_correlation(r), r, atol=1e-12)


@pytest.mark.parametrize("bad", [
    np.array([[1.0, 0.2], [0.3, 1.0]]),
    np.array([[2.0, 0.2], [0.2, 1.0]]),
    np.array([[1.0, 1.2], [1.2, 1.0]]),
])
def test_invalid_target_correlation_rejected(bad):
    with pytest.raises((ValueError, ModelError)):
        NatafModel([STD, STD], bad)


# -- Nataf transforms -----------------------------------------------------------


def test_zero_maps_to_zero():
    assert np.allclose(gaussian_model(0.5).forward(np.zeros(2)), 0.0)


def test_hand_cholesky_example():
    u = gaussian_model(0.5).forward(np.array([1.0, 1.0]))
    assert u == pytest.approx([1.0, 0.5 / np.sqrt(0.75)], abs=1e-12)
    assert u[1] == pytest.approx(0.57735, abs=1e-5)


def test_cholesky_factors_reproduce_permuted_correlation(short_column):
    m = short_column.model
    for o in m.orderings:
        a = m.cholesky(o)
        p = m.sigma_z[np.ix_(o, o)]
        assert np.linalg.norm(a @ a.T - p) <= 1e-12
        assert np.allclose(a, np.tril(a))


def test_roundtrip_all_orderings(short_column, rng):
    m = short_column.model
    x = m.sample(1000, rng)
    for o in m.orderings:
        back = m.inverse(m.forward(x, o), o)
        assert np.max(np.abs(back - x) / np.maximum(1.0, np.abs(x))) <= 1e-9


def test_first_coordinate_depends_only_on_its_variable(nonlinear, rng):
    m = nonlinear.model
    x = m.sample(50, rng)
    for i, o in enumerate(m.orderings):
        y = x + rng.standard_normal(x.shape)
        y[:, i] = x[:, i]
        assert np.allclose(m.forward(x, o)[:, 0], m.forward(y, o)[:, 0], atol=1e-12, rtol=0)


def test_out_of_support_raises_transform_error(short_column):
    x = np.array([[250.0, 125.0, 2500.0, 40.0], [250.0, 125.0, 2500.0, -1.0]])
    with pytest.raises(TransformError) as info:
        short_column.model.forward(x)
    assert info.value.row == 1 and info.value.coordinate == 3


def test_gaussian_sampling_recovers_correlation(nonlinear):
    x = nonlinear.model.sample(100_000, np.random.default_rng(3))
    assert np.max(np.abs(np.corrcoef(x.T) - nonlinear.model.sigma_x)) <= 0.02


@pytest.mark.parametrize("ordering", [0, 1, 2, 3])
def test_pushforward_is_standard_normal(short_column, ordering):
    m = short_column.model
    u = m.forward(m.sample(100_000, np.random.default_rng(10 + ordering)), ordering)
    assert np.max(np.abs(u.mean(axis=0))) <= 0.02
    assert np.all(np.abs(u.var(axis=0) - 1.0) <= 0.04)
    c = np.corrcoef(u.T)
    assert np.max(np.abs(c - np.eye(4))) <= 0.02


# -- generic Rosenblatt model -----------------------------------------------


def independent_generic(marginals):
    def link(m):
        return Conditional(lambda x, hist: m._cdf_sf(np.asarray(x, dtype=float)),
                           guess=lambda hist: np.full(len(hist), m.mean), scale=m.std,
                           lower=0.0 if m.positive_support else -np.inf)

    d = len(marginals)
    chains = {o: [link(marginals[k]) for k in o] for o in cyclic_orderings(d)}
    return GenericHierarchicalModel(d, chains)


def test_independent_generic_model_is_componentwise():
    ms = [from_moments(Family.GUMBEL, 10.0, 0.3), from_moments(Family.LOGNORMAL, 2.0, 0.4),
          from_moments(Family.WEIBULL, 5.0, 0.2)]
    gm = independent_generic(ms)
    x = np.array([[9.0, 1.5, 5.5], [14.0, 3.0, 3.0]])
    direct = np.column_stack([m.to_normal(x[:, k]) for k, m in enumerate(ms)])
    for o in gm.orderings:
        assert np.allclose(gm.forward(x, o), direct[:, list(o)], atol=1e-12)
        assert np.allclose(gm.inverse(gm.forward(x, o), o), x, rtol=1e-10)


def test_generic_model_needs_every_ordering():
    with pytest.raises(ModelError):
        GenericHierarchicalModel(2, {(0, 1): [None, None]})


# -- load model -------------------------------------------------------------------


A_MARG = from_moments(Family.LOGNORMAL, 2274.97, 0.2)
B_MARG = from_moments(Family.LOGNORMAL, 225.02, 0.2)


def _mc_f_h(h, n=1_000_000, seed=0):
    """MC integration of F(h) = E_{A,B}[F(h | A, B)]."""
    g = np.random.default_rng(seed)
    a = A_MARG.from_normal(g.standard_normal(n))
    b = B_MARG.from_normal(g.standard_normal(n))
    return np.array([np.mean(np.exp(-np.exp(-(hh - a) / b))) for hh in np.atleast_1d(h)])


def test_first_ordering_matches_direct_evaluation(load_problem):
    m = load_problem.model
    x = np.array([[2000.0, 200.0, 2500.0], [2600.0, 260.0, 4000.0]])
    z_h = special.ndtri(np.exp(-np.exp(-(x[:, 2] - x[:, 0]) / x[:, 1])))
    expect = np.column_stack([A_MARG.to_normal(x[:, 0]), B_MARG.to_normal(x[:, 1]), z_h])
    assert np.allclose(m.forward(x, 0), expect, atol=1e-10)


def test_forward_at_medians_is_near_origin(load_problem):
    m = load_problem.model
    a, b = A_MARG.inv_cdf(0.5), B_MARG.inv_cdf(0.5)
    h = a + b * (-np.log(np.log(2.0)))
    u = m.forward(np.array([[a, b, h]]), 0)
    assert np.all(np.isfinite(u)) and np.all(np.abs(u) <= 4.0)


def test_h_marginal_matches_mc_at_three_points(load_problem):
    chain = load_problem.model.chain
    h = np.array([2400.0, 2800.0, 3500.0])
    assert np.max(np.abs(chain.h_marginal(h)[0] - _mc_f_h(h))) <= 2e-3


def test_h_median_agrees_with_mc(load_problem):
    chain = load_problem.model.chain
    x = load_problem.model.inverse(np.array([[0.0, 0.0, 0.0]]), 2)
    h_med = x[0, 2]
    assert chain.h_marginal(np.array([h_med]))[0][0] == pytest.approx(0.5, abs=1e-9)
    assert round(float(_mc_f_h(h_med)[0]), 3) == pytest.approx(0.5, abs=1.1e-3)


def test_a_given_hb_tends_to_one(load_problem):
    chain = load_problem.model.chain
    c, s = chain.a_given_hb(np.array([1e6]), np.array([3000.0]), np.array([220.0]))
    assert c[0] == pytest.approx(1.0, abs=1e-12)


def test_degenerate_a_collapses_h_given_b():
    a_point = from_moments(Family.LOGNORMAL, 2274.97, 1e-6)
    m = load_model_abh(a_point, B_MARG, calibrate=False)
    h = np.array([2100.0, 2500.0, 3200.0])
    b = np.array([200.0, 230.0, 250.0])
    expect = np.exp(-np.exp(-(h - 2274.97) / b))
    assert np.allclose(m.chain.h_given_b(h, b, 64)[0], expect, atol=1e-5)


@pytest.mark.parametrize("name", ["hb", "ahb", "bah", "hm", "ah"])
def test_conditional_cdfs_monotone_in_principal_argument(load_problem, name):
    chain = load_problem.model.chain
    grid = {
        "hb": lambda t: chain.h_given_b(t, np.full_like(t, 225.0)),
        "ahb": lambda t: chain.a_given_hb(t, np.full_like(t, 3000.0), np.full_like(t, 225.0)),
        "bah": lambda t: chain.b_given_ah(t, np.full_like(t, 2300.0), np.full_like(t, 3000.0)),
        "hm": lambda t: chain.h_marginal(t),
        "ah": lambda t: chain.a_given_h(t, np.full_like(t, 3000.0)),
    }[name]
    lo, hi = {"bah": (50.0, 600.0), "hb": (1500.0, 6000.0), "hm": (1500.0, 6000.0)}.get(
        name, (800.0, 4500.0))
    c, s = grid(np.linspace(lo, hi, 200))
    assert np.all(np.diff(c) >= -1e-13)
    assert np.allclose(c + s, 1.0, atol=1e-12)


@pytest.mark.slow
def test_load_model_roundtrip_every_ordering(load_problem):
    m = load_problem.model
    x = m.sample(300, np.random.default_rng(5))
    for o in m.orderings:
        back = m.inverse(m.forward(x, o), o)
        assert np.max(np.abs(back - x) / np.abs(x)) <= 1e-9


def test_calibration_records_node_counts(load_problem):
    cal = load_problem.model.calibration
    assert set(cal) == {"hb", "ahb", "bah", "hm", "ah"}
    assert all(16 <= n <= 512 for n in cal.values())


def test_warning_free_fit_for_short_column(short_column):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        NatafModel(short_column.model.marginals, short_column.model.sigma_x)
