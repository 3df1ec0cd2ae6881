import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from fsrsa.errors import BandwidthError
from fsrsa.kde import (
    KdeModel,
    RatioVarianceConfig,
    kde_eval,
    ratio_variance,
    ratio_variance_detail,
    silverman_bandwidth,
    silverman_factor,
)

PHI0 = 0.3989422804014327
PHI1 = 0.24197072451914337


# -- bandwidth ----------------------------------------------------------------


def test_silverman_factor_single_sample():
    assert silverman_factor(1, 1) == pytest.approx((4 / 3) ** 0.2, rel=1e-14)
    assert silverman_factor(1, 1) == pytest.approx(1.0592, abs=1e-4)


def test_silverman_factor_three_dims():
    # (4/5)^(1/7) * 1000^(-1/7) evaluates to 0.361064
    assert silverman_factor(3, 1000) == pytest.approx(0.8 ** (1 / 7) * 1000 ** (-1 / 7), rel=1e-14)
    assert silverman_factor(3, 1000) == pytest.approx(0.361064, abs=1e-6)


def test_bandwidth_is_linear_in_spread(rng):
    x = rng.standard_normal(200)
    assert silverman_bandwidth(2 * x)[0] == pytest.approx(2 * silverman_bandwidth(x)[0], rel=1e-14)


def test_bandwidth_uses_sample_std(rng):
    x = rng.standard_normal((500, 2))
    expect = silverman_factor(2, 500) * x.std(axis=0, ddof=1)
    assert np.allclose(silverman_bandwidth(x), expect, rtol=1e-14)


def test_constant_column_raises():
    x = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(BandwidthError, match=r"\[1\]"):
        silverman_bandwidth(x)


def test_single_sample_bandwidth_raises():
    with pytest.raises(BandwidthError):
        silverman_bandwidth(np.zeros((1, 2)))


def test_empty_samples_raise():
    with pytest.raises(BandwidthError):
        KdeModel(np.zeros((0, 1)), bandwidth=[1.0])


@pytest.mark.parametrize("h", [[0.0], [-1.0], [np.inf], [1.0, 1.0]])
def test_invalid_explicit_bandwidth(h):
    with pytest.raises(BandwidthError):
        KdeModel(np.zeros((3, 1)), bandwidth=h)


# -- evaluation ------------------------------------------------------------------


def test_single_kernel_at_zero():
    assert kde_eval(KdeModel(np.zeros((1, 1)), bandwidth=[1.0]), [0.0]) == pytest.approx(PHI0, abs=1e-12)


def test_two_symmetric_kernels():
    m = KdeModel(np.array([[-1.0], [1.0]]), bandwidth=[1.0])
    assert kde_eval(m, [0.0]) == pytest.approx(PHI1, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_large_sample_recovers_phi0(seed):
    x = np.random.default_rng(seed).standard_normal((10_000, 1))
    assert abs(kde_eval(KdeModel(x), [0.0]) - PHI0) <= 0.02


def test_pdf_matches_direct_sum(rng):
    x = rng.standard_normal((50, 2))
    h = np.array([0.4, 0.7])
    u = rng.standard_normal((9, 2)) * 2
    z = (u[:, None, :] - x[None, :, :]) / h
    direct = np.exp(-0.5 * np.sum(z * z, axis=2)).sum(axis=1) / (50 * h.prod() * 2 * np.pi)
    m = KdeModel(x, bandwidth=h)
    assert np.allclose(m.pdf(u), direct, rtol=1e-12, atol=0)
    assert np.allclose(m.pdf(u, chunk=60), direct, rtol=1e-12, atol=0)


def test_far_points_are_zero_not_nan():
    m = KdeModel(np.zeros((3, 1)), bandwidth=[0.1])
    out = m.pdf(np.array([[50.0], [-1e6]]))
    assert np.array_equal(out, [0.0, 0.0])


@given(x=hnp.arrays(float, (20, 2), elements=st.floats(-5, 5)),
       u=hnp.arrays(float, (10, 2), elements=st.floats(-50, 50)))
def test_pdf_nonnegative_and_finite(x, u):
    m = KdeModel(x, bandwidth=[0.3, 0.5])
    p = m.pdf(u)
    assert np.all(np.isfinite(p)) and np.all(p >= 0)


def test_one_dim_mass_on_grid(rng):
    m = KdeModel(rng.standard_normal((300, 1)) * 1.2 + 0.5)
    grid = np.linspace(-8, 8, 2001)
    assert abs(np.trapezoid(m.pdf(grid[:, None]), grid) - 1.0) <= 1e-6


def test_two_dim_mass_by_quadrature(rng):
    m = KdeModel(rng.standard_normal((200, 2)) + [1.0, -0.5])
    g = np.linspace(-9, 9, 601)
    a, b = np.meshgrid(g, g, indexing="ij")
    p = m.pdf(np.column_stack([a.ravel(), b.ravel()])).reshape(a.shape)
    assert abs(np.trapezoid(np.trapezoid(p, g, axis=1), g) - 1.0) <= 1e-3


def test_three_dim_mass(rng):
    m = KdeModel(rng.standard_normal((200, 3)))
    g = np.linspace(-8, 8, 121)
    a, b, c = np.meshgrid(g, g, g, indexing="ij")
    p = m.pdf(np.column_stack([a.ravel(), b.ravel(), c.ravel()])).reshape(a.shape)
    mass = np.trapezoid(np.trapezoid(np.trapezoid(p, g, axis=2), g, axis=1), g)
    assert abs(mass - 1.0) <= 1e-3


# -- ratio variance -----------------------------------------------------------------


def test_single_kernel_closed_form():
    # int N(0, h^2)^2 / phi - 1 = 1 / (h sqrt(2 - h^2)) - 1, equal to 2/sqrt(3) - 1 at h^2 = 1/2
    m = KdeModel(np.zeros((1, 1)), bandwidth=[np.sqrt(0.5)])
    assert ratio_variance(m) == pytest.approx(2 / np.sqrt(3) - 1, abs=1e-6)
    assert ratio_variance(m) == pytest.approx(0.1547, abs=1e-4)


def test_kernel_equal_to_phi_has_zero_variance():
    m = KdeModel(np.zeros((1, 1)), bandwidth=[1.0])
    val, info = ratio_variance_detail(m)
    # only the mass cut off beyond |u| = 6 remains: q (1 - q)
    q = info["retained_mass"]
    assert val == pytest.approx(q * (1 - q), abs=1e-12)
    assert val <= 1e-8


@pytest.mark.parametrize("h", [0.3, 0.6, 0.9, 1.2])
def test_shifted_kernel_closed_form(h):
    # N(m, h^2): int f^2/phi = exp(m^2 / (2 - h^2)) / (h sqrt(2 - h^2))
    mu = 0.7
    m = KdeModel(np.full((1, 1), mu), bandwidth=[h])
    exact = np.exp(mu * mu / (2 - h * h)) / (h * np.sqrt(2 - h * h)) - 1.0
    # for h > 1 the integrand has heavy tails, so widen the grid and drop truncation
    cfg = RatioVarianceConfig() if h <= 1 else RatioVarianceConfig(
        truncation=np.inf, grid_halfwidth=25.0, grid_points=8001)
    assert ratio_variance(m, cfg) == pytest.approx(exact, rel=1e-6)


def test_standard_normal_samples_give_small_variance():
    x = np.random.default_rng(0).standard_normal((100_000, 1))
    assert ratio_variance(KdeModel(x)) < 0.05


def test_two_dim_mc_matches_closed_form():
    # product kernel: variance is prod(1 + v_j) - 1
    hs = np.array([0.5, 0.8])
    m = KdeModel(np.zeros((1, 2)), bandwidth=hs)
    v = 1.0 / (hs * np.sqrt(2 - hs * hs)) - 1.0
    exact = np.prod(1 + v) - 1
    val, info = ratio_variance_detail(m, RatioVarianceConfig(n_eval=400_000))
    assert info["mode"] == "mc" and info["n_eval"] == 400_000
    assert val == pytest.approx(exact, rel=0.03)


def test_kde_is_mode_matches_closed_form():
    hs = np.array([0.6, 0.9])
    m = KdeModel(np.zeros((1, 2)), bandwidth=hs)
    exact = np.prod(1 / (hs * np.sqrt(2 - hs * hs))) - 1
    val, info = ratio_variance_detail(m, RatioVarianceConfig(mode="kde_is", n_eval=200_000))
    assert info["mode"] == "kde_is"
    assert val == pytest.approx(exact, rel=0.03)


def test_truncation_keeps_output_finite():
    # a narrow kernel far in the tail would blow up f/phi without truncation
    m = KdeModel(np.array([[7.5]]), bandwidth=[0.05])
    val, info = ratio_variance_detail(m)
    assert np.isfinite(val) and val >= 0
    assert info["retained_mass"] < 1e-6


def test_quadrature_mode_rejects_higher_dimension():
    with pytest.raises(ValueError):
        ratio_variance(KdeModel(np.zeros((1, 2)), bandwidth=[1, 1]),
                       RatioVarianceConfig(mode="quadrature"))


def test_unknown_mode():
    with pytest.raises(ValueError):
        ratio_variance(KdeModel(np.zeros((1, 1)), bandwidth=[1]), RatioVarianceConfig(mode="x"))


@pytest.mark.parametrize("k", [1, 2])
def test_invariant_under_row_permutation(k, rng):
    x = rng.standard_normal((400, k)) * 0.5 + 1.0
    perm = rng.permutation(400)
    a = ratio_variance(KdeModel(x), RatioVarianceConfig(n_eval=20_000))
    b = ratio_variance(KdeModel(x[perm]), RatioVarianceConfig(n_eval=20_000))
    assert a == pytest.approx(b, rel=1e-12)


def test_mc_evaluation_is_seeded(rng):
    m = KdeModel(rng.standard_normal((100, 2)))
    cfg = RatioVarianceConfig(n_eval=10_000, seed=3)
    assert ratio_variance(m, cfg) == ratio_variance(m, cfg)
