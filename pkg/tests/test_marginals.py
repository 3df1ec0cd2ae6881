import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from fsrsa.errors import DomainError, ParameterizationError
from fsrsa.marginals import Family, Marginal, from_dict, from_moments, std_normal_ppf

SHORT_COLUMN_ROWS = [
    (Family.NORMAL, 250.0, 0.3),
    (Family.NORMAL, 125.0, 0.3),
    (Family.GUMBEL, 2500.0, 0.2),
    (Family.WEIBULL, 40.0, 0.1),
]


def all_families():
    return [
        Marginal(Family.STANDARD_NORMAL),
        Marginal(Family.NORMAL, (250.0, 75.0)),
        from_moments(Family.LOGNORMAL, 1.0, 0.5),
        from_moments(Family.LOGNORMAL, 33.7094, 0.3692),
        from_moments(Family.GUMBEL, 2500.0, 0.2),
        from_moments(Family.WEIBULL, 40.0, 0.1),
        from_moments(Family.WEIBULL, 5.0, 1.2),
    ]


# -- pdf ---------------------------------------------------------------


def test_standard_normal_pdf_at_zero():
    assert Marginal(Family.STANDARD_NORMAL).pdf(0.0) == pytest.approx(0.3989422804, abs=1e-10)


def test_normal_pdf_at_mean():
    m = from_moments(Family.NORMAL, 250.0, 0.3)
    assert m.pdf(250.0) == pytest.approx(1.0 / (75.0 * np.sqrt(2 * np.pi)), rel=1e-12)
    assert m.pdf(250.0) == pytest.approx(0.005319, abs=5e-7)


def test_lognormal_pdf_outside_support_is_zero():
    assert from_moments(Family.LOGNORMAL, 1.0, 0.5).pdf(-1.0) == 0.0


@pytest.mark.parametrize("m", all_families(), ids=lambda m: m.family.value)
def test_pdf_integrates_to_one(m):
    lo, hi = m.inv_cdf(1e-13), m.inv_cdf(1 - 1e-13)
    if m.family in (Family.LOGNORMAL, Family.WEIBULL):
        lo = 0.0
    mass, _ = integrate.quad(m.pdf, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12,
                             points=[m.mean])
    assert abs(mass - 1.0) <= 1e-6


# -- cdf / inverse -------------------------------------------------------


def test_standard_normal_cdf_symmetry():
    assert Marginal(Family.STANDARD_NORMAL).cdf(0.0) == 0.5


def test_gumbel_cdf_at_location():
    m = Marginal(Family.GUMBEL, (2274.97, 389.85))
    assert m.cdf(2274.97) == pytest.approx(np.exp(-1.0), rel=1e-14)


def test_weibull_roundtrip_at_mean():
    m = from_moments(Family.WEIBULL, 40.0, 0.1)
    assert m.inv_cdf(m.cdf(40.0)) == pytest.approx(40.0, rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_inv_cdf_rejects_probabilities_outside_open_interval(p):
    with pytest.raises(DomainError):
        Marginal(Family.STANDARD_NORMAL).inv_cdf(p)


@pytest.mark.parametrize("m", all_families(), ids=lambda m: m.family.value)
@given(p=st.floats(min_value=5e-7, max_value=1 - 5e-7))
def test_inv_cdf_cdf_roundtrip_central_mass(m, p):
    x = m.inv_cdf(p)
    assert m.inv_cdf(m.cdf(x)) == pytest.approx(x, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("m", all_families(), ids=lambda m: m.family.value)
@given(a=st.floats(-1.0, 1.0), b=st.floats(-1.0, 1.0))
def test_cdf_is_monotone(m, a, b):
    x1, x2 = m.mean + m.std * 5 * min(a, b), m.mean + m.std * 5 * max(a, b)
    assert m.cdf(x1) <= m.cdf(x2)


@pytest.mark.parametrize("m", all_families(), ids=lambda m: m.family.value)
def test_normal_score_roundtrip_in_tails(m):
    # CDF values are clamped at 1e-15, i.e. |z| <= 7.94
    z = np.array([-7.5, -5.0, -1.0, 0.0, 1.0, 5.0, 7.5])
    assert np.allclose(m.to_normal(m.from_normal(z)), z, atol=1e-7)


def test_std_normal_ppf_clamps():
    assert np.isfinite(std_normal_ppf(0.0))
    assert std_normal_ppf(0.0) == pytest.approx(special.ndtri(1e-15))


# -- from_moments ----------------------------------------------------------


def test_normal_from_moments():
    m = from_moments(Family.NORMAL, 250.0, 0.3)
    assert m.params == pytest.approx((250.0, 75.0))


def test_gumbel_from_moments_location():
    m = from_moments(Family.GUMBEL, 2500.0, 0.2)
    b = 500.0 * np.sqrt(6.0) / np.pi
    assert m.params[1] == pytest.approx(b, rel=1e-14)
    assert m.params[0] == pytest.approx(2500.0 - np.euler_gamma * b, rel=1e-14)
    assert m.params[0] == pytest.approx(2274.97, abs=0.01)


@pytest.mark.parametrize("family,mean,cov", SHORT_COLUMN_ROWS + [
    (Family.LOGNORMAL, 33.7094, 0.3692),
    (Family.LOGNORMAL, 2274.97, 0.2),
    (Family.WEIBULL, 3.0, 2.5),
])
def test_from_moments_recovers_moments(family, mean, cov):
    m = from_moments(family, mean, cov)
    assert m.mean == pytest.approx(mean, rel=1e-10)
    assert m.cov == pytest.approx(cov, rel=1e-10)


@given(mean=st.floats(0.1, 1e4), cov=st.floats(0.05, 2.0))
def test_lognormal_moment_roundtrip_property(mean, cov):
    m = from_moments(Family.LOGNORMAL, mean, cov)
    assert m.mean == pytest.approx(mean, rel=1e-10)
    assert m.cov == pytest.approx(cov, rel=1e-10)


@given(cov=st.floats(0.03, 3.0))
def test_weibull_moment_roundtrip_property(cov):
    m = from_moments(Family.WEIBULL, 10.0, cov)
    assert m.mean == pytest.approx(10.0, rel=1e-10)
    assert m.cov == pytest.approx(cov, rel=1e-9)


def test_weibull_unreachable_cov_raises():
    with pytest.raises(ParameterizationError):
        from_moments(Family.WEIBULL, 10.0, 1e-4)


@pytest.mark.parametrize("params", [(0.0, -1.0), (1.0, 0.0)])
def test_nonpositive_scale_rejected(params):
    with pytest.raises(ParameterizationError):
        Marginal(Family.NORMAL, params)


def test_from_dict_forms():
    assert from_dict({"family": "gaussian", "params": [0, 2]}).std == 2.0
    assert from_dict({"family": "Lognormal", "mean": 2.0, "cov": 0.1}).mean == pytest.approx(2.0)
    assert from_dict({"family": "standard_normal"}).family is Family.STANDARD_NORMAL
    with pytest.raises(ParameterizationError):
        from_dict({"family": "gumbel"})
