import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from pbcover import fading as fd
from pbcover.errors import SingularParameterization, UnsupportedShape

# 0.05-quantile of X*Y, X, Y ~ Gamma(4, 1/4), from 1e7 samples (rng seed 12345)
Q05_K4_MC = 0.20763173201026808
Q05_K4 = 0.2077263


def quad_cdf(u, kx, ky):
    """P(XY < u) by integrating P(X < u/y) against the density of Y."""
    f = lambda y: special.gammainc(kx, kx * u / y) * stats.gamma.pdf(y, ky, scale=1 / ky)
    val, _ = integrate.quad(f, 0, np.inf, limit=400, epsabs=1e-14, epsrel=1e-12)
    return val


@pytest.mark.parametrize("kx,ky", [(1, 1), (4, 4), (8, 4), (2, 5), (12, 3)])
@pytest.mark.parametrize("u", [1e-3, 0.05, 0.2, 1.0, 3.0])
def test_closed_cdf_vs_quadrature(kx, ky, u):
    assert fd.product_cdf_closed(u, kx, ky) == pytest.approx(quad_cdf(u, kx, ky), abs=1e-11)


@pytest.mark.parametrize("kx,ky", [(6.3, 4), (4.5, 2.2), (1.7, 4), (10.4, 4)])
@pytest.mark.parametrize("u", [0.01, 0.2, 1.0, 4.0])
def test_general_cdf_vs_quadrature(kx, ky, u):
    assert fd.product_cdf_general(u, kx, ky) == pytest.approx(quad_cdf(u, kx, ky), abs=1e-10)


def test_general_agrees_with_closed_near_integer():
    # approaching an integer shape from the smooth side
    a = fd.product_cdf_general(0.3, 4.01, 4.0 + 0.5)
    b = fd.product_cdf_general(0.3, 3.99, 4.0 + 0.5)
    c = quad_cdf(0.3, 4.0, 4.5)
    assert a < c < b or b < c < a


def test_closed_rejects_fractional():
    with pytest.raises(UnsupportedShape):
        fd.product_cdf_closed(0.5, 4.5, 4)


def test_general_rejects_singular():
    with pytest.raises(SingularParameterization):
        fd.product_cdf_general(0.5, 6.0, 4.0)
    with pytest.raises(SingularParameterization):
        fd.product_cdf_general(0.5, 6.0005, 4.0)


def test_dispatch_falls_back_to_samples():
    p = fd.product_cdf(0.25, 6.0005, 4.0)
    assert p == pytest.approx(quad_cdf(0.25, 6.0005, 4.0), abs=3e-3)


@settings(max_examples=50, deadline=None)
@given(u1=st.floats(1e-4, 10), u2=st.floats(1e-4, 10), kx=st.integers(1, 12), ky=st.integers(1, 12))
def test_closed_cdf_is_a_cdf(u1, u2, kx, ky):
    lo, hi = sorted((u1, u2))
    a, b = fd.product_cdf_closed(lo, kx, ky), fd.product_cdf_closed(hi, kx, ky)
    assert 0 <= a <= b + 1e-14 <= 1 + 1e-14


@settings(max_examples=30, deadline=None)
@given(u=st.floats(1e-3, 8), kx=st.floats(0.6, 12), ky=st.floats(0.6, 8))
def test_general_cdf_bounded(u, kx, ky):
    if fd.is_singular(kx, ky):
        return
    assert 0 <= fd.product_cdf_general(u, kx, ky) <= 1


def test_inverse_golden():
    assert fd.inverse_product_cdf(0.05, 4, 4) == pytest.approx(Q05_K4, rel=1e-6)
    assert fd.inverse_product_cdf(0.05, 4, 4) == pytest.approx(Q05_K4_MC, rel=2e-3)
    assert fd.product_cdf_closed(fd.inverse_product_cdf(0.05, 8, 4), 8, 4) == pytest.approx(0.05, abs=1e-12)


def test_empirical_quantile_matches_closed_root():
    q = fd.empirical_inverse_cdf((1, 1), 0.05, n_samples=10**6)
    assert q == pytest.approx(fd.inverse_product_cdf(0.05, 1, 1), rel=0.01)


def test_empirical_median_seed_stability():
    a = fd.empirical_inverse_cdf((4, 4), 0.5, seed=0)
    b = fd.empirical_inverse_cdf((4, 4), 0.5, seed=1)
    assert abs(a - b) / a < 0.005


def test_empirical_monotone_and_checks():
    qs = [fd.empirical_inverse_cdf((4, 4), e) for e in (0.01, 0.05, 0.5)]
    assert qs[0] < qs[1] < qs[2]
    with pytest.raises(ValueError):
        fd.empirical_inverse_cdf((4, 4), 0.05, n_samples=1000)
    with pytest.raises(ValueError):
        fd.empirical_inverse_cdf((4, 4), 1.0)


def test_equivalent_threshold(qos, spec):
    th = fd.equivalent_threshold(qos, spec)
    assert th == pytest.approx(10**0.5 / Q05_K4, rel=1e-6)
    emp = fd.equivalent_threshold(qos, spec, method="empirical")
    assert emp == pytest.approx(th, rel=0.01)
    tighter = fd.equivalent_threshold(fd.QosSpec(qos.gamma_th, 0.01), spec)
    assert tighter > th


def test_equivalent_threshold_unit_quantile():
    # F^-1(eps) = 1 exactly when eps = F(1)
    eps = fd.product_cdf_closed(1.0, 4, 4)
    assert fd.equivalent_threshold(fd.QosSpec(3.0, eps), fd.FadingSpec()) == pytest.approx(3.0, rel=1e-9)


def test_gamma_sum_moments():
    parts = [fd.GammaParams(2.0, 0.5), fd.GammaParams(4.0, 0.1), fd.GammaParams(1.5, 2.0)]
    s = fd.gamma_sum_approx(parts)
    assert s.mean == pytest.approx(sum(p.mean for p in parts))
    assert s.var == pytest.approx(sum(p.var for p in parts))


def test_sum_shape_equal_weights():
    assert fd.sum_shape([1, 1], [4, 4]) == pytest.approx(8.0)
    assert fd.sum_shape([3, 3, 3, 3], [4, 4, 4, 4]) == pytest.approx(16.0)
    assert fd.FadingSpec(4, 4, weights=(1.0, 1.0)).forward_law().shape == pytest.approx(8.0)


@settings(max_examples=40, deadline=None)
@given(w=st.lists(st.floats(0.01, 100), min_size=1, max_size=8), k=st.floats(0.5, 10))
def test_sum_shape_between_single_and_total(w, k):
    ks = fd.sum_shape(w, [k] * len(w))
    assert k * (1 - 1e-12) <= ks <= k * len(w) * (1 + 1e-12)


def test_sum_shape_matches_sample_moments():
    g = np.random.default_rng(3)
    w = np.array([1.0, 0.4, 0.1])
    x = g.gamma(4, 0.25, size=(400_000, 3)) @ (w / w.sum())
    assert fd.sum_shape(w, [4, 4, 4]) == pytest.approx(x.mean() ** 2 / x.var(), rel=0.02)


def test_threshold_curve_matches_direct(qos):
    curve = fd.ThresholdCurve(qos, 4.0, 24.0, 4.0)
    for k in (4.0, 5.3, 8.0, 11.7, 19.0, 24.0):
        direct = fd.equivalent_threshold(qos, fd.FadingSpec(k, 4.0))
        assert curve(k) == pytest.approx(direct, rel=1e-6)


def test_outage_at_edge_gcd_equals_epsilon(baseline, qos, spec):
    from pbcover import linkmodel as lm, planner as pl

    q = pl.GcdQuery(baseline, lm.Placement(6, 50.0, 1), qos, spec)
    r = pl.gcd_at(50.0, q).r_cov
    p = fd.outage_probability(lm.PolarPoint(r, math.pi / 6), lm.Placement(6, 50.0, 1), baseline, spec, qos)
    assert p == pytest.approx(0.05, abs=1e-8)
