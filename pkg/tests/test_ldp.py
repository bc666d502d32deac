import numpy as np
import pytest

from twistop import (center_observable, check_derivatives, clt_characteristic_check,
                     digit_observable, invariant_density, lambda_curve, rate_function)
from twistop.errors import NotMixing, WindowTooNarrow, ZeroVariance
from twistop.ldp import TwistedEigenvalue, legendre_point
from twistop.maps import expression_observable
from twistop.ulam import TransferMatrix

from conftest import cosh_oracle, cramer_rate, ulam


@pytest.fixture(scope="module")
def doubling_curve():
    _, P, K = ulam("doubling", 1024)
    return lambda_curve(K, digit_observable(P), 2.0, 21)


def test_lambda_curve_doubling(doubling_curve):
    c = doubling_curve
    np.testing.assert_allclose(c.lam, cosh_oracle(c.theta), atol=1e-10)
    assert c.Lambda[10] == 0.0
    np.testing.assert_allclose(c.Lambda, c.Lambda[::-1], atol=1e-12)
    assert c.valid_window == (-2.0, 2.0)
    assert c.Lambda_at(1.0) == pytest.approx(np.log(np.cosh(0.5)), abs=1e-12)


def test_markov_tilt_identity():
    _, P2, K2 = ulam("doubling", 2)
    _, P, K = ulam("doubling", 256)
    e2 = TwistedEigenvalue(K2, digit_observable(P2))
    e = TwistedEigenvalue(K, digit_observable(P))
    for th in np.linspace(-2, 2, 9):
        assert abs(e2(th) - e(th)) <= 1e-12


def test_derivatives_doubling(doubling_curve):
    rep = check_derivatives(doubling_curve, 0.25)
    assert abs(rep.d1) <= 1e-6
    assert rep.rel_error <= 1e-3


def test_scaled_observable_quadruples():
    _, P, K = ulam("beta-2.5", 512)
    v = invariant_density(K).right
    phi = center_observable(digit_observable(P), v)
    c1 = lambda_curve(K, phi, 1.0, 11)
    c2 = lambda_curve(K, phi.scaled(2.0), 0.5, 11)
    d1 = check_derivatives(c1, 1.0).d2
    d2 = check_derivatives(c2, 1.0).d2
    assert d2 == pytest.approx(4 * d1, rel=1e-6)
    for th in (0.1, 0.3):
        assert c2.Lambda_at(th) == pytest.approx(c1.Lambda_at(2 * th), abs=1e-10)


def test_zero_observable():
    _, P, K = ulam("beta-2.5", 128)
    curve = lambda_curve(K, np.zeros(128), 1.0, 11)
    np.testing.assert_allclose(curve.Lambda, 0.0, atol=1e-12)
    rep = check_derivatives(curve, 1.0)
    assert abs(rep.d1) < 1e-9 and abs(rep.d2) < 1e-6
    with pytest.raises(ZeroVariance):
        rate_function(curve, 11, sigma2=0.0)


def test_shift_covariance():
    _, P, K = ulam("beta-2.5", 512)
    v = invariant_density(K).right
    base = expression_observable(P, "x**2")
    a = lambda_curve(K, center_observable(base, v), 1.0, 11)
    b = lambda_curve(K, center_observable(base.plus_constant(3.0), v), 1.0, 11)
    np.testing.assert_allclose(a.Lambda, b.Lambda, atol=1e-8)


def test_convex_nonnegative_beta():
    _, P, K = ulam("beta-2.5", 512)
    v = invariant_density(K).right
    phi = center_observable(digit_observable(P), v)
    curve = lambda_curve(K, phi, 2.0, 21)
    lo, hi = curve.valid_window
    inside = (curve.theta >= lo) & (curve.theta <= hi)
    assert np.all(curve.Lambda[inside] >= -1e-12)
    assert np.all(curve.lam[inside] > 0)
    L, th = curve.Lambda[inside], curve.theta[inside]
    assert np.all(np.diff(L, 2) >= -1e-8)


def test_not_mixing():
    P = ulam("doubling", 8)[1]
    import scipy.sparse as sp
    K = TransferMatrix(sp.identity(8, format="csc"), P)
    with pytest.raises(NotMixing):
        lambda_curve(K, digit_observable(P), 1.0, 11)


def test_window_too_narrow(doubling_curve):
    with pytest.raises(WindowTooNarrow):
        check_derivatives(doubling_curve, 0.25, h=1.5)


@pytest.fixture(scope="module")
def doubling_rate(doubling_curve):
    return rate_function(doubling_curve, 41, 0.25)


def test_rate_doubling(doubling_rate):
    r = doubling_rate
    assert r(0.1) == pytest.approx(cramer_rate(0.1), abs=1e-9)
    assert r(0.1) == pytest.approx(0.0201355, abs=1e-6)
    assert r(0.0) == 0.0
    assert legendre_point(r.curve, 0.0)[1] == 0.0
    np.testing.assert_allclose(r.c, r.c[::-1], atol=1e-8)
    inside = np.abs(r.eps) < 0.2
    np.testing.assert_allclose(r.c[inside], cramer_rate(r.eps[inside]), atol=1e-8)
    assert r.eps_plus == pytest.approx(np.log(np.cosh(1.0)) / 2.0, abs=1e-12)
    assert r.eps_minus == pytest.approx(-r.eps_plus, abs=1e-12)
    assert r.eps.max() < r.eps_plus and r.eps.min() > r.eps_minus


def test_legendre_duality(doubling_rate):
    r = doubling_rate
    L = r.curve.Lambda_at
    h = 1e-5
    for e, c, t in zip(r.eps, r.c, r.argmax_theta):
        assert c + L(t) == pytest.approx(t * e, abs=1e-14)
        if abs(t) < 1.9:
            assert (L(t + h) - L(t - h)) / (2 * h) == pytest.approx(e, abs=1e-4)


def test_rate_grid_refinement():
    _, P, K = ulam("doubling", 256)
    phi = digit_observable(P)
    coarse = rate_function(lambda_curve(K, phi, 2.0, 21), 41, 0.25)
    fine = rate_function(lambda_curve(K, phi, 2.0, 41), 41, 0.25)
    np.testing.assert_allclose(coarse.c, fine.c, atol=1e-6)


def test_clt_check():
    _, P, K = ulam("doubling", 1024)
    t = np.linspace(-3, 3, 13)
    checks = clt_characteristic_check(K, digit_observable(P), 0.25, t, [25, 100, 400])
    for ch in checks:
        assert ch.lhs[6] == 1.0
        oracle = np.cos(t / (2 * np.sqrt(ch.n))) ** ch.n
        np.testing.assert_allclose(ch.lhs, oracle, atol=1e-10)
    assert np.exp(-0.125) == pytest.approx(0.8824969, abs=1e-7)
    assert checks[2].max_abs_error <= 0.25 * checks[1].max_abs_error
    with pytest.raises(ValueError):
        clt_characteristic_check(K, digit_observable(P), 0.25, [4.0], [10])
