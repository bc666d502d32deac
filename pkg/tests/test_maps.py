import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twistop import (BUILTIN_MAPS, Branch, PiecewiseAffineMap, Rectangle, UlamPartition,
                     center_observable, complexity_Y, digit_observable, eta0, eta0_value,
                     table_observable, unit_ball_volume)
from twistop.errors import BoundaryPoint, ExpansionViolation, InvalidBranch, SingularBranch
from twistop.maps import distortion_constant, expansion_constant, expression_observable


def test_evaluate_doubling():
    T = BUILTIN_MAPS["doubling"]()
    y, lab = T.evaluate(0.3)
    assert y == pytest.approx(0.6) and lab == "1"
    y, lab = T.evaluate(0.75)
    assert y == pytest.approx(0.5) and lab == "2"


def test_evaluate_triple_2d():
    T = BUILTIN_MAPS["triple-2d"]()
    y, lab = T.evaluate([0.5, 0.9])
    np.testing.assert_allclose(y, [0.5, 0.7], atol=1e-14)
    assert lab == "1,2"  # cell [1/3,2/3) x [2/3,1)


@pytest.mark.parametrize("x", [0.5, 0.0, 1.0])
def test_boundary_point_rejected(x):
    with pytest.raises(BoundaryPoint):
        BUILTIN_MAPS["doubling"]().evaluate(x)


def test_expansion_constants():
    assert expansion_constant(BUILTIN_MAPS["doubling"]()) == pytest.approx(0.5)
    assert expansion_constant(BUILTIN_MAPS["triple-2d"]()) == pytest.approx(1 / 3)
    br = Branch(Rectangle((0.0, 0.0), (1.0, 1.0)), np.diag([2.0, 5.0]), [0.0, 0.0])
    assert br.inverse_norm() == pytest.approx(0.5)
    for name in ("doubling", "beta-2.5", "triple-2d"):
        assert expansion_constant(BUILTIN_MAPS[name]()) < 1


def test_singular_branch():
    with pytest.raises(SingularBranch):
        Branch(Rectangle((0.0, 0.0), (1.0, 1.0)), [[1.0, 2.0], [2.0, 4.0]], [0, 0]).inverse_norm()


def test_distortion_zero():
    for name in ("doubling", "beta-2.5", "triple-2d"):
        assert distortion_constant(BUILTIN_MAPS[name]()) == 0.0


def test_unit_ball_volume_values():
    assert unit_ball_volume(0) == 1.0
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4.18879020, abs=1e-8)


def test_unit_ball_recurrence():
    for d in range(2, 11):
        assert unit_ball_volume(d) == pytest.approx(unit_ball_volume(d - 2) * 2 * math.pi / d, rel=1e-12)


def test_complexity_Y():
    assert complexity_Y(BUILTIN_MAPS["doubling"]()) == 2
    assert complexity_Y(BUILTIN_MAPS["beta-2.5"]()) == 2
    assert complexity_Y(BUILTIN_MAPS["triple-2d"]()) == 8


def test_eta0_values():
    assert eta0_value(0.1, 2, 1.0, 2).eta0 == pytest.approx(0.1 + (0.4 / 0.9) * 2 * (2 / math.pi), abs=1e-12)
    assert eta0_value(0.1, 2, 1.0, 2).eta0 == pytest.approx(0.665884, abs=1e-6)
    rep = eta0(BUILTIN_MAPS["doubling"]())
    assert rep.eta0 == pytest.approx(4.5) and not rep.passes
    assert eta0_value(1e-12, 3, 1.0, 2).eta0 < 1e-10


def test_eta0_reassembles():
    for name in ("doubling", "beta-2.5", "triple-2d"):
        r = eta0(BUILTIN_MAPS[name]())
        expect = r.s ** r.alpha + 4 * r.s / (1 - r.s) * r.Y * r.gamma_prev / r.gamma_d
        assert r.eta0 == expect
        assert r.passes == (r.eta0 < 1)


def test_eta0_expansion_violation():
    with pytest.raises(ExpansionViolation):
        eta0(BUILTIN_MAPS["identity"]())


def test_validate_overlap_and_nonexpanding():
    a = Branch(Rectangle((0.0,), (0.6,)), [[2.0]], [0.0], "a", (True,))
    b = Branch(Rectangle((0.5,), (1.0,)), [[2.0]], [-1.0], "b")
    with pytest.raises(InvalidBranch):
        PiecewiseAffineMap((a, b)).validate()
    c = Branch(Rectangle((0.0,), (1.0,)), [[1.0]], [0.0], "c")
    with pytest.raises(InvalidBranch):
        PiecewiseAffineMap((c,)).validate()
    for name in ("doubling", "beta-2.5", "triple-2d"):
        BUILTIN_MAPS[name]().validate()


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["doubling", "beta-2.5", "triple-2d"]), st.integers(0, 2**31))
def test_apply_lands_in_phase_space(name, seed):
    T = BUILTIN_MAPS[name]()
    rng = np.random.default_rng(seed)
    x = rng.random((10_000, T.dim))
    y, idx = T.apply(x)
    assert np.all(idx >= 0)
    assert np.all(T.phase_space.contains(y))
    lows, highs = T._bounds
    assert np.all((x > lows[idx]) & (x < highs[idx]))


def test_center_observable():
    P = UlamPartition(Rectangle((0.0,), (1.0,)), (8,))
    v = np.ones(8)
    five = table_observable(P, np.full(8, 5.0))
    assert np.all(center_observable(five, v).values == 0)
    ind = expression_observable(P, "where(x >= 0.5, 1.0, 0.0)")
    c = center_observable(ind, v)
    np.testing.assert_array_equal(c.values, digit_observable(P).values)
    np.testing.assert_array_equal(center_observable(c, v).values, c.values)
    rng = np.random.default_rng(1)
    dens = rng.random(8)
    dens /= dens.mean()
    phi = table_observable(P, rng.standard_normal(8))
    cc = center_observable(phi, dens)
    assert abs(np.sum(cc.values * dens) / 8) <= 1e-12


def test_observable_pointwise_and_bound():
    P = UlamPartition(Rectangle((0.0,), (1.0,)), (4,))
    d = digit_observable(P)
    assert d.bound == 0.5
    np.testing.assert_array_equal(d(np.array([[0.1], [0.9]])), [-0.5, 0.5])
    s = d.scaled(2.0)
    np.testing.assert_array_equal(s(np.array([[0.9]])), [1.0])
