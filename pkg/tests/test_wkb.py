import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from pspin_anneal import (
    AnnealPoint,
    DomainError,
    PotentialSpec,
    barrier_action,
    barrier_segment,
    effective_potential,
    landscape,
    momentum,
    period,
    potential,
    turning_points,
    wkb_state,
)
from pspin_anneal.wkb import segment_integrals

SPEC = PotentialSpec.cubic(0.0, 0.533)
S = 0.85
POINT = AnnealPoint(S)
LAND = landscape(SPEC, 0.0, S)


def _u(spec, k, q, E, s):
    a = 1 - 2 * k
    return 2 * (s * potential(spec, q) - E) / ((1 - s) * math.sqrt(a * a - q * q))


def test_momentum_band_extremes():
    # u = +1: bottom of the lower band, zero momentum
    st0 = wkb_state(SPEC, 0.0, -0.5, AnnealPoint(0.0))
    assert momentum(st0, 0.0) == pytest.approx(0.0, abs=1e-7)
    # u = -1: top of the upper band, momentum pi
    st1 = wkb_state(SPEC, 0.0, 0.5, AnnealPoint(0.0))
    assert momentum(st1, 0.0) == pytest.approx(math.pi, abs=1e-7)


def test_momentum_under_barrier_is_arccosh():
    E = 0.5 * (LAND.left_min.U + LAND.barrier_top.U)
    state = wkb_state(SPEC, 0.0, E, POINT)
    seg = barrier_segment(SPEC, 0.0, E, POINT)
    for q in np.linspace(seg.q_L, seg.q_R, 12)[1:-1]:
        p = momentum(state, q)
        assert p.real == 0.0
        assert p.imag == pytest.approx(math.acosh(_u(SPEC, 0.0, q, E, S)), rel=1e-13)


def test_momentum_at_turning_point_vanishes():
    E = 0.5 * (LAND.left_min.U + LAND.barrier_top.U)
    state = wkb_state(SPEC, 0.0, E, POINT)
    seg = barrier_segment(SPEC, 0.0, E, POINT)
    assert abs(momentum(state, seg.q_L)) < 1e-6
    assert abs(momentum(state, seg.q_R)) < 1e-6


def test_momentum_domain_errors():
    state = wkb_state(SPEC, 0.1, -0.1, POINT)
    with pytest.raises(DomainError):
        momentum(state, 0.8)
    with pytest.raises(DomainError):
        momentum(wkb_state(SPEC, 0.0, -0.1, AnnealPoint(1.0)), 0.0)


def _dense_turning_points(spec, k, E, s, n=2_000_001):
    a = 1 - 2 * k
    qs = np.linspace(-a, a, n)[1:-1]
    w = np.sqrt(a * a - qs * qs)
    u = 2 * (s * potential(spec, qs) - E) / ((1 - s) * w)
    g = np.abs(u) - 1
    idx = np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]
    return qs[idx]


@pytest.mark.parametrize("frac", [0.2, 0.5, 0.9])
def test_turning_points_match_dense_grid(frac):
    E = LAND.left_min.U + frac * (LAND.barrier_top.U - LAND.left_min.U)
    tp = turning_points(SPEC, 0.0, E, POINT)
    oracle = _dense_turning_points(SPEC, 0.0, E, S)
    assert len(tp) == len(oracle) == 4
    np.testing.assert_allclose(tp, oracle, atol=2e-6)
    seg = barrier_segment(SPEC, 0.0, E, POINT)
    assert seg.q_L == pytest.approx(tp[1], abs=1e-12)
    assert seg.q_R == pytest.approx(tp[2], abs=1e-12)


def test_turning_points_degenerate_at_well_bottom():
    E = LAND.left_min.U
    tp = turning_points(SPEC, 0.0, E, POINT)
    assert tp.count(LAND.left_min.q) == 2


def test_no_forbidden_segment_above_barrier():
    E = LAND.barrier_top.U + 1e-3
    assert barrier_segment(SPEC, 0.0, E, POINT) is None
    val, info = barrier_action(SPEC, 0.0, E, POINT, full_output=True)
    assert val == 0.0 and info["over_barrier"]


def test_energy_below_a_well_rejected():
    with pytest.raises(DomainError):
        barrier_segment(SPEC, 0.0, LAND.right_min.U - 1e-3, POINT)


def test_action_examples():
    assert barrier_action(SPEC, 0.0, LAND.barrier_top.U, POINT) == 0.0
    assert math.isinf(barrier_action(SPEC, 0.0, -0.1, AnnealPoint(1.0)))
    sigma = barrier_action(SPEC, 0.0, LAND.left_min.U, POINT)
    assert sigma == pytest.approx(0.87902, abs=5e-5)


@pytest.mark.parametrize("k,frac", [(0.0, 0.0), (0.0, 0.4), (0.08, 0.3), (0.14, 0.7)])
def test_action_matches_adaptive_quadrature(k, frac):
    land = landscape(SPEC, k, S)
    E = max(land.left_min.U, land.right_min.U) + frac * (land.barrier_top.U - max(land.left_min.U, land.right_min.U))
    seg = barrier_segment(SPEC, k, E, POINT)

    def integrand(q):
        return math.acosh(max(_u(SPEC, k, q, E, S), 1.0))

    ref, _ = quad(integrand, seg.q_L, seg.q_R, epsabs=1e-13, epsrel=1e-12, limit=500)
    assert barrier_action(SPEC, k, E, POINT) == pytest.approx(ref, rel=1e-9)


def test_quadrature_converged():
    E = LAND.left_min.U
    seg = barrier_segment(SPEC, 0.0, E, POINT)
    a = segment_integrals(SPEC, S, 0.0, E, seg.q_L, seg.q_R, n=256)
    b = segment_integrals(SPEC, S, 0.0, E, seg.q_L, seg.q_R, n=512)
    assert a[0] == pytest.approx(b[0], rel=1e-10)


@given(st.floats(0.0, 0.14), st.floats(0.02, 0.98), st.floats(0.001, 0.05))
def test_action_decreases_with_energy(k, frac, step):
    land = landscape(SPEC, k, S)
    lo = max(land.left_min.U, land.right_min.U)
    width = land.barrier_top.U - lo
    E1 = lo + frac * width
    E2 = min(E1 + step * width, land.barrier_top.U)
    assert barrier_action(SPEC, k, E2, POINT) < barrier_action(SPEC, k, E1, POINT)


@given(st.floats(0.0, 0.12), st.floats(0.001, 0.02))
def test_action_increases_with_k_at_fixed_energy(k, dk):
    # at fixed E, raising k raises U everywhere and widens the forbidden region
    land = landscape(SPEC, k + dk, S)
    E = max(land.left_min.U, land.right_min.U) + 1e-4
    E = min(E, landscape(SPEC, k, S).barrier_top.U - 1e-4)
    assert barrier_action(SPEC, k + dk, E, POINT) > barrier_action(SPEC, k, E, POINT)


@pytest.mark.parametrize("k,frac", [(0.0, 0.1), (0.0, 0.5), (0.0, 0.9), (0.1, 0.5)])
def test_period_is_energy_derivative_of_action(k, frac):
    land = landscape(SPEC, k, S)
    lo = max(land.left_min.U, land.right_min.U)
    E = lo + frac * (land.barrier_top.U - lo)
    h = 1e-6
    fd = -(barrier_action(SPEC, k, E + h, POINT) - barrier_action(SPEC, k, E - h, POINT)) / (2 * h)
    T = period(SPEC, k, E, POINT)
    assert T > 0
    assert abs(T - fd) / T < 1e-4


def test_period_diverges_at_both_ends_with_interior_minimum():
    lo, top = LAND.left_min.U, LAND.barrier_top.U
    assert math.isinf(period(SPEC, 0.0, lo, POINT))
    near_bottom = [period(SPEC, 0.0, lo + d, POINT) for d in (1e-2, 1e-4, 1e-6)]
    assert near_bottom[0] < near_bottom[1] < near_bottom[2]
    Es = np.linspace(lo, top, 60)[1:-1]
    T = np.array([period(SPEC, 0.0, E, POINT) for E in Es])
    i = int(np.argmin(T))
    assert 0 < i
    assert period(SPEC, 0.0, top - 1e-9 * (top - lo), POINT) > T[i]
    with pytest.raises(DomainError):
        period(SPEC, 0.0, top + 1e-3, POINT)
