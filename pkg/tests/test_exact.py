import math
from functools import reduce

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import logsumexp

from pspin_anneal import (
    DomainError,
    InfeasibleError,
    PotentialSpec,
    build_sector,
    doublet_gap,
    initial_final_overlap,
    potential,
    qpt_point,
    sector_spectrum,
    thermal_occupations,
    wkb_scaling_check,
)
from pspin_anneal.exact import (
    avoided_crossing,
    gibbs_occupations,
    log_sector_degeneracy,
    sector_degeneracy,
    thermal_spectrum,
)

SPEC = PotentialSpec.cubic(0.0, 0.533)
S = 0.85


def _full_hamiltonian(N, spec, s):
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    eye = np.eye(2)
    Sx = sum(reduce(np.kron, [sx if i == j else eye for j in range(N)]) for i in range(N)) / 2
    ups = np.array([bin(b).count("1") for b in range(2**N)])
    q = (2 * ups - N) / N
    return np.diag(s * N * potential(spec, q)) - (1 - s) * Sx, q


# --- sectors ----------------------------------------------------------------


def test_two_spin_example():
    m = build_sector(2, 0, SPEC, 0.0)
    assert m.dim == 3
    assert sector_spectrum(m)[0] == pytest.approx(-1.0)
    np.testing.assert_allclose(sector_spectrum(m), [-1.0, 0.0, 1.0], atol=1e-14)


def test_classical_limit_is_diagonal():
    N = 20
    m = build_sector(N, 0, SPEC, 1.0)
    assert np.all(m.offdiagonal == 0)
    M = np.arange(-N / 2, N / 2 + 1)
    np.testing.assert_allclose(m.diagonal, N * potential(SPEC, 2 * M / N), atol=1e-13)


def test_transverse_field_only_spectrum():
    m = build_sector(12, 2, SPEC, 0.0)
    np.testing.assert_allclose(sector_spectrum(m), np.arange(-4, 5), atol=1e-12)


def test_degeneracy_examples():
    assert sector_degeneracy(4, 0) == 1
    assert sector_degeneracy(4, 1) == 3
    assert sector_degeneracy(4, 2) == 2
    with pytest.raises(DomainError):
        sector_degeneracy(4, 3)
    with pytest.raises(DomainError):
        build_sector(5, -1, SPEC, 0.5)


@pytest.mark.parametrize("N", [1, 2, 7, 30, 60])
def test_state_count_exact(N):
    total = sum(sector_degeneracy(N, K) * (N - 2 * K + 1) for K in range(N // 2 + 1))
    assert total == 2**N


@pytest.mark.parametrize("N", [61, 100, 400, 2000])
def test_state_count_log_space(N):
    terms = [log_sector_degeneracy(N, K) + math.log(N - 2 * K + 1) for K in range(N // 2 + 1)]
    assert logsumexp(terms) == pytest.approx(N * math.log(2), rel=1e-12)
    assert build_sector(N, 3, SPEC, 0.5).degeneracy is None


@given(st.integers(1, 60), st.data())
def test_log_degeneracy_consistent(N, data):
    K = data.draw(st.integers(0, N // 2))
    assert log_sector_degeneracy(N, K) == pytest.approx(math.log(sector_degeneracy(N, K)), abs=1e-9)


def test_tridiagonal_matches_dense_solver():
    m = build_sector(8, 0, SPEC, S)
    np.testing.assert_allclose(sector_spectrum(m), np.linalg.eigvalsh(m.dense()), atol=1e-10)


@pytest.mark.parametrize("s", [0.3, S, 0.97])
def test_sector_union_reproduces_full_hilbert_space(s):
    N = 8
    H, _ = _full_hamiltonian(N, SPEC, s)
    full = np.linalg.eigvalsh(H)
    parts = []
    for K in range(N // 2 + 1):
        m = build_sector(N, K, SPEC, s)
        parts.append(np.repeat(sector_spectrum(m), m.degeneracy))
    np.testing.assert_allclose(np.sort(np.concatenate(parts)), full, atol=1e-10)


def test_symmetric_sector_levels_never_cross():
    N = 40
    for s in np.linspace(0.0, 0.99, 100):
        w = sector_spectrum(build_sector(N, 0, SPEC, float(s)))
        assert np.min(np.diff(w)) > 0


# --- tunneling splitting ----------------------------------------------------


def test_extended_precision_gap_agrees_with_double_when_resolvable():
    N = 20
    w = sector_spectrum(build_sector(N, 0, SPEC, 0.75), select=(0, 1))
    assert float(doublet_gap(N, SPEC, 0.75)) == pytest.approx(w[1] - w[0], rel=1e-9)


def test_extended_precision_gap_below_double_resolution():
    spec = PotentialSpec.cubic(0.0, 0.2)
    N = 300
    s_q = qpt_point(spec)
    c = avoided_crossing(N, spec, s_q - 0.316 / N, window=4 / N)
    levels = sector_spectrum(build_sector(N, 0, spec, c.s), select=(0, 1))
    assert 0 < c.gap < np.spacing(abs(levels[0]))
    # the crossing is a minimum in s
    h = 1e-9
    assert doublet_gap(N, spec, c.s - h) > c.gap
    assert doublet_gap(N, spec, c.s + h) > c.gap
    # and stable with respect to the working precision
    assert float(doublet_gap(N, spec, c.s, dps=80)) == pytest.approx(c.gap, rel=1e-8)


def test_barrier_free_splitting_flagged():
    spec = PotentialSpec.cubic(0.0, 0.2)
    chk = wkb_scaling_check(spec, s=0.2, N_list=(20, 30, 40, 50), locate_crossing=False)
    assert chk.flagged
    assert math.isnan(chk.sigma_wkb)


def test_scaling_slope_grows_with_barrier():
    slopes = []
    for q_max in (0.12, 0.16, 0.2):
        chk = wkb_scaling_check(PotentialSpec.cubic(0.0, q_max), N_list=(40, 60, 80, 100))
        assert not chk.flagged
        slopes.append(chk.slope)
    assert slopes[0] > slopes[1] > slopes[2]


def test_scaling_check_validates_input():
    with pytest.raises(DomainError):
        wkb_scaling_check(SPEC, N_list=(10, 20, 30))
    with pytest.raises(DomainError):
        wkb_scaling_check(SPEC, N_list=(40, 30, 20, 10))


# --- thermal occupations ----------------------------------------------------


def test_thermal_spectrum_counts_every_state():
    ts = thermal_spectrum(SPEC, S, 12)
    assert logsumexp(ts.log_degeneracy) == pytest.approx(12 * math.log(2), rel=1e-13)


def test_infinite_temperature_occupations_count_states():
    ts = thermal_spectrum(SPEC, S, 12)
    occ = thermal_occupations(SPEC, S, 0.0, 12)
    n_left = np.exp(ts.log_degeneracy[ts.left]).sum()
    assert occ.P_L == pytest.approx(n_left / 2**12, rel=1e-12)
    assert occ.P_L + occ.P_R == pytest.approx(1.0, abs=1e-14)


def test_zero_temperature_occupies_ground_well():
    occ = thermal_occupations(SPEC, S, math.inf, 40)
    assert occ.P_R == 1.0 and occ.P_L == 0.0


def test_occupations_invariant_under_energy_shift():
    ts = thermal_spectrum(SPEC, S, 30)
    a = gibbs_occupations(ts.energies, ts.log_degeneracy, ts.left, 0.2)
    b = gibbs_occupations(ts.energies + 1234.5, ts.log_degeneracy, ts.left, 0.2)
    assert a.P_L == pytest.approx(b.P_L, rel=1e-9)
    assert a.log_ratio == pytest.approx(b.log_ratio, rel=1e-9)


@pytest.mark.parametrize("beta", [0.5, 4.0])
def test_thermal_magnetization_matches_full_hilbert_space(beta):
    N = 10
    H, q = _full_hamiltonian(N, SPEC, S)
    w, v = np.linalg.eigh(H)
    p = np.exp(-beta * (w - w.min()))
    q_full = np.sum(p * ((v * v).T @ q)) / p.sum()
    ts = thermal_spectrum(SPEC, S, N)
    logw = ts.log_degeneracy - beta * (ts.energies - ts.energies.min())
    q_sec = np.sum(np.exp(logw - logsumexp(logw)) * ts.mean_q)
    assert q_sec == pytest.approx(q_full, abs=1e-10)


def test_occupations_need_a_barrier():
    with pytest.raises(InfeasibleError):
        thermal_occupations(SPEC, 0.3, 1.0, 20)


# --- overlap ----------------------------------------------------------------


def test_overlap_examples():
    assert initial_final_overlap(10, 0) == pytest.approx(2**-5)
    assert initial_final_overlap(4, 2) == pytest.approx(math.sqrt(6 / 16))
    with pytest.raises(DomainError):
        initial_final_overlap(10, 6)


def test_overlap_large_n_is_finite():
    val = initial_final_overlap(2000, 1000)
    expected = math.exp(0.5 * (float(mpmath.log(mpmath.binomial(2000, 1000))) - 2000 * math.log(2)))
    assert val == pytest.approx(expected, rel=1e-10)
