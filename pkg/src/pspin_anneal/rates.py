"""Entropy-weighted escape exponents out of the metastable well.

Free energies are per spin, ``F = beta * E - Q_k``, so a configuration has
Boltzmann weight ``exp(-N F)``.  All actions are measured relative to the
free-energy minimum of the metastable (left) well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq, minimize_scalar

from .errors import InfeasibleError, NoTransitionError
from .model import (
    AnnealPoint,
    PotentialSpec,
    effective_potential,
    effective_potential_dk,
    effective_potential_dq,
    entropy_classical,
    entropy_k,
    k_star,
    landscape,
    potential,
)
from .wkb import barrier_action, segment_integrals

QUANTUM = "quantum-tunneling"
CLASSICAL = "classical-over-barrier"

LEFT, RIGHT = "left", "right"


@dataclass(frozen=True)
class FreeEnergyWell:
    well: str
    k_min: float
    q: float
    E: float
    F: float


@dataclass(frozen=True)
class RateResult:
    """Per-spin escape exponent: the rate scales as ``exp(-N * sigma_opt)``.

    ``optimizer`` is ``(k, E)`` for tunneling and ``(k, q)`` of the free-energy
    saddle for the classical Glauber estimate.
    """

    sigma_opt: float
    mechanism: str
    optimizer: tuple
    constrained: bool = False
    beta: float = math.inf
    s: float = 0.0


# ---------------------------------------------------------------------------
# cached per-(spec, s) tables of well geometry on a k grid


@lru_cache(maxsize=512)
def cached_k_star(spec: PotentialSpec, s: float) -> Optional[float]:
    return k_star(spec, s)


def _k_grid(k_hi: float, n: int) -> np.ndarray:
    ks = np.concatenate([np.linspace(0.0, k_hi, n), k_hi * np.geomspace(1e-12, 1e-2, 40)])
    return np.unique(ks)


@dataclass(frozen=True)
class _Table:
    k: np.ndarray
    qL: np.ndarray
    EL: np.ndarray
    qT: np.ndarray
    ET: np.ndarray
    qR: np.ndarray
    ER: np.ndarray
    two: np.ndarray


@lru_cache(maxsize=256)
def _table(spec: PotentialSpec, s: float, k_hi: float, n: int) -> _Table:
    ks = _k_grid(k_hi, n)
    cols = np.full((6, ks.size), np.nan)
    for i, k in enumerate(ks):
        land = landscape(spec, float(k), s)
        cols[0, i], cols[1, i] = land.left_min
        if land.two_wells:
            cols[2, i], cols[3, i] = land.barrier_top
            cols[4, i], cols[5, i] = land.right_min
    two = np.isfinite(cols[4])
    for arr in (ks, cols, two):
        arr.setflags(write=False)
    return _Table(ks, *cols, two)


def _well_energy(spec, s, k, well):
    land = landscape(spec, k, s)
    if well == LEFT:
        return land.left_min
    return land.right_min  # None if the right well is gone


# ---------------------------------------------------------------------------
# free energies of the two wells


def well_free_energy(spec: PotentialSpec, point: AnnealPoint, well: str, n_k: int = 257) -> FreeEnergyWell:
    """Minimize ``beta * E_well(k) - Q_k`` over the sector parameter ``k``.

    The right well is searched only on ``[0, k_*]`` where it exists.
    """
    s, beta = point.s, point.beta
    if well not in (LEFT, RIGHT):
        raise ValueError(f"well must be {LEFT!r} or {RIGHT!r}")
    if well == RIGHT:
        kst = cached_k_star(spec, s)
        if kst is None:
            raise InfeasibleError(f"no ground-state well at s={s}")
        k_hi = kst
    else:
        k_hi = 0.5

    if math.isinf(beta):
        e = _well_energy(spec, s, 0.0, well)
        F = math.copysign(math.inf, e.U) if e.U != 0 else 0.0
        return FreeEnergyWell(well, 0.0, e.q, e.U, F)

    tab = _table(spec, s, k_hi, n_k)
    E = tab.EL if well == LEFT else tab.ER
    ok = np.isfinite(E)
    ks, E = tab.k[ok], E[ok]
    F = beta * E - entropy_k(ks)
    i = int(np.argmin(F))

    def objective(k):
        e = _well_energy(spec, s, k, well)
        if e is None:
            return math.inf
        return beta * e.U - entropy_k(k)

    best_k, best_F = float(ks[i]), float(F[i])
    lo, hi = ks[max(i - 1, 0)], ks[min(i + 1, ks.size - 1)]
    if hi > lo:
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 + 1e-9 * hi})
        if res.fun < best_F:
            best_k, best_F = float(res.x), float(res.fun)
    e = _well_energy(spec, s, best_k, well)
    return FreeEnergyWell(well, best_k, e.q, e.U, best_F)


def free_energy_gap(spec: PotentialSpec, point: AnnealPoint) -> float:
    """``F_R - F_L``: positive while the metastable well dominates."""
    return well_free_energy(spec, point, RIGHT).F - well_free_energy(spec, point, LEFT).F


# ---------------------------------------------------------------------------
# zero-temperature transition point and critical line


def _k0_well_gap(spec, s):
    land = landscape(spec, 0.0, s)
    if not land.two_wells:
        return None
    return land.left_min.U - land.right_min.U


@lru_cache(maxsize=1024)
def qpt_point(spec: PotentialSpec, tol: float = 1e-15) -> float:
    """Anneal coordinate where the two ``k=0`` well bottoms are degenerate.

    Scanned in ``1 - s`` on a log grid from ``s = 1`` downward (near-degenerate
    cubics put the transition extremely close to 1), then refined by Brent.
    """
    ts = np.geomspace(1e-10, 1.0, 241)
    prev_t, prev_g = 0.0, _k0_well_gap(spec, 1.0)
    if prev_g is None or prev_g <= 0:
        raise NoTransitionError("ground state at s=1 is not in the right well")
    for t in ts:
        g = _k0_well_gap(spec, 1.0 - t)
        if g is None:
            # the coexistence window may be narrower than the scan step
            s_edge = _coexistence_edge(spec, 1.0 - t, 1.0 - prev_t)
            g_edge = _k0_well_gap(spec, s_edge)
            if g_edge is not None and g_edge < 0:
                return brentq(lambda s: _k0_well_gap(spec, s), s_edge, 1.0 - prev_t, xtol=tol, rtol=1e-15)
            break
        if g < 0:
            s_lo, s_hi = 1.0 - t, 1.0 - prev_t
            return brentq(lambda s: _k0_well_gap(spec, s), s_lo, s_hi, xtol=tol, rtol=1e-15)
        prev_t, prev_g = t, g
    raise NoTransitionError(f"no zero-temperature transition found for {spec}")


def _coexistence_edge(spec, s_single, s_double, tol=1e-14):
    """Smallest ``s`` in ``(s_single, s_double]`` with two wells at ``k=0``."""
    while s_double - s_single > tol:
        mid = 0.5 * (s_single + s_double)
        if landscape(spec, 0.0, mid).two_wells:
            s_double = mid
        else:
            s_single = mid
    return s_double


def critical_line(spec: PotentialSpec, s: float, rtol: float = 1e-10) -> float:
    """Inverse temperature ``beta_PT(s)`` of equal well free energies.

    ``inf`` at the zero-temperature transition; raises ``NoTransitionError``
    for ``s`` below it.
    """
    gap0 = _k0_well_gap(spec, s)
    if gap0 is None or gap0 < 0:
        raise NoTransitionError(f"s={s} below the zero-temperature transition")
    if gap0 == 0:
        return math.inf

    def g(beta):
        return -free_energy_gap(spec, AnnealPoint(s, beta))

    lo, hi = 0.0, 1.0
    while g(hi) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return math.inf
    return brentq(g, lo, hi, rtol=rtol, xtol=1e-14)


# ---------------------------------------------------------------------------
# quantum tunneling optimum


def _U_raw(spec, s, k, q):
    a = 1.0 - 2.0 * k
    return s * np.asarray(potential(spec, np.clip(q, -1.0, 1.0))) - 0.5 * (1.0 - s) * np.sqrt(
        np.maximum(a * a - q * q, 0.0)
    )


def _level_crossing(spec, s, k, E, lo, hi, iters=64):
    """Vectorized bisection for ``U(k, q) = E`` with the root bracketed by lo/hi."""
    lo = np.broadcast_to(lo, np.broadcast(lo, E).shape).copy()
    hi = np.broadcast_to(hi, lo.shape).copy()
    g_lo = _U_raw(spec, s, k, lo) - E
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g_mid = _U_raw(spec, s, k, mid) - E
        same = np.sign(g_mid) == np.sign(g_lo)
        lo = np.where(same, mid, lo)
        g_lo = np.where(same, g_mid, g_lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


_T_GRID = np.unique(np.concatenate([np.linspace(0.0, 1.0, 41), np.geomspace(1e-9, 1e-2, 8)]))


def _sigma_grid(spec, s, tab, idx, n_quad):
    """sigma(k, E) on the feasible energy window of each k in ``idx``."""
    k = tab.k[idx][:, None]
    lo = np.maximum(tab.EL[idx], tab.ER[idx])[:, None]
    hi = tab.ET[idx][:, None]
    E = lo + (hi - lo) * _T_GRID
    qa = _level_crossing(spec, s, k, E, tab.qL[idx][:, None], tab.qT[idx][:, None])
    qb = _level_crossing(spec, s, k, E, tab.qT[idx][:, None], tab.qR[idx][:, None])
    sig, _ = segment_integrals(spec, s, k, E, qa, qb, n_quad)
    sig[:, -1] = 0.0
    return E, sig


def _sigma_scalar(spec, s, k, E, land, n_quad=128):
    top = land.barrier_top
    if E >= top.U:
        return 0.0
    qa = brentq(lambda q: effective_potential(spec, k, q, s) - E, land.left_min.q, top.q, xtol=1e-15)
    qb = brentq(lambda q: effective_potential(spec, k, q, s) - E, top.q, land.right_min.q, xtol=1e-15)
    sig, _ = segment_integrals(spec, s, k, E, qa, qb, n_quad)
    return float(sig)


def _best_energy(spec, s, beta, k, land, n_e=17):
    """Minimize sigma + beta E over the feasible window at fixed k."""
    lo = max(land.left_min.U, land.right_min.U)
    hi = land.barrier_top.U
    if hi <= lo:
        return hi, beta * hi, True
    Es = lo + (hi - lo) * _T_GRID[:: max(1, _T_GRID.size // n_e)]
    Es = np.unique(np.append(Es, hi))
    vals = [_sigma_scalar(spec, s, k, E, land) + beta * E for E in Es]
    j = int(np.argmin(vals))
    best_E, best = float(Es[j]), float(vals[j])
    if j < Es.size - 1:
        a, b = Es[max(j - 1, 0)], Es[j + 1]
        res = minimize_scalar(
            lambda E: _sigma_scalar(spec, s, k, E, land) + beta * E,
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-13 * max(1.0, abs(hi)) + 1e-9 * (b - a)},
        )
        if res.fun < best:
            best_E, best = float(res.x), float(res.fun)
    top_val = beta * hi
    # ties go to the over-barrier channel
    if top_val <= best:
        return hi, top_val, True
    return best_E, best, False


def optimal_quantum_action(
    spec: PotentialSpec, point: AnnealPoint, n_k: int = 512, n_quad: int = 96, polish: bool = True
) -> RateResult:
    """Thermally averaged tunneling exponent out of the metastable well.

    Minimizes ``sigma_WKB(k, E) + beta E - Q_k - F_L`` over ``k in [0, k_*]``
    and ``max(E_L(k), E_R(k)) <= E <= E_top(k)``.  When the optimum sits at the
    barrier top the escape is reported as over-the-barrier.
    """
    s, beta = point.s, point.beta
    land0 = landscape(spec, 0.0, s)
    if not land0.two_wells or s >= 1.0:
        raise InfeasibleError(f"tunneling needs two coexisting wells and s<1 (s={s})")

    if math.isinf(beta):
        E_L, E_R = land0.left_min.U, land0.right_min.U
        if E_R - E_L > 1e-11 * max(1.0, abs(E_L)):
            return RateResult(math.inf, QUANTUM, (0.0, E_R), True, beta, s)
        E = max(E_L, E_R)  # equal up to round-off at the transition point
        sigma = barrier_action(spec, 0.0, E, point)
        return RateResult(sigma, QUANTUM, (0.0, E), E > E_L, beta, s)

    kst = cached_k_star(spec, s)
    tab = _table(spec, s, kst, n_k)
    idx = np.nonzero(tab.two)[0]
    E, sig = _sigma_grid(spec, s, tab, idx, n_quad)
    J = sig + beta * E - entropy_k(tab.k[idx])[:, None]
    i, j = np.unravel_index(int(np.argmin(J)), J.shape)
    best_k, best_E, best_J = float(tab.k[idx][i]), float(E[i, j]), float(J[i, j])
    top = j == E.shape[1] - 1

    if polish:

        def inner(k):
            land = landscape(spec, k, s)
            if not land.two_wells:
                return math.inf, None, True
            e, v, at_top = _best_energy(spec, s, beta, k, land)
            return v - entropy_k(k), e, at_top

        # the coarse energy grid biases the k profile by a cell or two
        klo = float(tab.k[idx][max(i - 3, 0)])
        khi = float(tab.k[idx][min(i + 3, idx.size - 1)])
        if khi > klo:
            res = minimize_scalar(
                lambda k: inner(k)[0], bounds=(klo, khi), method="bounded", options={"xatol": 1e-10 + 1e-8 * khi}
            )
            cands = [(res.x, *inner(float(res.x)))]
        else:
            cands = []
        cands.append((best_k, *inner(best_k)))
        # both candidates are re-evaluated with the finer quadrature
        k_c, J_c, E_c, top_c = min(cands, key=lambda c: c[1])
        best_k, best_J, best_E, top = float(k_c), float(J_c), float(E_c), bool(top_c)

    F_L = well_free_energy(spec, point, LEFT).F
    land = landscape(spec, best_k, s)
    constrained = (not top) and land.right_min.U > land.left_min.U and abs(best_E - land.right_min.U) <= 1e-9 * max(
        1.0, abs(best_E)
    )
    mech = CLASSICAL if top else QUANTUM
    return RateResult(max(best_J - F_L, 0.0), mech, (best_k, best_E), constrained, beta, s)


# ---------------------------------------------------------------------------
# classical Glauber escape: lowest saddle of F(k, q) = beta U - Q_k


def _unit_x(n):
    core = np.linspace(-1.0, 1.0, n // 2 + 1)[1:-1]
    edge = np.tanh(np.linspace(-15.0, 15.0, n // 2))
    x = np.unique(np.concatenate([core, edge]))
    return x[np.abs(x) < 1.0]


def _free_energy_grid(spec, s, beta, ks, xs):
    a = (1.0 - 2.0 * ks)[:, None]
    q = a * xs[None, :]
    U = _U_raw(spec, s, ks[:, None], q)
    return beta * U - entropy_k(ks)[:, None], q


def _nearest(ks, xs, k, q):
    i = int(np.argmin(np.abs(ks - k)))
    a = 1.0 - 2.0 * ks[i]
    j = int(np.argmin(np.abs(a * xs - q))) if a > 0 else xs.size // 2
    return i, j


def _minimax_level(F, seed_a, seed_b):
    """Lowest level at which the sublevel set of F connects two grid cells."""
    vals = np.unique(F.ravel())
    lo = np.searchsorted(vals, max(F[seed_a], F[seed_b]))
    hi = vals.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        lab, _ = ndimage.label(F <= vals[mid])
        if lab[seed_a] == lab[seed_b] and lab[seed_a] != 0:
            hi = mid
        else:
            lo = mid + 1
    return float(vals[lo])


def _newton_saddle(spec, s, beta, k0, q0, iters=50):
    k, q = k0, q0
    for _ in range(iters):
        a = 1.0 - 2.0 * k
        if not (0.0 < k < 0.5) or abs(q) >= a:
            return None
        w = math.sqrt(a * a - q * q)
        Fk = beta * effective_potential_dk(spec, k, q, s) - math.log((1.0 - k) / k)
        Fq = beta * effective_potential_dq(spec, k, q, s, 1)
        Hqq = beta * effective_potential_dq(spec, k, q, s, 2)
        Hkk = beta * 2.0 * (1.0 - s) * q * q / w**3 + 1.0 / (k * (1.0 - k))
        Hkq = beta * (1.0 - s) * a * q / w**3
        det = Hkk * Hqq - Hkq * Hkq
        if det == 0:
            return None
        dk = (Hqq * Fk - Hkq * Fq) / det
        dq = (Hkk * Fq - Hkq * Fk) / det
        k, q = k - dk, q - dq
        if abs(dk) < 1e-14 and abs(dq) < 1e-14:
            if det < 0:  # indefinite Hessian: a genuine saddle
                return k, q
            return None
    return None


def _profile_s1(spec, beta):
    """Classical escape at s=1, where the free energy is ``G(q) = beta f(q) - Q_cl(q)``.

    Any path between the basins crosses every intermediate ``q``, so the
    exponent is the 1-D minimax: the highest ``G`` between the metastable
    minimum (``q <= q_max``) and the ground-state minimum (``q >= q_max``).
    """

    def G(q):
        return beta * np.asarray(potential(spec, q)) - entropy_classical(q)

    qs = np.unique(np.concatenate([np.linspace(-1.0, 1.0, 4097), np.tanh(np.linspace(-18.0, 18.0, 512))]))
    g = G(qs)
    split = np.searchsorted(qs, spec.q_max)

    def polish(i, sign, lo_idx=0, hi_idx=qs.size - 1):
        a, b = qs[max(i - 1, lo_idx)], qs[min(i + 1, hi_idx)]
        best_q, best = float(qs[i]), sign * float(g[i])
        if b > a:
            res = minimize_scalar(lambda q: sign * float(G(q)), bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-14})
            if res.fun < best:
                best_q, best = float(res.x), float(res.fun)
        return best_q, sign * best

    iL = int(np.argmin(g[:split]))
    iR = split + int(np.argmin(g[split:]))
    iT = iL + int(np.argmax(g[iL : iR + 1]))
    qL, gL = polish(iL, 1.0, 0, split - 1)
    qT, gT = polish(iT, -1.0, iL, iR)
    return max(gT - gL, 0.0), qT


def classical_escape_action(spec: PotentialSpec, point: AnnealPoint, n_grid: int = 512) -> RateResult:
    """Over-the-barrier Glauber escape exponent (spin ``k`` not conserved).

    The exponent is the minimax level of ``F(k, q) = beta U(k, q) - Q_k`` on
    paths from the metastable free-energy minimum to the ground-state one,
    minus ``F_L``.  The grid level is polished by Newton iteration on the
    interior saddle when one exists.
    """
    s, beta = point.s, point.beta
    if math.isinf(beta):
        return RateResult(math.inf, CLASSICAL, (0.0, float("nan")), False, beta, s)
    if s == 1.0:
        sigma, qT = _profile_s1(spec, beta)
        return RateResult(sigma, CLASSICAL, ((1.0 - qT) / 2.0, qT), False, beta, s)
    wl = well_free_energy(spec, point, LEFT)
    wr = well_free_energy(spec, point, RIGHT)
    ks = np.unique(np.concatenate([np.linspace(0.0, 0.5, n_grid), np.geomspace(1e-12, 1e-2, 24), [wl.k_min, wr.k_min]]))
    xs = _unit_x(n_grid)
    F, Q = _free_energy_grid(spec, s, beta, ks, xs)
    seed_l = _nearest(ks, xs, wl.k_min, wl.q)
    seed_r = _nearest(ks, xs, wr.k_min, wr.q)
    level = _minimax_level(F, seed_l, seed_r)
    # the grid cell realizing the level that is neither endpoint
    cells = np.argwhere(F == level)
    i, j = cells[0]
    k_s, q_s = float(ks[i]), float(Q[i, j])
    if (i, j) not in (seed_l, seed_r):
        sad = _newton_saddle(spec, s, beta, k_s, q_s)
        if sad is not None:
            k_n, q_n = sad
            F_n = beta * effective_potential(spec, k_n, q_n, s) - entropy_k(k_n)
            # accept only the saddle next to the grid cell that set the level
            near = abs(k_n - k_s) < 0.02 and abs(q_n - q_s) < 0.05
            if near and abs(F_n - level) < 1e-2 * max(1.0, abs(level)):
                level, k_s, q_s = F_n, k_n, q_n
    level = max(level, wr.F)
    return RateResult(max(level - wl.F, 0.0), CLASSICAL, (k_s, q_s), False, beta, s)


def bounding_lines(spec: PotentialSpec, s: float, beta: float) -> tuple[float, float]:
    """Linear-in-beta over-barrier costs: along ``k = 0`` and across the merge point ``k_*``.

    The first is the zero-entropy escape ``beta (E_top(0) - E_L(0))``; the
    second starts from the maximum-entropy metastable state ``k = 1/2`` and
    crosses where the right well merges with the barrier top.
    """
    land0 = landscape(spec, 0.0, s)
    line0 = beta * (land0.barrier_top.U - land0.left_min.U)
    kst = cached_k_star(spec, s)
    land_star = landscape(spec, kst, s)
    E_star = land_star.barrier_top.U if land_star.two_wells else land_star.left_min.U
    E_half = effective_potential(spec, 0.5, 0.0, s)
    ridge = beta * (E_star - E_half) + math.log(2.0) - entropy_k(kst)
    return line0, ridge
