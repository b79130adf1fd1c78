"""Finite-N oracle: exact spin-sector Hamiltonians and their spectra.

The Hamiltonian ``H = s N f(2 S^z / N) - (1 - s) S^x`` commutes with the total
spin, so it splits into tridiagonal blocks labelled by ``K`` (total spin
``S = N/2 - K``), each appearing ``C(N, K) - C(N, K-1)`` times.

Tunneling splittings at the avoided crossing are far below double precision
for realistic barriers (``exp(-N sigma / 2)`` with ``N sigma ~ 100``), so the
doublet is refined in extended precision with a Sturm-sequence / Newton solver
on the same tridiagonal matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammaln, logsumexp
from scipy.stats import linregress

from .errors import DomainError, InfeasibleError
from .model import AnnealPoint, PotentialSpec, landscape, potential
from .rates import qpt_point
from .wkb import barrier_action

# exact integer degeneracies up to this N, log-gamma beyond
_EXACT_N = 60


@dataclass(frozen=True)
class SectorMatrix:
    """Tridiagonal block of total spin ``S = N/2 - K`` in the ``S^z`` basis.

    ``M`` runs from ``-S`` to ``S``; ``degeneracy`` is an exact integer for
    ``N <= 60`` and ``None`` beyond, where ``log_degeneracy`` is authoritative.
    """

    N: int
    K: int
    S: float
    diagonal: np.ndarray = field(repr=False)
    offdiagonal: np.ndarray = field(repr=False)
    degeneracy: Optional[int]
    log_degeneracy: float

    @property
    def dim(self) -> int:
        return self.diagonal.size

    @property
    def magnetization(self) -> np.ndarray:
        """``q = 2M/N`` for each basis state."""
        return 2.0 * (np.arange(self.dim) - self.S) / self.N

    def dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.offdiagonal, 1)
            + np.diag(self.offdiagonal, -1)
        )


def _check_sector(N: int, K: int) -> None:
    if int(N) != N or N < 1:
        raise DomainError(f"N={N} must be a positive integer")
    if int(K) != K or not 0 <= K <= N // 2:
        raise DomainError(f"K={K} outside 0..{N // 2}")


def sector_degeneracy(N: int, K: int) -> int:
    """Multiplicity ``C(N, K) - C(N, K - 1)`` of the spin ``N/2 - K`` block."""
    _check_sector(N, K)
    return math.comb(N, K) - (math.comb(N, K - 1) if K > 0 else 0)


def log_sector_degeneracy(N: int, K: int) -> float:
    _check_sector(N, K)
    # C(N,K) - C(N,K-1) = C(N,K) (N - 2K + 1) / (N - K + 1)
    log_c = gammaln(N + 1.0) - gammaln(K + 1.0) - gammaln(N - K + 1.0)
    return float(log_c + math.log((N - 2 * K + 1) / (N - K + 1)))


def build_sector(N: int, K: int, spec: PotentialSpec, s: float) -> SectorMatrix:
    """Block ``(N, K)`` of the Hamiltonian at anneal coordinate ``s``."""
    _check_sector(N, K)
    AnnealPoint(s)  # validates s
    S = N / 2.0 - K
    M = np.arange(-S, S + 0.5, 1.0)
    q = np.clip(2.0 * M / N, -1.0, 1.0)
    diag = s * N * np.asarray(potential(spec, q), dtype=float)
    Mo = M[:-1]
    off = -(1.0 - s) * 0.5 * np.sqrt(S * (S + 1.0) - Mo * (Mo + 1.0))
    deg = sector_degeneracy(N, K) if N <= _EXACT_N else None
    return SectorMatrix(int(N), int(K), S, diag, off, deg, log_sector_degeneracy(N, K))


def sector_spectrum(m: SectorMatrix, eigvecs: bool = False, select: Optional[tuple] = None):
    """Ascending eigenvalues (and eigenvectors as columns if requested).

    ``select=(i0, i1)`` restricts to eigenvalue indices ``i0..i1`` inclusive.
    """
    if m.dim == 1:
        w = m.diagonal.copy()
        return (w, np.ones((1, 1))) if eigvecs else w
    kw = {"select": "i", "select_range": select} if select is not None else {}
    return eigh_tridiagonal(m.diagonal, m.offdiagonal, eigvals_only=not eigvecs, **kw)


# --------------------------------------------------------------------------
# extended precision doublet


def _mp_sector(N: int, spec: PotentialSpec, s) -> tuple[list, list]:
    """K = 0 block entries as mpf lists: diagonal and squared off-diagonal."""
    S = mpmath.mpf(N) / 2
    s = mpmath.mpf(s)
    qmin, qmax, c = (mpmath.mpf(x) for x in (spec.q_min, spec.q_max, spec.c))
    b = (3 * qmax - qmin) / 2
    diag, off2 = [], []
    for j in range(N + 1):
        M = j - S
        q = 2 * M / N
        if spec.kind == "cubic":
            fq = -c * (q - qmin) ** 2 * (q - b)
        else:
            fq = q**spec.p
        diag.append(s * N * fq)
        if j < N:
            off2.append(((1 - s) / 2) ** 2 * (S * (S + 1) - M * (M + 1)))
    return diag, off2


def _sturm(diag, off2, E, tiny):
    """Negative-pivot count of ``H - E`` and ``d ln det(H - E) / dE``."""
    t = diag[0] - E
    dt = -1
    if t == 0:
        t = tiny
    neg = 1 if t < 0 else 0
    dlog = dt / t
    for d, b2 in zip(diag[1:], off2):
        r = b2 / t
        dt = -1 + r * dt / t
        t = d - E - r
        if t == 0:
            t = tiny
        if t < 0:
            neg += 1
        dlog += dt / t
    return neg, dlog


def _refine_eigenvalue(diag, off2, lo, hi, index, tol, tiny, max_iter=400):
    """Eigenvalue number ``index`` in ``(lo, hi)``, isolated by Sturm counts."""
    x = (lo + hi) / 2
    for _ in range(max_iter):
        neg, dlog = _sturm(diag, off2, x, tiny)
        if neg <= index:
            lo = x
        else:
            hi = x
        step = 1 / dlog if dlog != 0 else 0
        xn = x - step
        if not lo < xn < hi:
            xn = (lo + hi) / 2
        if abs(xn - x) <= tol or hi - lo <= tol:
            return xn
        x = xn
    return x


def doublet_gap(N: int, spec: PotentialSpec, s, dps: int = 60) -> "mpmath.mpf":
    """Gap between the two lowest ``K = 0`` levels to ``dps`` digits.

    ``s`` may be a float or an ``mpmath.mpf``; the matrix is built at the
    working precision so that splittings far below ``1e-16 N`` are resolved.
    """
    with mpmath.workdps(dps):
        m = build_sector(N, 0, spec, float(s))
        e01 = sector_spectrum(m, select=(0, 1))
        scale = max(1.0, float(np.max(np.abs(m.diagonal))))
        pad = mpmath.mpf(1e-9 * scale)
        diag, off2 = _mp_sector(N, spec, s)
        tiny = mpmath.mpf(10) ** (-2 * dps)
        tol = mpmath.mpf(10) ** (-(dps - 8)) * scale
        lo, hi = mpmath.mpf(e01[0]) - pad, mpmath.mpf(e01[1]) + pad
        while _sturm(diag, off2, lo, tiny)[0] > 0:
            lo -= pad * 1e3
        while _sturm(diag, off2, hi, tiny)[0] < 2:
            hi += pad * 1e3
        # split the pair so that each half holds exactly one level
        a, b = lo, hi
        while True:
            mid = (a + b) / 2
            neg = _sturm(diag, off2, mid, tiny)[0]
            if neg == 1:
                break
            if neg == 0:
                a = mid
            else:
                b = mid
            if b - a <= tol:  # numerically degenerate at this precision
                return mpmath.mpf(0)
        e0 = _refine_eigenvalue(diag, off2, lo, mid, 0, tol, tiny)
        e1 = _refine_eigenvalue(diag, off2, mid, hi, 1, tol, tiny)
        return e1 - e0


def _double_gap(N, spec, s):
    w = sector_spectrum(build_sector(N, 0, spec, s), select=(0, 1))
    return float(w[1] - w[0])


@dataclass(frozen=True)
class Crossing:
    N: int
    s: float
    gap: float
    log_gap: float


def avoided_crossing(N: int, spec: PotentialSpec, s_guess: float, window: float, dps: int = 60, rtol: float = 1e-6) -> Crossing:
    """Minimum over ``s`` of the lowest ``K = 0`` gap near ``s_guess``.

    A double-precision bounded search locates the crossing to round-off;
    successive parabolic vertices of ``gap(s)^2`` (exact for a two-level
    crossing with linear detuning) then converge in extended precision.
    """
    lo, hi = max(0.0, s_guess - window), min(1.0, s_guess + window)
    ss = np.linspace(lo, hi, 41)
    gs = [_double_gap(N, spec, x) for x in ss]
    i = int(np.argmin(gs))
    a, b = ss[max(i - 1, 0)], ss[min(i + 1, ss.size - 1)]
    res = minimize_scalar(lambda x: _double_gap(N, spec, x), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-15})
    with mpmath.workdps(dps):
        sc = mpmath.mpf(res.x)
        h = mpmath.mpf(max(abs(b - a) * 1e-6, 1e-13))
        g0 = doublet_gap(N, spec, sc, dps)
        for _ in range(60):
            gm = doublet_gap(N, spec, sc - h, dps)
            gp = doublet_gap(N, spec, sc + h, dps)
            y0, ym, yp = g0**2, gm**2, gp**2
            curv = yp + ym - 2 * y0
            if curv <= 0:
                h *= 4
                continue
            shift = h * (ym - yp) / (2 * curv)
            s_new = sc + shift
            g_new = doublet_gap(N, spec, s_new, dps)
            converged = abs(g_new - g0) <= rtol * g_new and abs(shift) <= 4 * h
            h = max(abs(shift), h * mpmath.mpf(1e-6))
            if g_new <= g0:
                sc, g0 = s_new, g_new
            if converged:
                break
        return Crossing(int(N), float(sc), float(g0), float(mpmath.log(g0)) if g0 > 0 else -math.inf)


# --------------------------------------------------------------------------
# scaling check against the semiclassical action


@dataclass(frozen=True)
class ScalingCheck:
    """Fit of ``ln Delta(N)`` and of the ground-state energy per spin."""

    N: tuple
    s: float
    crossings: tuple
    slope: float
    intercept: float
    r2: float
    sigma_fit: float
    sigma_wkb: float
    rel_dev: float
    flagged: bool
    ground_residual: tuple
    ground_C: float
    ground_C_r2: float


def ground_energy_residuals(spec: PotentialSpec, s: float, N_list: Sequence[int]) -> np.ndarray:
    """``E_0(N)/N - min_q U(0, q, s)`` for each ``N``."""
    land = landscape(spec, 0.0, s)
    u_min = min(land.left_min.U, (land.right_min or land.left_min).U)
    out = []
    for N in N_list:
        e0 = sector_spectrum(build_sector(N, 0, spec, s), select=(0, 0))[0]
        out.append(e0 / N - u_min)
    return np.array(out)


def wkb_scaling_check(
    spec: PotentialSpec,
    s: Optional[float] = None,
    N_list: Sequence[int] = (100, 150, 200, 250, 300, 350, 400),
    locate_crossing: bool = True,
    dps: int = 60,
) -> ScalingCheck:
    """Compare the exact tunneling splitting scaling with ``sigma_WKB``.

    ``s`` defaults to the zero-temperature transition.  With
    ``locate_crossing`` the gap is minimized over ``s`` for each ``N`` (the
    finite-N crossing is displaced by O(1/N) by the differing zero-point
    energies of the wells); otherwise it is taken at ``s`` itself.
    ``sigma_wkb`` is the under-barrier action at the deeper well bottom.
    """
    N_list = tuple(int(n) for n in N_list)
    if len(N_list) < 4 or list(N_list) != sorted(N_list):
        raise DomainError("N_list must be ascending with at least 4 entries")
    if s is None:
        s = qpt_point(spec)
    land = landscape(spec, 0.0, s)
    crossings = []
    for N in N_list:
        if locate_crossing and land.two_wells:
            crossings.append(avoided_crossing(N, spec, s, window=4.0 / N, dps=dps))
        else:
            g = doublet_gap(N, spec, s, dps)
            crossings.append(Crossing(N, float(s), float(g), float(mpmath.log(g)) if g > 0 else -math.inf))
    ns = np.array(N_list, dtype=float)
    lg = np.array([c.log_gap for c in crossings])
    fit = linregress(ns, lg)
    r2 = float(fit.rvalue**2)
    sigma_fit = -2.0 * float(fit.slope)
    if land.two_wells:
        E_b = max(land.left_min.U, land.right_min.U)
        sigma_wkb = float(barrier_action(spec, 0.0, E_b, AnnealPoint(s)))
    else:
        sigma_wkb = math.nan
    rel = abs(sigma_fit - sigma_wkb) / sigma_wkb if sigma_wkb > 0 else math.nan
    flagged = (not land.two_wells) or r2 < 0.99 or not fit.slope < 0
    resid = ground_energy_residuals(spec, s, N_list)
    inv = 1.0 / ns
    C = float(np.dot(inv, resid) / np.dot(inv, inv))
    ss_res = float(np.sum((resid - C * inv) ** 2))
    ss_tot = float(np.sum((resid - resid.mean()) ** 2))
    c_r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingCheck(N_list, float(s), tuple(crossings), float(fit.slope), float(fit.intercept), r2,
                        sigma_fit, sigma_wkb, rel, flagged, tuple(resid), C, c_r2)


# --------------------------------------------------------------------------
# thermal occupations


@dataclass(frozen=True)
class ThermalSpectrum:
    """All eigenvalues of all sectors with their well assignment."""

    N: int
    s: float
    energies: np.ndarray
    log_degeneracy: np.ndarray
    mean_q: np.ndarray
    left: np.ndarray
    threshold: float
    ambiguous: int


@dataclass(frozen=True)
class Occupations:
    P_L: float
    P_R: float
    ambiguous: int
    log_ratio: float  # ln(P_L / P_R), finite even when one side underflows


@lru_cache(maxsize=8)
def thermal_spectrum(spec: PotentialSpec, s: float, N: int) -> ThermalSpectrum:
    """Diagonalize every sector and classify eigenstates by ``<q>``.

    States with ``<q>`` below the ``k = 0`` barrier top are assigned to the
    metastable (left) well; those within ``1/N`` of it are counted as
    ambiguous but still assigned by the sign of ``<q> - q_top``.
    """
    land = landscape(spec, 0.0, s)
    if not land.two_wells:
        raise InfeasibleError(f"no barrier at k=0 for s={s}: wells are not defined")
    q_top = land.barrier_top.q
    E, L, Q = [], [], []
    for K in range(N // 2 + 1):
        m = build_sector(N, K, spec, s)
        w, v = sector_spectrum(m, eigvecs=True)
        E.append(w)
        Q.append((v * v).T @ m.magnetization)
        L.append(np.full(w.size, m.log_degeneracy))
    E, L, Q = (np.concatenate(x) for x in (E, L, Q))
    amb = int(np.count_nonzero(np.abs(Q - q_top) < 1.0 / N))
    return ThermalSpectrum(N, s, E, L, Q, Q < q_top, q_top, amb)


def thermal_occupations(spec: PotentialSpec, s: float, beta: float, N: int) -> Occupations:
    """Normalized Gibbs weights ``(P_L, P_R)`` of the two wells.

    ``beta`` multiplies the total energy; every eigenvalue carries the
    multiplicity of its sector.
    """
    AnnealPoint(s, beta)
    ts = thermal_spectrum(spec, float(s), int(N))
    return gibbs_occupations(ts.energies, ts.log_degeneracy, ts.left, beta, ts.ambiguous)


def gibbs_occupations(energies, log_degeneracy, left, beta: float, ambiguous: int = 0) -> Occupations:
    """Well occupations from a labelled spectrum; invariant under energy shifts."""
    energies = np.asarray(energies, dtype=float)
    log_degeneracy = np.asarray(log_degeneracy, dtype=float)
    left = np.asarray(left, dtype=bool)
    e = energies - energies.min()
    if math.isinf(beta):
        logw = np.where(e == 0.0, log_degeneracy, -np.inf)
    else:
        logw = log_degeneracy - beta * e
    lz = logsumexp(logw)
    ll = logsumexp(logw[left]) if left.any() else -np.inf
    lr = logsumexp(logw[~left]) if (~left).any() else -np.inf
    return Occupations(float(np.exp(ll - lz)), float(np.exp(lr - lz)), ambiguous, float(ll - lr))


def occupation_crossing(spec: PotentialSpec, s: float, N: int, beta_max: float = 100.0) -> float:
    """Inverse temperature where ``P_L = P_R`` at finite ``N``."""

    def g(beta):
        return thermal_occupations(spec, s, beta, N).log_ratio

    lo, hi = 0.0, 1.0
    if g(lo) <= 0:
        raise InfeasibleError("right well already dominant at infinite temperature")
    while g(hi) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > beta_max:
            raise InfeasibleError("no occupation crossing below beta_max")
    return brentq(g, lo, hi, xtol=1e-10)


def initial_final_overlap(N: int, K: int) -> float:
    """Amplitude ``[2^-N C(N, K)]^(1/2)``."""
    _check_sector(N, K)
    log_c = gammaln(N + 1.0) - gammaln(K + 1.0) - gammaln(N - K + 1.0)
    return float(math.exp(0.5 * (log_c - N * math.log(2.0))))
