"""Classical cost functions, entropies and the effective large-spin potential.

The collective coordinate is the magnetization ``q = 2M/N`` and the sector
label is ``k = K/N`` (total spin ``S = N/2 - K``).  Everything here is per spin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import entr

from .errors import DomainError

# slack on |q| <= 1 - 2k checks, for values produced by root finders
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class PotentialSpec:
    """Classical cost ``f(q)``: the cubic family or a monomial ``q**p``.

    The cubic has a double root (metastable minimum) at ``q_min`` and the
    barrier top at ``q_max``; ``q = 1`` is the global minimum as long as
    ``q_max < (2 + q_min) / 3``.
    """

    kind: str = "cubic"
    q_min: float = 0.0
    q_max: float = 0.5
    c: float = 1.0
    p: int = 3

    def __post_init__(self):
        if self.kind == "cubic":
            if not 0.0 <= self.q_min < 1.0:
                raise DomainError(f"q_min={self.q_min} outside [0, 1)")
            if not self.q_min < self.q_max < 1.0:
                raise DomainError(f"q_max={self.q_max} must lie in (q_min, 1)")
            if not self.q_max < (2.0 + self.q_min) / 3.0:
                raise DomainError(
                    f"q_max={self.q_max} >= (2 + q_min)/3: q=1 is not the global minimum"
                )
            if not self.c > 0:
                raise DomainError(f"c={self.c} must be positive")
        elif self.kind == "monomial":
            if int(self.p) != self.p or self.p < 3:
                raise DomainError(f"monomial power p={self.p} must be an integer >= 3")
        else:
            raise DomainError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def cubic(cls, q_min: float, q_max: float, c: float = 1.0) -> "PotentialSpec":
        return cls("cubic", float(q_min), float(q_max), float(c))

    @classmethod
    def monomial(cls, p: int) -> "PotentialSpec":
        return cls("monomial", p=int(p))

    @property
    def outer_root(self) -> float:
        """Simple root ``(3 q_max - q_min) / 2`` of the cubic."""
        return 0.5 * (3.0 * self.q_max - self.q_min)


@dataclass(frozen=True)
class AnnealPoint:
    """Annealing coordinate ``s`` and inverse temperature ``beta`` (may be inf)."""

    s: float
    beta: float = math.inf

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise DomainError(f"s={self.s} outside [0, 1]")
        if not self.beta >= 0.0:  # also rejects NaN
            raise DomainError(f"beta={self.beta} must be non-negative")


class Extremum(NamedTuple):
    q: float
    U: float


@dataclass(frozen=True)
class Landscape:
    k: float
    s: float
    left_min: Extremum
    right_min: Optional[Extremum] = None
    barrier_top: Optional[Extremum] = None
    k_star: Optional[float] = None

    @property
    def two_wells(self) -> bool:
        return self.right_min is not None


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_k(k):
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0.0) or np.any(k_arr > 0.5):
        raise DomainError(f"k={k} outside [0, 1/2]")
    return k_arr


def _check_band(k, q):
    a = 1.0 - 2.0 * _check_k(k)
    q = np.asarray(q, dtype=float)
    if np.any(np.abs(q) > a + _EDGE_TOL):
        raise DomainError(f"|q| exceeds the band edge 1-2k for k={k}")
    return a, q


def potential(spec: PotentialSpec, q, order: int = 0):
    """Classical cost ``f(q)`` or its first/second derivative (``order``)."""
    q = np.asarray(q, dtype=float)
    if np.any(np.abs(q) > 1.0 + _EDGE_TOL):
        raise DomainError("|q| > 1")
    if spec.kind == "cubic":
        d = q - spec.q_min
        b = spec.outer_root
        if order == 0:
            val = -spec.c * d * d * (q - b)
        elif order == 1:
            val = -spec.c * d * (3.0 * q - 2.0 * b - spec.q_min)
        elif order == 2:
            val = -spec.c * (6.0 * q - 2.0 * b - 4.0 * spec.q_min)
        else:
            raise ValueError("order must be 0, 1 or 2")
    else:
        p = spec.p
        if order == 0:
            val = q**p
        elif order == 1:
            val = p * q ** (p - 1)
        elif order == 2:
            val = p * (p - 1) * q ** (p - 2)
        else:
            raise ValueError("order must be 0, 1 or 2")
    return _out(val)


def _width(a, q):
    return np.sqrt(np.maximum(a * a - q * q, 0.0))


def effective_potential(spec: PotentialSpec, k, q, s: float):
    """``U(k, q) = s f(q) - (1 - s)/2 * sqrt((1 - 2k)^2 - q^2)``."""
    a, q = _check_band(k, q)
    return _out(s * np.asarray(potential(spec, q)) - 0.5 * (1.0 - s) * _width(a, q))


def effective_potential_dq(spec: PotentialSpec, k, q, s: float, order: int = 1):
    """First or second q-derivative of ``U(k, q)``; diverges at the band edge."""
    a, q = _check_band(k, q)
    w = _width(a, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 1:
            kin = 0.5 * (1.0 - s) * q / w
        elif order == 2:
            kin = 0.5 * (1.0 - s) * a * a / w**3
        else:
            raise ValueError("order must be 1 or 2")
    if s == 1.0:
        kin = np.zeros_like(q)
    return _out(s * np.asarray(potential(spec, q, order)) + kin)


def effective_potential_dk(spec: PotentialSpec, k, q, s: float):
    """``dU/dk = (1 - s)(1 - 2k) / sqrt((1 - 2k)^2 - q^2)`` (non-negative)."""
    a, q = _check_band(k, q)
    if s == 1.0:
        return _out(np.zeros(np.broadcast(a, q).shape))
    with np.errstate(divide="ignore"):
        return _out((1.0 - s) * a / _width(a, q))


def effective_mass(k, q, s: float):
    """Position dependent mass ``[(1 - s)/2 * sqrt((1-2k)^2 - q^2)]^-1``."""
    a, q = _check_band(k, q)
    with np.errstate(divide="ignore"):
        return _out(1.0 / (0.5 * (1.0 - s) * _width(a, q)))


def entropy_k(k):
    """Per-spin entropy of the permutation sector ``k``: binary entropy of k."""
    k = _check_k(k)
    return _out(entr(k) + entr(1.0 - k))


def entropy_classical(q):
    """Per-spin entropy of classical states with magnetization ``q``."""
    q = np.asarray(q, dtype=float)
    if np.any(np.abs(q) > 1.0):
        raise DomainError("|q| > 1")
    return _out(entr(0.5 * (1.0 + q)) + entr(0.5 * (1.0 - q)))


# Search grid on (-1, 1): uniform core plus tanh grading toward the band
# edges, where the ground-state well sits at distances ~(1 - s)^2 from q = 1.
_UNIT_GRID = np.unique(
    np.concatenate([np.linspace(-1.0, 1.0, 1025)[1:-1], np.tanh(np.linspace(-17.0, 17.0, 1024))])
)
_UNIT_GRID = _UNIT_GRID[np.abs(_UNIT_GRID) < 1.0]


def _roots_on_grid(func, xs, vals, xtol=1e-14):
    roots = []
    sgn = np.sign(vals)
    for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
        roots.append(brentq(func, xs[i], xs[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    for i in np.nonzero(vals == 0.0)[0]:
        roots.append(float(xs[i]))
    return sorted(roots)


def _scalar_derivatives(spec: PotentialSpec, a: float, s: float):
    """Plain-float ``dU/dq`` and ``d2U/dq2`` for the root polishing loops."""
    kin = 0.5 * (1.0 - s)
    if spec.kind == "cubic":
        c, qm, b = spec.c, spec.q_min, spec.outer_root

        def f1(q):
            return -c * (q - qm) * (3.0 * q - 2.0 * b - qm)

        def f2(q):
            return -c * (6.0 * q - 2.0 * b - 4.0 * qm)

    else:
        p = spec.p

        def f1(q):
            return p * q ** (p - 1)

        def f2(q):
            return p * (p - 1) * q ** (p - 2)

    def d1(q):
        w = math.sqrt(max(a * a - q * q, 0.0))
        if kin == 0.0:
            return s * f1(q)
        return s * f1(q) + (kin * q / w if w > 0 else math.copysign(math.inf, q))

    def d2(q):
        w = math.sqrt(max(a * a - q * q, 0.0))
        if kin == 0.0:
            return s * f2(q)
        return s * f2(q) + (kin * a * a / w**3 if w > 0 else math.inf)

    return d1, d2


def stationary_points(spec: PotentialSpec, k: float, s: float) -> list[tuple[float, str]]:
    """All local extrema of ``U(k, .)`` on the band, as ``(q, 'min'|'max')``.

    Band edges are included when ``U`` is extremal there (only possible when
    the transverse term is absent or negligible).  Stationary points are
    bracketed between consecutive inflection points, on each of which
    ``dU/dq`` is monotone, so merging min/max pairs are never skipped.
    """
    a = 1.0 - 2.0 * float(_check_k(k))
    if a <= 0.0:
        return [(0.0, "min")]
    qs = a * _UNIT_GRID
    d1, d2 = _scalar_derivatives(spec, a, s)
    inflections = _roots_on_grid(d2, qs, effective_potential_dq(spec, k, qs, s, 2))
    nodes = [float(qs[0])] + inflections + [float(qs[-1])]
    g = [d1(x) for x in nodes]
    out: list[tuple[float, str]] = []
    # left band edge
    if g[0] > 0:
        out.append((-a, "min"))
    elif g[0] < 0:
        out.append((-a, "max"))
    for lo, hi, glo, ghi in zip(nodes[:-1], nodes[1:], g[:-1], g[1:]):
        if glo * ghi < 0:
            r = brentq(d1, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
            out.append((r, "min" if glo < 0 else "max"))
    if g[-1] < 0:
        out.append((a, "min"))
    elif g[-1] > 0:
        out.append((a, "max"))
    return out


def landscape(spec: PotentialSpec, k: float, s: float, with_k_star: bool = False) -> Landscape:
    """Well minima and barrier top of ``U(k, .)`` at fixed ``s``.

    With a single minimum it is reported as ``left_min`` and the barrier and
    right well are ``None``.
    """
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"s={s} outside [0, 1]")
    pts = stationary_points(spec, k, s)
    mins = [q for q, kind in pts if kind == "min"]

    def ext(q):
        return Extremum(q, float(effective_potential(spec, k, q, s)))

    kst = k_star(spec, s) if with_k_star else None
    if len(mins) < 2:
        if not mins:  # cannot happen for a bounded smooth U; defensive
            qs = (1.0 - 2.0 * k) * _UNIT_GRID
            mins = [float(qs[np.argmin(effective_potential(spec, k, qs, s))])]
        return Landscape(k, s, ext(mins[0]), k_star=kst)
    q_l, q_r = mins[0], mins[-1]
    tops = [q for q, kind in pts if kind == "max" and q_l < q < q_r]
    top = max((ext(q) for q in tops), key=lambda e: e.U)
    return Landscape(k, s, ext(q_l), ext(q_r), top, k_star=kst)


def k_star(spec: PotentialSpec, s: float, tol: float = 1e-9) -> Optional[float]:
    """Largest ``k`` at which the right (ground-state) well still exists.

    ``None`` if there is no right well even at ``k = 0``.
    """
    if not landscape(spec, 0.0, s).two_wells:
        return None
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if landscape(spec, mid, s).two_wells:
            lo = mid
        else:
            hi = mid
    return lo
