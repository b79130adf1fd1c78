"""Quasiclassical momentum, turning points and under-barrier integrals.

Per-spin conventions: the tunneling rate through the barrier scales as
``exp(-N * sigma)`` with ``sigma = int arccosh(u) dq`` over the classically
forbidden segment, and the imaginary-time period is ``T = -d sigma / dE``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import DomainError
from .model import (
    AnnealPoint,
    PotentialSpec,
    _UNIT_GRID,
    _check_k,
    effective_potential,
    landscape,
    potential,
    stationary_points,
)

_RTOL = 1e-10
_N_START = 64
_N_MAX = 1 << 14


class BarrierSegment(NamedTuple):
    """Classically forbidden interval ``(q_L, q_R)`` between the two wells."""

    q_L: float
    q_R: float


@dataclass(frozen=True)
class WkbState:
    spec: PotentialSpec
    k: float
    E: float
    point: AnnealPoint
    turning_points: tuple = field(default=())


def wkb_state(spec: PotentialSpec, k: float, E: float, point: AnnealPoint) -> WkbState:
    return WkbState(spec, k, E, point, tuple(turning_points(spec, k, E, point)))


def reduced_coordinate(spec: PotentialSpec, k, q, E, s: float):
    """``u = 2 (s f(q) - E) / ((1 - s) sqrt((1-2k)^2 - q^2))``, i.e. ``cos p``."""
    a = 1.0 - 2.0 * np.asarray(k, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.sqrt(np.maximum(a * a - q * q, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2.0 * (s * np.asarray(potential(spec, q)) - E) / ((1.0 - s) * w)


def momentum(state: WkbState, q: float) -> complex:
    """Canonical momentum conjugate to ``q`` at energy ``state.E``.

    ``arccos(u)`` inside the allowed region; under the barrier (``u > 1``)
    ``i * arccosh(u)``; above the upper band edge (``u < -1``)
    ``pi + i * arccosh(-u)``.  Imaginary parts are non-negative magnitudes.
    """
    k, s = state.k, state.point.s
    a = 1.0 - 2.0 * k
    if abs(q) >= a:
        raise DomainError(f"q={q} on or beyond the band edge {a}")
    if s >= 1.0:
        raise DomainError("momentum undefined without transverse field (s=1)")
    u = float(reduced_coordinate(state.spec, k, q, state.E, s))
    if abs(u) <= 1.0:
        return complex(math.acos(u), 0.0)
    if u > 1.0:
        return complex(0.0, math.acosh(u))
    return complex(math.pi, math.acosh(-u))


def turning_points(spec: PotentialSpec, k: float, E: float, point: AnnealPoint) -> list[float]:
    """Ascending roots of ``|u(q)| = 1`` on the open band.

    A root where the lower band ``U(k, q)`` only touches ``E`` (a well bottom
    or barrier top at exactly energy ``E``) is reported twice.
    """
    s = point.s
    _check_k(k)
    a = 1.0 - 2.0 * k
    if a <= 0.0 or s >= 1.0:
        return []
    qs = a * _UNIT_GRID
    scale = max(1.0, abs(E))
    roots: list[float] = []
    for sign in (-1.0, 1.0):  # lower band U(k,q) and upper band s f + (1-s) w / 2

        def g(q, sign=sign):
            w = math.sqrt(max(a * a - q * q, 0.0))
            return s * potential(spec, q) + sign * 0.5 * (1.0 - s) * w - E

        vals = s * np.asarray(potential(spec, qs)) + sign * 0.5 * (1.0 - s) * np.sqrt(a * a - qs * qs) - E
        sg = np.sign(vals)
        for i in np.nonzero(sg[:-1] * sg[1:] < 0)[0]:
            roots.append(brentq(g, qs[i], qs[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    for q0, _kind in stationary_points(spec, k, s):
        if abs(q0) < a and abs(effective_potential(spec, k, q0, s) - E) <= 1e-13 * scale:
            roots = [r for r in roots if abs(r - q0) > 1e-9]
            roots += [q0, q0]
    return sorted(roots)


def barrier_segment(spec: PotentialSpec, k: float, E: float, point: AnnealPoint) -> Optional[BarrierSegment]:
    """Forbidden interval separating the two wells at energy ``E``.

    ``None`` when ``E`` is at or above the barrier top or only one well exists.
    Raises ``DomainError`` if ``E`` lies below the bottom of either well.
    """
    s = point.s
    land = landscape(spec, k, s)
    if not land.two_wells:
        return None
    top = land.barrier_top
    if E >= top.U:
        return None
    if E < land.left_min.U or E < land.right_min.U:
        raise DomainError(f"E={E} below a well bottom: no state to tunnel from/into")
    qa = _bracketed_level(spec, k, s, E, land.left_min.q, top.q)
    qb = _bracketed_level(spec, k, s, E, top.q, land.right_min.q)
    return BarrierSegment(qa, qb)


def _bracketed_level(spec, k, s, E, lo, hi):
    def g(q):
        return effective_potential(spec, k, q, s) - E

    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@lru_cache(maxsize=None)
def _gauss_theta(n: int):
    x, w = roots_legendre(n)
    theta = 0.5 * math.pi * (x + 1.0)
    return theta, 0.5 * math.pi * w


def _integrands(spec, s, k, E, qa, qb, theta):
    """Action and period integrands on the angle grid q = qa + (qb-qa)(1-cos)/2.

    The sin(theta) Jacobian removes the inverse-square-root endpoint
    singularity of the period integrand.  Arrays broadcast as (..., n).
    """
    half = 0.5 * (qb - qa)
    q = qa + half * (1.0 - np.cos(theta))
    jac = half * np.sin(theta)
    a = 1.0 - 2.0 * k
    w = np.sqrt(np.maximum(a * a - q * q, 0.0))
    kin = 0.5 * (1.0 - s) * w
    f = np.asarray(potential(spec, np.clip(q, -1.0, 1.0)))
    # u - 1 from the lower-band gap directly, to keep digits near turning points
    gap = np.maximum(s * f - kin - E, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        um1 = gap / kin
        u = 1.0 + um1
        act = np.arccosh(u)
        per = 1.0 / (kin * np.sqrt(um1 * (u + 1.0)))
        per = np.where(jac > 0, per * jac, 0.0)
    act = np.where(np.isfinite(act), act, 0.0) * jac
    # a turning point rounded into the allowed side leaves gap == 0 at the
    # outermost nodes; the mapped integrand is finite there, so borrow the
    # nearest interior value
    bad = ~np.isfinite(per)
    if bad.any():
        per = _fill_from_neighbours(per, bad)
    return act, per


def _fill_from_neighbours(per, bad):
    per = np.array(per, dtype=float)
    flat, mask = per.reshape(-1, per.shape[-1]), bad.reshape(-1, per.shape[-1])
    idx = np.arange(flat.shape[-1])
    for row, m in zip(flat, mask):
        if m.all():
            row[:] = np.inf
        elif m.any():
            good = idx[~m]
            row[m] = row[good[np.abs(good[:, None] - idx[m][None, :]).argmin(axis=0)]]
    return flat.reshape(per.shape)


def segment_integrals(spec, s, k, E, qa, qb, n: int = 96):
    """Fixed-order (action, period) on many segments at once (broadcasting)."""
    theta, wts = _gauss_theta(n)
    k, E, qa, qb = (np.asarray(x, dtype=float)[..., None] for x in (k, E, qa, qb))
    act, per = _integrands(spec, s, k, E, qa, qb, theta)
    return act @ wts, per @ wts


def _adaptive(spec, s, k, E, seg, which, rtol):
    n = _N_START
    prev = None
    while True:
        act, per = segment_integrals(spec, s, k, E, seg.q_L, seg.q_R, n)
        val = float(act if which == "action" else per)
        if prev is not None and (abs(val - prev) <= rtol * abs(val) or not math.isfinite(val)):
            return val, n
        if n >= _N_MAX:
            return val, n
        prev = val
        n *= 2


def barrier_action(
    spec: PotentialSpec,
    k: float,
    E: float,
    point: AnnealPoint,
    rtol: float = _RTOL,
    full_output: bool = False,
):
    """Per-spin reduced action ``sigma = int_{q_L}^{q_R} arccosh(u) dq >= 0``.

    Returns 0 when there is no forbidden segment (over-barrier energy) and
    ``inf`` without transverse field.  With ``full_output`` also returns a
    dict with keys ``over_barrier``, ``segment`` and ``nodes``.
    """
    s = point.s
    info = {"over_barrier": False, "segment": None, "nodes": 0}
    if s >= 1.0:
        info["divergent"] = True
        return (math.inf, info) if full_output else math.inf
    seg = barrier_segment(spec, k, E, point)
    if seg is None or seg.q_R <= seg.q_L:
        info["over_barrier"] = True
        return (0.0, info) if full_output else 0.0
    val, n = _adaptive(spec, s, k, E, seg, "action", rtol)
    info.update(segment=seg, nodes=n)
    return (val, info) if full_output else val


def period(spec: PotentialSpec, k: float, E: float, point: AnnealPoint, rtol: float = _RTOL) -> float:
    """Imaginary-time period ``T(E) = -d sigma / dE`` at fixed ``k``.

    Diverges (returns ``inf``) at a well bottom; undefined at or above the
    barrier top.
    """
    s = point.s
    if s >= 1.0:
        raise DomainError("period undefined without transverse field (s=1)")
    seg = barrier_segment(spec, k, E, point)
    if seg is None:
        raise DomainError(f"E={E} at or above the barrier top: no tunneling period")
    land = landscape(spec, k, s)
    scale = max(1.0, abs(E))
    if min(abs(E - land.left_min.U), abs(E - land.right_min.U)) <= 1e-14 * scale:
        return math.inf
    val, _ = _adaptive(spec, s, k, E, seg, "period", rtol)
    return val
