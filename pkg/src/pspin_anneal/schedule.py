"""Computation-time exponents for quantum and simulated annealing.

``xi = (1/N) log tau`` per spin.  Quantum annealing freezes the well
occupations at ``s_F``; its cost is the inverse inter-well rate there times
the inverse ground-well occupation.  Simulated annealing is treated at ``s = 1``
with single-spin-flip thermal dynamics.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InfeasibleError, NoTransitionError
from .model import AnnealPoint, PotentialSpec, entropy_classical, landscape, potential
from .rates import critical_line, free_energy_gap, optimal_quantum_action, qpt_point

QA, SA, EXHAUSTIVE = "QA", "SA", "exhaustive"
LN2 = math.log(2.0)
WORKERS_ENV = "PSPIN_WORKERS"


@dataclass(frozen=True)
class ScheduleResult:
    """Per-spin computation-time exponent and where it is attained.

    ``xi`` includes the exhaustive-search cap; ``xi_uncapped`` does not and is
    ``inf`` when the underlying action diverges.  ``algorithm`` is
    ``"exhaustive"`` whenever the cap is the binding bound.
    """

    xi: float
    s_F: float
    beta: float
    algorithm: str
    xi_uncapped: float = math.nan
    cap: float = math.nan
    divergent: bool = False
    s_QPT: float = math.nan
    beyond_qpt: bool = False
    branch: str = ""


def qa_cap(spec: PotentialSpec) -> float:
    """Local exhaustive search bound ``Q_cl(q_min)`` (``ln 2`` for monomials)."""
    return float(entropy_classical(spec.q_min)) if spec.kind == "cubic" else LN2


def _capped(raw: float, cap: float, algorithm: str) -> tuple[float, str]:
    if raw >= cap:
        return cap, EXHAUSTIVE
    return raw, algorithm


def qa_exponent(spec: PotentialSpec, beta: float, s_F: float) -> ScheduleResult:
    """``xi = S_opt + max(0, F_R - F_L)`` with the occupations frozen at ``s_F``."""
    point = AnnealPoint(s_F, beta)
    if not landscape(spec, 0.0, s_F).two_wells:
        raise InfeasibleError(f"both wells must exist at the freezing point (s_F={s_F})")
    rate = optimal_quantum_action(spec, point)
    dF = 0.0 if math.isinf(beta) else max(0.0, free_energy_gap(spec, point))
    raw = rate.sigma_opt + dF
    cap = qa_cap(spec)
    xi, alg = _capped(raw, cap, QA)
    return ScheduleResult(xi, float(s_F), float(beta), alg, raw, cap, math.isinf(raw), branch=rate.mechanism)


def zero_temperature_profile(spec: PotentialSpec, ts: Optional[np.ndarray] = None):
    """``sigma_opt(inf, s)`` on ``s = s_QPT + t (1 - s_QPT)``; returns ``(s, sigma)``."""
    s_q = qpt_point(spec)
    if ts is None:
        ts = _T_DEFAULT
    ss = s_q + np.asarray(ts) * (1.0 - s_q)
    sig = np.array([_sigma_inf(spec, s) for s in ss])
    return ss, sig


_T_DEFAULT = np.unique(np.concatenate([[0.0], np.geomspace(1e-6, 0.1, 16), np.linspace(0.1, 0.95, 18)]))


def _sigma_inf(spec, s):
    if s >= 1.0:
        return math.inf
    try:
        return optimal_quantum_action(spec, AnnealPoint(float(s))).sigma_opt
    except InfeasibleError:
        return math.inf


def _minimize_branch(spec, s_q, func, ts):
    vals = np.array([func(s_q + t * (1.0 - s_q)) for t in ts])
    i = int(np.argmin(vals))
    best_t, best = float(ts[i]), float(vals[i])
    if not math.isfinite(best):
        return best_t, best
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    if b > a:
        res = minimize_scalar(lambda t: func(s_q + t * (1.0 - s_q)), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-9})
        if res.fun < best:
            best_t, best = float(res.x), float(res.fun)
    return best_t, best


def optimize_qa(
    spec: PotentialSpec,
    critical_branch: bool = True,
    ts: Optional[Sequence[float]] = None,
    ts_critical: Optional[Sequence[float]] = None,
) -> ScheduleResult:
    """Optimal freezing point and temperature for quantum annealing.

    The action is concave in ``beta`` on ``(beta_PT, inf)``, so only the two
    edges are candidates: ``S_opt(inf, s_F)`` and ``S_opt(beta_PT(s_F), s_F)``.
    ``critical_branch=False`` keeps only the zero-temperature edge (much
    cheaper).  The result is capped by ``Q_cl(q_min)``.
    """
    cap = qa_cap(spec)
    try:
        s_q = qpt_point(spec)
    except NoTransitionError:
        # the ground state is followed continuously: no exponential bottleneck
        return ScheduleResult(0.0, 1.0, math.inf, QA, 0.0, cap, False, branch="no-transition")
    ts = _T_DEFAULT if ts is None else np.asarray(ts, dtype=float)
    t0, v0 = _minimize_branch(spec, s_q, lambda s: _sigma_inf(spec, s), ts)
    best = (v0, t0, math.inf, "zero-temperature")
    if critical_branch:
        tc = np.linspace(0.05, 0.9, 6) if ts_critical is None else np.asarray(ts_critical, dtype=float)

        def crit(s):
            try:
                beta = critical_line(spec, s)
                if math.isinf(beta):
                    return _sigma_inf(spec, s)
                return optimal_quantum_action(spec, AnnealPoint(s, beta)).sigma_opt
            except InfeasibleError:
                return math.inf

        t1, v1 = _minimize_branch(spec, s_q, crit, tc)
        if v1 < best[0]:
            best = (v1, t1, critical_line(spec, s_q + t1 * (1.0 - s_q)), "critical-line")
    raw, t, beta, branch = best
    s_F = s_q + t * (1.0 - s_q)
    xi, alg = _capped(raw, cap, QA)
    return ScheduleResult(xi, s_F, beta, alg, raw, cap, math.isinf(raw), s_q, t > 1e-5, branch)


def sa_exponent(spec: PotentialSpec) -> ScheduleResult:
    """Simulated annealing exponent at the classical transition temperature.

    ``xi_SA = beta_c (f(q_max) - f(q_min)) + Q_cl(q_min) - Q_cl(q_max)`` with
    ``beta_c = Q_cl(q_min) / (f(q_min) - f(1))``, capped at ``ln 2``.
    """
    if spec.kind != "cubic":
        raise InfeasibleError("the closed-form SA exponent needs a cubic cost")
    f_min, f_max, f_one = (float(potential(spec, q)) for q in (spec.q_min, spec.q_max, 1.0))
    q_lo, q_hi = float(entropy_classical(spec.q_min)), float(entropy_classical(spec.q_max))
    depth = f_min - f_one
    if not depth > 0:
        return ScheduleResult(LN2, 1.0, math.inf, EXHAUSTIVE, math.inf, LN2, True)
    beta_c = q_lo / depth
    raw = beta_c * (f_max - f_min) + q_lo - q_hi
    xi, alg = _capped(raw, LN2, SA)
    return ScheduleResult(xi, 1.0, beta_c, alg, raw, LN2, False)


@dataclass(frozen=True)
class SweepCell:
    q_min: float
    q_max: float
    status: str  # "ok", "no-transition" or "infeasible"
    qa: Optional[ScheduleResult] = None
    sa: Optional[ScheduleResult] = None
    winner: str = ""


def feasible(q_min: float, q_max: float) -> bool:
    return 0.0 <= q_min < 1.0 and q_min < q_max < (2.0 + q_min) / 3.0


def _winner(qa: ScheduleResult, sa: ScheduleResult) -> str:
    if qa.xi < sa.xi:
        return QA
    if sa.xi < qa.xi:
        return SA
    return "tie"


def _cell(args) -> SweepCell:
    q_min, q_max, critical = args
    if not feasible(q_min, q_max):
        return SweepCell(q_min, q_max, "infeasible")
    spec = PotentialSpec.cubic(q_min, q_max)
    sa = sa_exponent(spec)
    qa = optimize_qa(spec, critical_branch=critical)
    status = "no-transition" if qa.branch == "no-transition" else "ok"
    return SweepCell(q_min, q_max, status, qa, sa, _winner(qa, sa))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def comparison_sweep(
    q_min_grid: Iterable[float],
    q_max_grid: Iterable[float],
    workers: Optional[int] = None,
    critical_branch: bool = False,
) -> list[SweepCell]:
    """QA and SA exponents on every ``(q_min, q_max)`` pair, row-major in ``q_min``.

    Infeasible cells are marked, not computed.  Cells are independent; with
    ``workers > 1`` they run in a process pool and are reassembled in input
    order, so the output does not depend on scheduling.
    """
    jobs = [(float(a), float(b), critical_branch) for a in q_min_grid for b in q_max_grid]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
