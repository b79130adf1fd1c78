"""Escape-rate exponents for quantum and simulated annealing of a p-spin model.

The model is ``H = s N f(2 S^z / N) - (1 - s) S^x`` with a cubic (or monomial)
cost ``f``.  Rates are reported as per-spin exponents: a rate ``~ exp(-N sigma)``.
"""
from .errors import DomainError, InfeasibleError, NoTransitionError
from .exact import (
    SectorMatrix,
    build_sector,
    doublet_gap,
    initial_final_overlap,
    occupation_crossing,
    sector_spectrum,
    thermal_occupations,
    wkb_scaling_check,
)
from .model import (
    AnnealPoint,
    Landscape,
    PotentialSpec,
    effective_mass,
    effective_potential,
    entropy_classical,
    entropy_k,
    k_star,
    landscape,
    potential,
)
from .rates import (
    RateResult,
    bounding_lines,
    classical_escape_action,
    critical_line,
    free_energy_gap,
    optimal_quantum_action,
    qpt_point,
    well_free_energy,
)
from .schedule import ScheduleResult, comparison_sweep, optimize_qa, qa_exponent, sa_exponent
from .wkb import WkbState, barrier_action, barrier_segment, momentum, period, turning_points, wkb_state

__all__ = [name for name in dir() if not name.startswith("_")]
