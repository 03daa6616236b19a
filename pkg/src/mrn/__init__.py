"""Simulation and numerical analysis of finite-state Markov random networks."""

from .analysis import (
    NEG_INFINITY,
    degeneracy_check,
    dissipation,
    invariant_distribution,
    lyapunov,
    n_minus_independence,
    q1_direct,
    taylor_q,
    taylor_residual_slope,
)
from .drn import (
    check_annihilation,
    check_minus_plus_distribution,
    cocycle_forward,
    cocycle_pullback,
    sync_time_stats,
    sync_times,
)
from .intermittency import classify_times, meet_probability, omega_set_measures, simulate_pair
from .linalg import DetMatrix, apply, classify, coord_from_distance, det_rank, l1_norm, mat_mul
from .noise import Alphabet, enumerate_alphabet, rank_census, sample_realization, shifted, symbol_at
from .perturbation import (
    PbnModel,
    PerturbationMap,
    PolyMatrix,
    pbn_model,
    perturbed_cocycle,
    poly_cocycle,
    random_perturbation,
    step_matrix,
    validate_perturbation,
)

__version__ = "0.1.0"

__all__ = [
    "NEG_INFINITY",
    "degeneracy_check",
    "dissipation",
    "invariant_distribution",
    "lyapunov",
    "n_minus_independence",
    "q1_direct",
    "taylor_q",
    "taylor_residual_slope",
    "check_annihilation",
    "check_minus_plus_distribution",
    "cocycle_forward",
    "cocycle_pullback",
    "sync_time_stats",
    "sync_times",
    "classify_times",
    "meet_probability",
    "omega_set_measures",
    "simulate_pair",
    "DetMatrix",
    "apply",
    "classify",
    "coord_from_distance",
    "det_rank",
    "l1_norm",
    "mat_mul",
    "Alphabet",
    "enumerate_alphabet",
    "rank_census",
    "sample_realization",
    "shifted",
    "symbol_at",
    "PbnModel",
    "PerturbationMap",
    "PolyMatrix",
    "pbn_model",
    "perturbed_cocycle",
    "poly_cocycle",
    "random_perturbation",
    "step_matrix",
    "validate_perturbation",
]
