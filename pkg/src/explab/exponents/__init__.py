from .curves import ExponentCurve, ExponentKind, sweep
from .list_exponents import (ExpLambda, ExponentQuery, FixedL, critical_rate,
                             deterministic_list_exponent_exp, deterministic_list_exponent_fixed,
                             random_coding_exponent, randomized_list_exponent_exp,
                             randomized_list_exponent_fixed, sphere_packing_exponent)
from .solver import SolverConfig, SolverError, minimize_over_joint

__all__ = [
    "ExpLambda", "ExponentCurve", "ExponentKind", "ExponentQuery", "FixedL", "SolverConfig",
    "SolverError", "critical_rate", "deterministic_list_exponent_exp",
    "deterministic_list_exponent_fixed", "minimize_over_joint", "random_coding_exponent",
    "randomized_list_exponent_exp", "randomized_list_exponent_fixed", "sphere_packing_exponent",
    "sweep",
]
