"""Sub-exponential sort-and-merge solver for SIS and MultiSIS."""
from .estimator import Infeasible, Plan, capacity, plan_parameters
from .merge import SolveResult, solve
from .zq import CombinationVector, SisInstance, SolutionSet, gen_instance, verify_solution

__all__ = [
    "CombinationVector",
    "Infeasible",
    "Plan",
    "SisInstance",
    "SolutionSet",
    "SolveResult",
    "capacity",
    "gen_instance",
    "plan_parameters",
    "solve",
    "verify_solution",
]
