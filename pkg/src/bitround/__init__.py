"""Objective coefficient rounding, formulation symmetry and exact solving for binary programs."""
from .model import BinaryProgram, LinearConstraint, Sense, evaluate_objective, is_feasible, parse_opb, write_opb
from .rounding import round_coefficient, round_objective
from .solvers import SolveBudget, Status, solve, solve_bp, solve_enumeration, solve_knapsack
from .symmetry import build_colored_graph, detect_symmetry, find_generators, verify_symmetry

__all__ = [
    "BinaryProgram", "LinearConstraint", "Sense", "evaluate_objective", "is_feasible",
    "parse_opb", "write_opb", "round_coefficient", "round_objective", "SolveBudget", "Status",
    "solve", "solve_bp", "solve_enumeration", "solve_knapsack", "build_colored_graph",
    "detect_symmetry", "find_generators", "verify_symmetry",
]
