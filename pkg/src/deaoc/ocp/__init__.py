"""Optimal control by direct transcription."""

from .initial_guess import initial_guess, node_pattern
from .objective import potential_variation
from .solver import SolverOptions, SolverReport, register_solver, solve
from .transcription import BoundaryData, DecisionLayout, FinalCondition, NlpProblem, transcribe


def derivatives(problem: NlpProblem, x):
    """Objective gradient and equality/gap Jacobians at ``x``."""
    return problem.objective_gradient(x), problem.jacobian(x), problem.gap_jacobian(x)


def objective(problem: NlpProblem, x) -> float:
    return problem.objective(x)


__all__ = [
    "BoundaryData", "DecisionLayout", "FinalCondition", "NlpProblem", "SolverOptions", "SolverReport",
    "derivatives", "initial_guess", "node_pattern", "objective", "potential_variation", "register_solver",
    "solve", "transcribe",
]
