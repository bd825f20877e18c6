"""Native solvers and the extensible adapter interface."""

from .base import (
    Solution,
    Solver,
    SolverAdapter,
    SolverOptions,
    Stats,
    available_solvers,
    interpolate,
    register_solver,
)
from .admm import OperatorSplittingQP, QPResult, solve_qp
from .bfgs import QuasiNewtonSolver
from .sqp import SQPSolver

register_solver("qp", OperatorSplittingQP)
register_solver("bfgs", QuasiNewtonSolver)
register_solver("sqp", SQPSolver)

__all__ = [
    "Solution",
    "Solver",
    "SolverAdapter",
    "SolverOptions",
    "Stats",
    "available_solvers",
    "interpolate",
    "register_solver",
    "OperatorSplittingQP",
    "QuasiNewtonSolver",
    "SQPSolver",
    "QPResult",
    "solve_qp",
]
