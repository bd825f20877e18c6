"""taskopt: symbolic task specification and native solvers for robot motion.

Declare robots (from URDF), decision variables, parameters, costs, and
constraints symbolically; build the task into a canonical constrained
program; solve it with native algorithms supporting warm starts and online
parameter updates.
"""

from . import spatial
from .builder import BuildError, TaskBuilder
from .containers import VariableContainer
from .expr import (
    Expression,
    LeafRegistry,
    StructureClass,
    atan2,
    classify,
    constant,
    cos,
    det,
    dot,
    evaluate,
    exp,
    extract_affine,
    gradient,
    hessian,
    horzcat,
    jacobian,
    log,
    norm,
    parameter,
    simplify,
    sin,
    sqrt,
    substitute,
    sumsqr,
    tan,
    variable,
    vertcat,
)
from .fixtures import fixture_path
from .kinematics import RobotModel
from .problem import FeasibilityReport, Problem, ProblemClass
from .solvers import (
    Solution,
    Solver,
    SolverAdapter,
    SolverOptions,
    Stats,
    available_solvers,
    interpolate,
    register_solver,
)
from .taskmodel import TaskModel
from .urdf import UrdfError, UrdfModel, extract_chain, load_urdf, parse_urdf

__version__ = "0.1.0"

__all__ = [
    "BuildError",
    "Expression",
    "FeasibilityReport",
    "LeafRegistry",
    "Problem",
    "ProblemClass",
    "RobotModel",
    "Solution",
    "Solver",
    "SolverAdapter",
    "SolverOptions",
    "Stats",
    "StructureClass",
    "TaskBuilder",
    "TaskModel",
    "UrdfError",
    "UrdfModel",
    "VariableContainer",
    "atan2",
    "available_solvers",
    "classify",
    "constant",
    "cos",
    "det",
    "dot",
    "evaluate",
    "exp",
    "extract_affine",
    "extract_chain",
    "fixture_path",
    "gradient",
    "hessian",
    "horzcat",
    "interpolate",
    "jacobian",
    "load_urdf",
    "log",
    "norm",
    "parameter",
    "parse_urdf",
    "register_solver",
    "simplify",
    "sin",
    "spatial",
    "sqrt",
    "substitute",
    "sumsqr",
    "tan",
    "variable",
    "vertcat",
]
