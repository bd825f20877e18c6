"""Damped quasi-Newton descent for unconstrained problems.

Directions come from a damped BFGS model of the Hessian, steps from Armijo
backtracking on the objective.  Terminates when the gradient infinity norm
or the step infinity norm falls below tolerance.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..problem import ProblemClass
from .base import SolverAdapter, SolverOptions, Stats

__all__ = ["QuasiNewtonSolver", "damped_bfgs_update"]


def damped_bfgs_update(B: np.ndarray, s: np.ndarray, y: np.ndarray):
    """Powell-damped BFGS update; returns (B_new, ok).

    ``ok`` is False when even the damped curvature is unusable, in which
    case ``B`` is returned unchanged.
    """
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if not np.isfinite(sBs) or not np.isfinite(sy) or sBs <= 1e-16:
        return B, False
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if sy <= 1e-14:
        return B, False
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (B_new + B_new.T), True


class QuasiNewtonSolver(SolverAdapter):
    """Adapter tag ``"bfgs"``: unconstrained problems of either cost class."""

    accepts = frozenset(
        (ProblemClass.UNCONSTRAINED_QUADRATIC, ProblemClass.UNCONSTRAINED_NONLINEAR)
    )

    def initialize(self, problem, options: SolverOptions) -> None:
        self.problem = problem
        self.options = options
        self._stats = Stats()

    def solve(self, x0, params):
        prob, opts = self.problem, self.options
        n = prob.n_x
        x = np.asarray(x0, dtype=float).copy()
        f = prob.objective(x, params)
        g = prob.gradient(x, params)

        B = np.eye(n)
        obj_hist = [f]
        step_hist = [0.0]
        bad_updates = 0
        self.converged = False
        self.termination = "max-iterations"

        it = 0
        for it in range(1, opts.max_iterations + 1):
            if not (np.isfinite(f) and np.all(np.isfinite(g))):
                self.termination = "nan"
                it -= 1
                break
            if np.abs(g).max(initial=0.0) <= opts.constraint_tolerance:
                self.converged = True
                self.termination = "gradient-tolerance"
                it -= 1
                break

            try:
                cho = scipy.linalg.cho_factor(B)
                d = -scipy.linalg.cho_solve(cho, g)
            except scipy.linalg.LinAlgError:
                B = np.eye(n)
                d = -g

            slope = float(g @ d)
            if slope >= 0.0:
                B = np.eye(n)
                d = -g
                slope = float(g @ d)

            alpha = 1.0
            f_new = prob.objective(x + alpha * d, params)
            for _ in range(opts.max_backtracks):
                if np.isfinite(f_new) and f_new <= f + opts.armijo_coeff * alpha * slope:
                    break
                alpha *= opts.backtrack_factor
                f_new = prob.objective(x + alpha * d, params)

            x_new = x + alpha * d
            g_new = prob.gradient(x_new, params)
            s = x_new - x
            y = g_new - g

            B, ok = damped_bfgs_update(B, s, y)
            if ok:
                bad_updates = 0
            else:
                bad_updates += 1
                if bad_updates >= 2:
                    B = np.eye(n)
                    bad_updates = 0

            step = float(np.abs(s).max(initial=0.0))
            obj_hist.append(f_new)
            step_hist.append(step)
            x, f, g = x_new, f_new, g_new

            if step <= opts.step_tolerance:
                self.converged = bool(np.all(np.isfinite(g))) and bool(
                    np.abs(g).max(initial=0.0) <= opts.constraint_tolerance
                )
                self.termination = "step-tolerance"
                break

        self._stats = Stats(
            iterations=it,
            objective_history=np.asarray(obj_hist),
            step_norm_history=np.asarray(step_hist),
        )
        return x

    def statistics(self) -> Stats:
        return self._stats
