"""Sequential quadratic programming with an l1 merit line search.

Each iteration linearizes the constraints, solves a QP subproblem through
the operator-splitting solver, and backtracks on the l1 merit function.
The Lagrangian Hessian is modeled by damped BFGS, seeded from the exact
cost Hessian projected to be positive definite (for sum-of-squares costs
near a solution this coincides with a Gauss-Newton seed).  Infeasible
subproblems are retried with elastic slacks weighted by 1e3 times the
current penalty.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .admm import solve_qp
from .base import SolverAdapter, SolverOptions, Stats
from .bfgs import damped_bfgs_update

__all__ = ["SQPSolver"]

_MIN_EIGENVALUE = 1e-6
_ELASTIC_WEIGHT = 1e3


def _psd_projection(H: np.ndarray, relative_floor: float = 1e-3) -> np.ndarray:
    """Clip the spectrum from below.

    The default floor scales with the largest eigenvalue so flat cost
    directions still give the QP subproblem workable curvature early on;
    a zero relative floor keeps the Hessian nearly exact for endgame
    (Newton-quality) steps.
    """
    n = H.shape[0]
    if not np.all(np.isfinite(H)):
        return np.eye(n)
    H = 0.5 * (H + H.T)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError:
        return np.eye(n)
    floor = max(_MIN_EIGENVALUE, relative_floor * float(w.max(initial=0.0)))
    w = np.clip(w, floor, None)
    return (V * w) @ V.T


class SQPSolver(SolverAdapter):
    """Adapter tag ``"sqp"``: accepts every problem classification."""

    accepts = None

    def initialize(self, problem, options: SolverOptions) -> None:
        self.problem = problem
        self.options = options
        self._stats = Stats()

    # merit helpers -----------------------------------------------------
    @staticmethod
    def _violation(kv, gv, av, hv) -> float:
        total = 0.0
        if av.size:
            total += float(np.abs(av).sum())
        if hv.size:
            total += float(np.abs(hv).sum())
        if kv.size:
            total += float(np.maximum(-kv, 0.0).sum())
        if gv.size:
            total += float(np.maximum(-gv, 0.0).sum())
        return total

    def _merit(self, x, params, M, c, A, b, mu) -> float:
        prob = self.problem
        f = prob.objective(x, params)
        kv = M @ x + c if M.size else np.zeros(0)
        av = A @ x + b if A.size else np.zeros(0)
        gv = prob.nonlin_ineq(x, params)
        hv = prob.nonlin_eq(x, params)
        if not np.isfinite(f):
            return np.inf
        return f + mu * self._violation(kv, gv, av, hv)

    def _kkt_residual(self, x, params, lam, nu, M, c, A, b) -> float:
        """Max of stationarity, feasibility, and complementarity residuals."""
        prob = self.problem
        grad = prob.gradient(x, params)
        kv = M @ x + c if M.size else np.zeros(0)
        av = A @ x + b if A.size else np.zeros(0)
        gv = prob.nonlin_ineq(x, params)
        hv = prob.nonlin_eq(x, params)
        Jg = prob.nonlin_ineq_jacobian(x, params)
        Jh = prob.nonlin_eq_jacobian(x, params)
        r_in = np.concatenate([kv, gv])
        r_eq = np.concatenate([av, hv])
        stat = grad.copy()
        if r_in.size:
            stat -= np.vstack([M, Jg]).T @ lam
        if r_eq.size:
            stat -= np.vstack([A, Jh]).T @ nu
        feas = 0.0
        if r_eq.size:
            feas = max(feas, float(np.abs(r_eq).max()))
        if r_in.size:
            feas = max(feas, float(np.maximum(-r_in, 0.0).max()))
        comp = float(np.abs(lam * r_in).max(initial=0.0))
        if not np.all(np.isfinite(stat)):
            return np.inf
        return max(float(np.abs(stat).max(initial=0.0)), feas, comp)

    # subproblem ----------------------------------------------------------
    def _subproblem(self, B, grad, C_in, r_in, C_eq, r_eq, d0, y0, mu, kkt=np.inf):
        """QP step: min 0.5 d'Bd + grad'd  s.t. C_in d >= -r_in, C_eq d = -r_eq.

        The splitting tolerances tighten with the outer KKT residual so the
        step stays accurate relative to the progress it must make.  Falls
        back to an elastic (slack-relaxed) formulation when the iteration
        fails to converge on the plain subproblem.
        """
        opts = self.options
        if np.isfinite(kkt):
            tol = float(np.clip(1e-3 * kkt, 1e-12, opts.qp_absolute_tolerance))
            if tol < opts.qp_absolute_tolerance:
                opts = replace(opts, qp_absolute_tolerance=tol, qp_relative_tolerance=tol)
        n = B.shape[0]
        m_in, m_eq = C_in.shape[0], C_eq.shape[0]
        C = np.vstack([C_in, C_eq]) if m_in + m_eq else np.zeros((0, n))
        lo = np.concatenate([-r_in, -r_eq])
        hi = np.concatenate([np.full(m_in, np.inf), -r_eq])

        # best-effort bar: an almost-converged plain solve still gives a
        # usable step; the bar scales with the outer residual since early
        # steps only need accuracy relative to the progress they make
        bar = max(1e-6, 100.0 * opts.qp_absolute_tolerance)
        if np.isfinite(kkt):
            bar = max(bar, 1e-3 * kkt)

        res_warm = solve_qp(B, grad, C, lo, hi, x0=d0, y0=y0, options=opts)
        if res_warm.converged or res_warm.max_residual <= bar:
            return res_warm.x, res_warm.y, res_warm.iterations, False

        # a stale warm start (active set changed) can stall the splitting
        # iteration; a cold run distinguishes that from true infeasibility
        res_cold = solve_qp(B, grad, C, lo, hi, options=opts)
        if res_cold.converged or res_cold.max_residual <= bar:
            return res_cold.x, res_cold.y, res_cold.iterations, False

        # Elastic retry: one slack per inequality row, a split pair per
        # equality row, all nonnegative and priced into the objective.
        w = _ELASTIC_WEIGHT * max(mu, 1.0)
        n_aug = n + m_in + 2 * m_eq
        H_aug = np.zeros((n_aug, n_aug))
        H_aug[:n, :n] = B
        q_aug = np.concatenate([grad, np.full(m_in + 2 * m_eq, w)])

        rows = m_in + m_eq + (m_in + 2 * m_eq)
        C_aug = np.zeros((rows, n_aug))
        lo_aug = np.empty(rows)
        hi_aug = np.empty(rows)
        r = 0
        if m_in:
            C_aug[r : r + m_in, :n] = C_in
            C_aug[r : r + m_in, n : n + m_in] = np.eye(m_in)
            lo_aug[r : r + m_in] = -r_in
            hi_aug[r : r + m_in] = np.inf
            r += m_in
        if m_eq:
            C_aug[r : r + m_eq, :n] = C_eq
            C_aug[r : r + m_eq, n + m_in : n + m_in + m_eq] = -np.eye(m_eq)
            C_aug[r : r + m_eq, n + m_in + m_eq :] = np.eye(m_eq)
            lo_aug[r : r + m_eq] = -r_eq
            hi_aug[r : r + m_eq] = -r_eq
            r += m_eq
        n_slack = m_in + 2 * m_eq
        C_aug[r :, n:] = np.eye(n_slack)
        lo_aug[r:] = 0.0
        hi_aug[r:] = np.inf

        res = solve_qp(H_aug, q_aug, C_aug, lo_aug, hi_aug, options=opts)
        return res.x[:n], res.y[: m_in + m_eq], res.iterations, True

    # main loop -------------------------------------------------------------
    def solve(self, x0, params):
        prob, opts = self.problem, self.options
        n = prob.n_x
        x = np.asarray(x0, dtype=float).copy()

        M, c = prob.lin_ineq(params)
        A, b = prob.lin_eq(params)
        n_k, n_a = M.shape[0], A.shape[0]
        n_g, n_h = prob.n_g, prob.n_h
        m_in, m_eq = n_k + n_g, n_a + n_h

        B = _psd_projection(prob.hessian(x, params))
        lam = np.zeros(m_in)  # inequality multipliers, >= 0
        nu = np.zeros(m_eq)  # equality multipliers
        mu = 1.0

        f = prob.objective(x, params)
        obj_hist = [f]
        step_hist = [0.0]
        self.converged = False
        self.termination = "max-iterations"
        self.trace: list[dict] = []

        d_prev = np.zeros(n)
        y_prev = np.zeros(m_in + m_eq)
        ls_failures = 0
        bad_updates = 0

        it = 0
        for it in range(1, opts.max_iterations + 1):
            f = prob.objective(x, params)
            grad = prob.gradient(x, params)
            kv = M @ x + c if n_k else np.zeros(0)
            av = A @ x + b if n_a else np.zeros(0)
            gv = prob.nonlin_ineq(x, params)
            hv = prob.nonlin_eq(x, params)
            Jg = prob.nonlin_ineq_jacobian(x, params)
            Jh = prob.nonlin_eq_jacobian(x, params)

            pieces = [f, grad, kv, av, gv, hv, Jg, Jh]
            if not all(np.all(np.isfinite(np.atleast_1d(p))) for p in pieces):
                self.termination = "nan"
                it -= 1
                break

            C_in = np.vstack([M, Jg]) if m_in else np.zeros((0, n))
            C_eq = np.vstack([A, Jh]) if m_eq else np.zeros((0, n))
            r_in = np.concatenate([kv, gv])
            r_eq = np.concatenate([av, hv])

            stat = grad.copy()
            if m_in:
                stat -= C_in.T @ lam
            if m_eq:
                stat -= C_eq.T @ nu
            feas = 0.0
            if r_eq.size:
                feas = max(feas, float(np.abs(r_eq).max()))
            if r_in.size:
                feas = max(feas, float(np.maximum(-r_in, 0.0).max()))
            comp = float(np.abs(lam * r_in).max(initial=0.0))
            kkt = max(float(np.abs(stat).max(initial=0.0)), feas, comp)
            if kkt <= opts.constraint_tolerance:
                self.converged = True
                self.termination = "kkt-tolerance"
                it -= 1
                break

            d, y, _, elastic = self._subproblem(
                B, grad, C_in, r_in, C_eq, r_eq, d_prev, y_prev, mu, kkt=kkt
            )
            if not np.all(np.isfinite(d)):
                self.termination = "nan"
                it -= 1
                break
            d_prev = d.copy()
            if y.size == y_prev.size:
                y_prev = y.copy()

            lam = np.maximum(-y[:m_in], 0.0)
            nu = -y[m_in:]

            # elastic multipliers carry the slack pricing; do not let them
            # inflate the merit penalty
            if not elastic:
                lam_norm = max(
                    float(np.abs(lam).max(initial=0.0)), float(np.abs(nu).max(initial=0.0))
                )
                if mu <= lam_norm:
                    mu = 2.0 * lam_norm + 1.0

            viol0 = self._violation(kv, gv, av, hv)
            merit0 = f + mu * viol0
            slope = float(grad @ d) - mu * viol0

            alpha = 1.0
            merit_new = self._merit(x + alpha * d, params, M, c, A, b, mu)
            accepted = False
            for _ in range(opts.max_backtracks):
                if np.isfinite(merit_new) and (
                    merit_new <= merit0 + opts.armijo_coeff * alpha * min(slope, 0.0)
                ):
                    accepted = True
                    break
                alpha *= opts.backtrack_factor
                merit_new = self._merit(x + alpha * d, params, M, c, A, b, mu)

            if not accepted and not (np.isfinite(merit_new) and merit_new < merit0):
                # no step length makes progress: swap in the (nearly) exact
                # cost Hessian once, then declare a stall at the best point
                ls_failures += 1
                if ls_failures < 2:
                    B = _psd_projection(prob.hessian(x, params), relative_floor=0.0)
                    obj_hist.append(f)
                    step_hist.append(0.0)
                    self.trace.append(
                        {"kkt": kkt, "alpha": 0.0, "step": 0.0, "mu": mu, "elastic": elastic}
                    )
                    continue
                self.converged = kkt <= opts.constraint_tolerance
                self.termination = "line-search-failure"
                obj_hist.append(f)
                step_hist.append(0.0)
                self.trace.append(
                    {"kkt": kkt, "alpha": 0.0, "step": 0.0, "mu": mu, "elastic": elastic}
                )
                break
            ls_failures = 0

            x_new = x + alpha * d
            s = x_new - x

            # BFGS on the Lagrangian gradient with the fresh multipliers
            grad_new = prob.gradient(x_new, params)
            Jg_new = prob.nonlin_ineq_jacobian(x_new, params)
            Jh_new = prob.nonlin_eq_jacobian(x_new, params)
            C_in_new = np.vstack([M, Jg_new]) if m_in else np.zeros((0, n))
            C_eq_new = np.vstack([A, Jh_new]) if m_eq else np.zeros((0, n))
            gL_new = grad_new.copy()
            gL_old = grad.copy()
            if m_in:
                gL_new -= C_in_new.T @ lam
                gL_old -= C_in.T @ lam
            if m_eq:
                gL_new -= C_eq_new.T @ nu
                gL_old -= C_eq.T @ nu
            yv = gL_new - gL_old

            B, ok = damped_bfgs_update(B, s, yv)
            if ok:
                bad_updates = 0
            else:
                bad_updates += 1
                if bad_updates >= 2:
                    B = np.eye(n)
                    bad_updates = 0

            step = float(np.abs(s).max(initial=0.0))
            obj_hist.append(prob.objective(x_new, params))
            step_hist.append(step)
            self.trace.append(
                {"kkt": kkt, "alpha": alpha, "step": step, "mu": mu, "elastic": elastic}
            )
            x = x_new

            if step <= opts.step_tolerance:
                # the iteration is stationary; certify the final point
                kkt = self._kkt_residual(x, params, lam, nu, M, c, A, b)
                if kkt > opts.constraint_tolerance and ls_failures < 2:
                    # one endgame retry with near-exact curvature
                    ls_failures += 1
                    B = _psd_projection(prob.hessian(x, params), relative_floor=0.0)
                    continue
                self.converged = kkt <= opts.constraint_tolerance
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
