"""Constrained minimization of the residual-energy objective.

Primary path: sequential quadratic programming with damped BFGS updates, an
L1 merit line search, and a primal active-set QP for the subproblems.  The
monotonicity constraints are affine in the free parameters, so QP iterates
stay feasible and every accepted SQP step preserves feasibility.  A classic
augmented-Lagrangian loop (same QP core, equalities penalized) is the
fallback; the result records which path produced it.

Internally the objective is normalized by V0^2 and the fundamental constraint
by V0, so the configured tolerances act on dimensionless quantities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SeedError, SolverError
from .objective import (ObjectiveReport, SolverConfig, e2_scaled_grad,
                        fundamental_constraint_grad_beta,
                        fundamental_constraint_residual, objective_report,
                        she_residual_grad_beta, she_residuals)
from .params import InverterParams
from .patterns import FreePattern, expansion_map
from .objective import monotonicity_slacks


@dataclass(frozen=True)
class OptimizationResult:
    initial_fp: FreePattern
    final_fp: FreePattern
    initial_report: ObjectiveReport
    final_report: ObjectiveReport
    iterations: int
    converged: bool
    kkt_residual: float
    objective_history: tuple
    method: str
    message: str


class _Problem:
    """Normalized objective/constraints over theta for fixed params."""

    def __init__(self, params: InverterParams, config: SolverConfig, p: int):
        self.params = params
        self.config = config
        self.m, self.off, _ = expansion_map(p)
        n6 = self.m.shape[0]
        d = np.zeros((n6 + 1, n6))
        for i in range(n6):
            d[i, i] = 1.0
            if i:
                d[i, i - 1] = -1.0
        d[n6, n6 - 1] = -1.0
        ends = np.zeros(n6 + 1)
        ends[-1] = 0.5
        # gaps(theta) = a_in @ theta - (tau - (d@off + ends)) >= 0
        self.a_in = d @ self.m
        self.b_in = config.tau - (d @ self.off + ends)
        self.scale = params.v0 ** 2

    def beta(self, theta):
        return self.m @ theta + self.off

    def fun_grad(self, theta):
        fp = FreePattern(p=self.params.p, theta=theta)
        val, grad = e2_scaled_grad(fp, self.params)
        return val / self.scale, grad / self.scale

    def constraints(self, theta):
        beta = self.beta(theta)
        v0 = self.params.v0
        c = [fundamental_constraint_residual(beta, self.params) / v0]
        grads = [self.m.T @ (fundamental_constraint_grad_beta(beta, self.params) / v0)]
        for order in self.config.she_orders:
            c.append(float(she_residuals(beta, [order])[0]))
            grads.append(self.m.T @ she_residual_grad_beta(beta, order))
        return np.array(c), np.vstack(grads)

    def slacks(self, theta):
        return self.a_in @ theta - self.b_in


def _solve_qp(bmat, g, e_jac, c_eq, a_in, b_sh, tol=1e-11, max_iter=400):
    """min 1/2 d'Bd + g'd  s.t.  E d = -gamma c_eq,  A d >= b_sh  (b_sh <= 0).

    Primal active-set method started from a feasible point.  The equality
    target is relaxed by gamma <= 1 when the full linearized correction would
    leave the polytope.  Returns (d, lam, mu, gamma); multipliers follow the
    convention grad f = E' lam + A' mu with mu >= 0 on active rows.
    """
    n = len(g)
    neq = 0 if e_jac is None else e_jac.shape[0]
    gamma = 1.0
    if neq:
        d0 = -e_jac.T @ np.linalg.solve(e_jac @ e_jac.T, c_eq)
        ad = a_in @ d0
        bad = ad < b_sh
        if np.any(bad):
            with np.errstate(divide="ignore"):
                gamma = min(1.0, 0.9 * float(np.min(b_sh[bad] / ad[bad])))
            gamma = max(gamma, 0.0)
            d0 = gamma * d0
    else:
        d0 = np.zeros(n)
    x = d0
    work: list[int] = []
    for _ in range(max_iter):
        rows = []
        if neq:
            rows.append(e_jac)
        if work:
            rows.append(a_in[work])
        if rows:
            cmat = np.vstack(rows)
            k = cmat.shape[0]
            kkt = np.block([[bmat, cmat.T], [cmat, np.zeros((k, k))]])
            rhs = np.concatenate([-(g + bmat @ x), np.zeros(k)])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            p = sol[:n]
            lam = -sol[n:n + neq]
            mu = -sol[n + neq:]
        else:
            p = np.linalg.solve(bmat, -(g + bmat @ x))
            lam = np.zeros(0)
            mu = np.zeros(0)
        if np.abs(p).max(initial=0.0) <= tol:
            if len(mu) == 0 or mu.min() >= -tol:
                mu_full = np.zeros(a_in.shape[0])
                for wi, mv in zip(work, mu):
                    mu_full[wi] = max(mv, 0.0)
                return x, lam, mu_full, gamma
            work.pop(int(np.argmin(mu)))
            continue
        ap = a_in @ p
        resid = a_in @ x - b_sh
        alpha, blocking = 1.0, -1
        for i in range(a_in.shape[0]):
            if i in work or ap[i] >= -1e-14:
                continue
            ratio = resid[i] / (-ap[i])
            if ratio < alpha:
                alpha, blocking = ratio, i
        x = x + max(alpha, 0.0) * p
        if blocking >= 0:
            work.append(blocking)
        elif alpha >= 1.0:
            continue
    raise SolverError("active-set QP did not settle")


def _sqp(problem: _Problem, theta0, config: SolverConfig):
    """Core SQP loop.  Returns (theta, info dict)."""
    theta = theta0.copy()
    n = len(theta)
    f, g = problem.fun_grad(theta)
    c, jac = problem.constraints(theta)
    bmat = np.eye(n)
    sigma = 1.0
    history = [f]
    kkt = np.inf
    iters = 0
    message = "iteration limit reached"
    converged = False
    for it in range(config.max_iter):
        try:
            d, lam, mu, _ = _solve_qp(bmat, g, jac, c, problem.a_in,
                                      problem.b_in - problem.a_in @ theta)
        except SolverError as exc:
            message = str(exc)
            break
        grad_l = g - jac.T @ lam - problem.a_in.T @ mu
        kkt = max(float(np.abs(grad_l).max()), float(np.abs(c).max()))
        if kkt <= config.kkt_tol and np.abs(c).max(initial=0.0) <= config.eq_tol:
            converged = True
            message = "kkt satisfied"
            break
        sigma = max(sigma, 2.0 * float(np.abs(lam).max(initial=0.0)))
        merit0 = f + sigma * np.abs(c).sum()
        slope = float(g @ d) - sigma * np.abs(c).sum()
        step = 1.0
        accepted = False
        for _ in range(50):
            theta_new = theta + step * d
            f_new, g_new = problem.fun_grad(theta_new)
            c_new, jac_new = problem.constraints(theta_new)
            if f_new + sigma * np.abs(c_new).sum() <= merit0 + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            message = "line search failed"
            break
        s = step * d
        y = (g_new - jac_new.T @ lam) - (g - jac.T @ lam)
        s_b_s = float(s @ bmat @ s)
        s_y = float(s @ y)
        if s_b_s > 0.0:
            if s_y < 0.2 * s_b_s:  # Powell damping keeps B positive definite
                t = 0.8 * s_b_s / (s_b_s - s_y)
                y = t * y + (1.0 - t) * (bmat @ s)
                s_y = float(s @ y)
            if s_y > 1e-16:
                bs = bmat @ s
                bmat = bmat - np.outer(bs, bs) / s_b_s + np.outer(y, y) / s_y
        theta, f, g, c, jac = theta_new, f_new, g_new, c_new, jac_new
        history.append(f)
        iters = it + 1
        if np.abs(s).max() < config.step_tol:
            message = "step below tolerance"
            converged = kkt <= 1e2 * config.kkt_tol
            break
    return theta, {
        "f": f, "kkt": kkt, "iters": iters, "converged": converged,
        "history": history, "message": message,
    }


def _auglag(problem: _Problem, theta0, config: SolverConfig):
    """Augmented-Lagrangian fallback: penalized equalities, same QP core."""
    theta = theta0.copy()
    n = len(theta)
    c, _ = problem.constraints(theta)
    lam = np.zeros(len(c))
    rho = 10.0
    history = []
    iters = 0
    kkt = np.inf
    best_c = np.abs(c).max(initial=0.0)
    for outer in range(30):
        def al_fun_grad(th):
            f, g = problem.fun_grad(th)
            cc, jj = problem.constraints(th)
            return (f + lam @ cc + 0.5 * rho * float(cc @ cc),
                    g + jj.T @ (lam + rho * cc))

        theta, info = _minimize_ineq(problem, al_fun_grad, theta, config)
        iters += info["iters"]
        history.extend(info["history"])
        c, jac = problem.constraints(theta)
        cmax = np.abs(c).max(initial=0.0)
        f, g = problem.fun_grad(theta)
        # KKT of the original problem with multiplier estimate -(lam + rho c)
        grad_l = g + jac.T @ (lam + rho * c)
        mu_est = _inequality_multipliers(problem, theta, grad_l)
        kkt = max(float(np.abs(grad_l - problem.a_in.T @ mu_est).max()), cmax)
        if kkt <= config.kkt_tol and cmax <= config.eq_tol:
            return theta, {"f": f, "kkt": kkt, "iters": iters, "converged": True,
                           "history": history, "message": "auglag converged"}
        lam = lam + rho * c
        if cmax > 0.25 * best_c:
            rho *= 10.0
        best_c = min(best_c, cmax)
    f, _ = problem.fun_grad(theta)
    return theta, {"f": f, "kkt": kkt, "iters": iters, "converged": False,
                   "history": history, "message": "auglag iteration limit"}


def _inequality_multipliers(problem, theta, grad):
    """Least-squares multipliers on the active gap constraints (diagnostic)."""
    slacks = problem.slacks(theta)
    active = np.nonzero(slacks <= 1e-10)[0]
    mu = np.zeros(problem.a_in.shape[0])
    if len(active):
        a = problem.a_in[active]
        sol, *_ = np.linalg.lstsq(a.T, grad, rcond=None)
        mu[active] = np.maximum(sol, 0.0)
    return mu


def _minimize_ineq(problem: _Problem, fun_grad, theta0, config: SolverConfig):
    """Inequality-constrained smooth minimization with the SQP machinery."""
    theta = theta0.copy()
    n = len(theta)
    f, g = fun_grad(theta)
    bmat = np.eye(n)
    history = [f]
    iters = 0
    for it in range(config.max_iter):
        try:
            d, _, mu, _ = _solve_qp(bmat, g, None, np.zeros(0), problem.a_in,
                                    problem.b_in - problem.a_in @ theta)
        except SolverError:
            break
        kkt = float(np.abs(g - problem.a_in.T @ mu).max())
        if kkt <= 0.1 * config.kkt_tol or np.abs(d).max(initial=0.0) <= config.step_tol:
            break
        step = 1.0
        accepted = False
        for _ in range(50):
            theta_new = theta + step * d
            f_new, g_new = fun_grad(theta_new)
            if f_new <= f + 1e-4 * step * float(g @ d):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        s = step * d
        y = g_new - g
        s_b_s = float(s @ bmat @ s)
        s_y = float(s @ y)
        if s_b_s > 0.0:
            if s_y < 0.2 * s_b_s:
                t = 0.8 * s_b_s / (s_b_s - s_y)
                y = t * y + (1.0 - t) * (bmat @ s)
                s_y = float(s @ y)
            if s_y > 1e-16:
                bs = bmat @ s
                bmat = bmat - np.outer(bs, bs) / s_b_s + np.outer(y, y) / s_y
        theta, f, g = theta_new, f_new, g_new
        history.append(f)
        iters = it + 1
    return theta, {"iters": iters, "history": history}


def optimize(fp0: FreePattern, params: InverterParams,
             config: SolverConfig | None = None) -> OptimizationResult:
    """Minimize the residual energy subject to the fundamental-amplitude
    equality, optional SHE equalities, and the minimum-gap inequalities.

    The seed must satisfy the gap constraints (equality residuals at the seed
    may be nonzero).  Hitting the iteration limit returns a non-converged
    result rather than raising.
    """
    config = config or SolverConfig()
    if params.p != fp0.p:
        raise SeedError(f"seed has P = {fp0.p} but params were derived for P = {params.p}")
    slack0 = monotonicity_slacks(fp0, config.tau)
    if slack0.min() < 0.0:
        raise SeedError(
            f"seed violates the minimum-gap constraints (worst slack {slack0.min():.3e})"
        )
    problem = _Problem(params, config, fp0.p)
    theta, info = _sqp(problem, fp0.theta, config)
    method = "sqp"
    if not info["converged"]:
        theta_al, info_al = _auglag(problem, theta, config)
        if info_al["converged"] or info_al["f"] < info["f"]:
            theta = theta_al
            info_al["history"] = info["history"] + info_al["history"]
            info_al["iters"] += info["iters"]
            info = info_al
            method = "sqp+auglag"
    final_fp = FreePattern(p=fp0.p, theta=theta)
    return OptimizationResult(
        initial_fp=fp0,
        final_fp=final_fp,
        initial_report=objective_report(fp0, params, config),
        final_report=objective_report(final_fp, params, config),
        iterations=info["iters"],
        converged=bool(info["converged"]),
        kkt_residual=float(info["kkt"]),
        objective_history=tuple(float(v) * problem.scale for v in info["history"]),
        method=method,
        message=info["message"],
    )


def optimize_with_she(fp0: FreePattern, params: InverterParams,
                      config: SolverConfig) -> OptimizationResult:
    """optimize() with the configured SHE equality constraints enforced."""
    return optimize(fp0, params, config)
