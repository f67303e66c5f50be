"""
Equality-constrained smooth minimization by the augmented Lagrangian method.

The outer loop updates multipliers and the penalty of

    L(x; lam, mu) = f(x) + lam^T c(x) + mu |c(x)|^2 / 2,

the inner loop minimizes ``L`` over ``x`` with scipy's trust-region Newton
method (Hessian by finite differences of the analytic gradient) or, on
request, L-BFGS.  Multiplier signs follow the Lagrangian ``f + lam^T c``, so
the stationarity condition is ``grad f + J^T lam = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

__all__ = ["NlpProblem", "NlpResult", "minimize_constrained", "fd_gradient", "color_columns", "projected_gradient_norm"]


def fd_gradient(fun: Callable, x, step: float = 1e-7):
    """Central-difference gradient (fallback when no analytic gradient is given)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step * max(1.0, abs(x[i]))
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * e[i])
    return g


def _fd_jacobian(fun: Callable, x, step: float = 1e-7):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step * max(1.0, abs(x[i]))
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * e[i]))
    return np.stack(cols, axis=-1)


def color_columns(pattern) -> list:
    """
    Greedy grouping of columns whose nonzero rows are disjoint.

    ``pattern`` is a boolean ``(n, n)`` Hessian sparsity pattern.  All
    columns of a group can be differenced with one perturbation.
    """
    S = np.asarray(pattern, dtype=bool)
    groups, used = [], []
    for j in range(S.shape[1]):
        for g, rows in zip(groups, used):
            if not np.any(rows & S[:, j]):
                g.append(j)
                rows |= S[:, j]
                break
        else:
            groups.append([j])
            used.append(S[:, j].copy())
    return groups


@dataclass(eq=False)
class NlpProblem:
    """
    ``min f(x)`` subject to ``c(x) = 0``.

    Attributes
    ----------
    fun : callable
        Objective ``f``.  With ``grad=True`` it returns ``(f, grad f)``.
    x0 : array_like
    grad : callable, bool or None
        Gradient of ``f``; ``True`` means ``fun`` returns it; ``None`` falls
        back to central differences.
    constraints : callable, optional
        ``c(x)`` with values in ``R^m``.
    cjac : callable, optional
        Jacobian ``dc/dx`` of shape ``(m, n)``; finite differences if omitted.
    hess_pattern : array_like of bool, optional
        Structural nonzeros of the Hessian of the augmented Lagrangian.
        When given, the finite-difference Hessian differences groups of
        structurally independent columns together.
    """

    fun: Callable
    x0: np.ndarray
    grad: object = None
    constraints: Optional[Callable] = None
    cjac: Optional[Callable] = None
    hess_pattern: Optional[np.ndarray] = None

    def f_and_grad(self, x):
        if self.grad is True:
            f, g = self.fun(x)
            return float(f), np.asarray(g, dtype=float)
        f = float(self.fun(x))
        if callable(self.grad):
            return f, np.asarray(self.grad(x), dtype=float)
        return f, fd_gradient(self.fun, x)

    def c_and_jac(self, x):
        if self.constraints is None:
            return np.zeros(0), np.zeros((0, np.size(x)))
        c = np.atleast_1d(np.asarray(self.constraints(x), dtype=float))
        J = self.cjac(x) if self.cjac is not None else _fd_jacobian(self.constraints, x)
        return c, np.atleast_2d(np.asarray(J, dtype=float)).reshape(c.size, -1)


def _fd_hessian(grad, y, pattern, groups, rel_step=1e-6):
    """Central differences of ``grad`` over groups of independent columns, symmetrized."""
    n = y.size
    H = np.zeros((n, n))
    steps = rel_step * np.maximum(1.0, np.abs(y))
    for cols in groups:
        e = np.zeros(n)
        e[cols] = steps[cols]
        dg = (grad(y + e) - grad(y - e)) * 0.5
        for j in cols:
            rows = pattern[:, j]
            H[rows, j] = dg[rows] / steps[j]
    return 0.5 * (H + H.T)


def _kkt_refine(problem, x, lam, pattern, groups, tol_kkt, tol_feas, max_steps=10):
    """
    Newton iteration on the first-order conditions ``grad f + J^T lam = 0``,
    ``c = 0`` from a nearly optimal augmented Lagrangian iterate.

    The Lagrangian Hessian carries no penalty term, so it stays well
    conditioned where ``L(.; lam, mu)`` with a large ``mu`` does not.
    Steps are kept while ``max(|grad f + J^T lam|, |c|)`` decreases.
    Returns ``(x, lam, converged, kkt, feas, steps)``.
    """
    n = x.size

    def lag_grad(y):
        _, gy = problem.f_and_grad(y)
        return gy + problem.c_and_jac(y)[1].T @ lam

    _, g = problem.f_and_grad(x)
    c, J = problem.c_and_jac(x)
    res = max(np.max(np.abs(g + J.T @ lam)), np.max(np.abs(c)))
    steps = 0
    while steps < max_steps:
        kkt = projected_gradient_norm(g, J)
        feas = float(np.max(np.abs(c)))
        if kkt <= tol_kkt and feas <= tol_feas:
            return x, lam, True, kkt, feas, steps
        H = _fd_hessian(lag_grad, x, pattern, groups)
        m = c.size
        K = np.block([[H, J.T], [J, np.zeros((m, m))]])
        rhs = -np.concatenate([g + J.T @ lam, c])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            break
        x_new, lam_new = x + sol[:n], lam + sol[n:]
        _, g_new = problem.f_and_grad(x_new)
        c_new, J_new = problem.c_and_jac(x_new)
        res_new = max(np.max(np.abs(g_new + J_new.T @ lam_new)), np.max(np.abs(c_new)))
        if not res_new < res:
            break
        x, lam, g, c, J, res = x_new, lam_new, g_new, c_new, J_new, res_new
        steps += 1
    kkt = projected_gradient_norm(g, J)
    feas = float(np.max(np.abs(c)))
    return x, lam, kkt <= tol_kkt and feas <= tol_feas, kkt, feas, steps


def _newton_polish(aug, hess, x, gtol, nit, max_steps=20):
    """
    Plain Newton steps on ``grad L = 0``, kept while the gradient norm drops.

    Near a minimizer the decrease of ``L`` per step falls below its rounding
    error and trust-region acceptance tests stall; the gradient norm is
    still a reliable merit there.
    """
    g = aug(x)[1]
    gn = np.max(np.abs(g))
    for _ in range(max_steps):
        if gn <= gtol:
            break
        try:
            step = np.linalg.solve(hess(x), -g)
        except np.linalg.LinAlgError:
            break
        x_new = x + step
        g_new = aug(x_new)[1]
        gn_new = np.max(np.abs(g_new))
        if not gn_new < gn:
            break
        x, g, gn = x_new, g_new, gn_new
        nit += 1
    return x, nit


def projected_gradient_norm(g, J) -> float:
    """
    ``|P g|_inf`` with ``P`` the orthogonal projector onto the null space of
    ``J``, i.e. ``|g + J^T lam|_inf`` at the least-squares multiplier.
    """
    lam_ls = np.linalg.lstsq(J.T, -g, rcond=None)[0]
    return float(np.max(np.abs(g + J.T @ lam_ls)))


@dataclass
class NlpResult:
    x: np.ndarray
    fun: float
    multipliers: np.ndarray
    converged: bool
    status: str
    kkt: float
    feasibility: float
    outer_iterations: int
    inner_iterations: int
    penalty: float
    merit_history: list = field(default_factory=list)


def minimize_constrained(
    problem: NlpProblem,
    tol_kkt: float = 1e-8,
    tol_feas: float = 1e-10,
    max_outer: int = 60,
    max_inner: int = 500,
    mu0: float = 10.0,
    mu_max: float = 1e10,
    inner: str = "newton",
    refine: bool = True,
    refine_feas: float = 1e-6,
    refine_kkt: float = 1e-4,
) -> NlpResult:
    """
    Augmented Lagrangian method.

    Each outer iteration minimizes ``L(.; lam, mu)`` to a gradient tolerance
    that tightens towards ``tol_kkt``.  When the infeasibility
    ``|c|_inf`` has dropped below a quarter of the last accepted value, the
    iterate is accepted and ``lam <- lam + mu c``; otherwise the penalty is
    multiplied by 10 (capped at ``mu_max``).  The loop stops once
    the projected gradient ``|P grad f|_inf <= tol_kkt`` (``P`` projects onto
    the null space of the constraint Jacobian) and ``|c|_inf <= tol_feas``.
    The merit recorded for accepted iterates is ``max(|c|_inf, tol_feas)``,
    nonincreasing by construction.

    Parameters
    ----------
    inner : {"newton", "lbfgs"}
        ``"newton"``: scipy ``trust-exact`` with a Hessian from central
        differences of the analytic gradient of ``L``.  ``"lbfgs"``: scipy
        L-BFGS-B.
    refine : bool
        Once ``|c|_inf <= refine_feas`` and the projected gradient is below
        ``refine_kkt``, try Newton steps on the first-order conditions
        (Lagrangian Hessian by finite differences, no penalty term).  The
        refined point is returned only if it meets both tolerances; otherwise
        the augmented Lagrangian iteration continues unchanged.  This
        matters for problems with nearly flat directions, where large
        penalties make the inner problems too ill conditioned to solve.

    Returns
    -------
    NlpResult
        Flagged ``converged=False`` (status ``"max_outer"``) when the caps
        are reached; the last iterate is still returned.
    """
    x = np.array(problem.x0, dtype=float)
    c, _ = problem.c_and_jac(x)
    m = c.size
    lam = np.zeros(m)
    mu = mu0
    merit = []
    n_inner = 0
    omega = 1e-3
    kkt = np.inf
    if problem.hess_pattern is None:
        pattern = np.ones((x.size, x.size), dtype=bool)
        groups = [[j] for j in range(x.size)]
    else:
        pattern = np.asarray(problem.hess_pattern, dtype=bool)
        pattern = pattern | pattern.T
        groups = color_columns(pattern)
    feas = float(np.max(np.abs(c))) if m else 0.0

    for outer in range(1, max_outer + 1):

        def aug(y, lam=lam, mu=mu):
            f, g = problem.f_and_grad(y)
            if not np.isfinite(f):
                raise FloatingPointError("non-finite objective")
            if m == 0:
                return f, g
            cy, J = problem.c_and_jac(y)
            w = lam + mu * cy
            return f + lam @ cy + 0.5 * mu * (cy @ cy), g + J.T @ w

        gtol = max(tol_kkt, omega)
        if inner == "newton":

            def hess(y):
                return _fd_hessian(lambda u: aug(u)[1], y, pattern, groups)

            res = minimize(aug, x, jac=True, hess=hess, method="trust-exact", options={"gtol": gtol, "maxiter": max_inner})
            if np.max(np.abs(res.jac)) > gtol:
                res.x, res.nit = _newton_polish(aug, hess, res.x, gtol, res.nit)
        elif inner == "lbfgs":
            res = minimize(
                aug, x, jac=True, method="L-BFGS-B", options={"gtol": gtol, "ftol": 0.0, "maxiter": 20 * max_inner, "maxcor": 30}
            )
        else:
            raise ValueError(f"unknown inner solver {inner!r}")
        n_inner += int(res.nit)
        x = res.x
        f, g = problem.f_and_grad(x)
        c, J = problem.c_and_jac(x)
        feas = float(np.max(np.abs(c))) if m else 0.0
        if m == 0:
            kkt = float(np.max(np.abs(g)))
            if kkt <= tol_kkt:
                return NlpResult(x, f, lam, True, "converged", kkt, 0.0, outer, n_inner, mu, merit)
            omega = max(tol_kkt, 0.1 * omega)
            continue
        if not merit or feas <= 0.25 * merit[-1] or feas <= tol_feas:
            lam = lam + mu * c
            merit.append(max(feas, tol_feas))
            omega = max(tol_kkt, 0.1 * omega)
        else:
            mu = min(10.0 * mu, mu_max)
        kkt = projected_gradient_norm(g, J)
        log.debug("outer %d: inner %d, mu %.1e, feas %.2e, kkt %.2e, f %.10g", outer, res.nit, mu, feas, kkt, f)
        if kkt <= tol_kkt and feas <= tol_feas:
            return NlpResult(x, f, lam, True, "converged", kkt, feas, outer, n_inner, mu, merit)
        if refine and feas <= refine_feas and kkt <= refine_kkt:
            xr, lr, ok, kr, fr, steps = _kkt_refine(problem, x, lam, pattern, groups, tol_kkt, tol_feas)
            n_inner += steps
            log.debug("refine: ok %s, kkt %.2e, feas %.2e", ok, kr, fr)
            if ok:
                merit.append(max(fr, tol_feas))
                return NlpResult(xr, problem.f_and_grad(xr)[0], lr, True, "converged", kr, fr, outer, n_inner, mu, merit)
    f, _ = problem.f_and_grad(x)
    return NlpResult(x, f, lam, False, "max_outer", kkt, feas, max_outer, n_inner, mu, merit)
