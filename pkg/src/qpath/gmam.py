"""
Geometric minimum action paths that start on (or near) a limit cycle.

The path is discretised by points ``phi_0 .. phi_N`` with ``phi_N`` the
target.  Two variants:

* LQA: ``phi_0`` lies on the tube ``|z| = h`` around the cycle and the
  objective adds the quadratic quasi-potential ``z^T G(tau) z / 2`` of the
  attachment point.
* LC: ``phi_0 = gamma(tau)`` on the cycle itself (the ``h = 0`` limit).

Both are solved as equality-constrained problems with equal segment lengths
along the path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._numerics import loglog_slope
from .cycle import LimitCycle
from .frame import ChartError, MovingFrame, to_curvilinear
from .optimizer import NlpProblem, minimize_constrained
from .riccati import PeriodicMatrixFunction
from .systems import SystemSpec, eval_diffusion, eval_drift, eval_jacobian

__all__ = [
    "DiscretePath",
    "discrete_action",
    "discrete_action_general",
    "action_gradient",
    "minimize_lqa",
    "minimize_lc",
    "convergence_study",
    "default_kappa",
    "equal_arclength_defect",
]


@dataclass(eq=False)
class DiscretePath:
    """
    Optimised path and its action split.

    Attributes
    ----------
    points : ndarray, shape (N + 1, d)
    tau : float
        Attachment phase (in ``[0, span)`` of the frame).
    z : ndarray, shape (d - 1,)
        Attachment normal coordinates (empty for the LC variant).
    h : float
        Tube radius (0 for LC).
    geometric, quadratic : float
        Discrete geometric action and ``z^T G(tau) z / 2``.
    converged : bool
    info : dict
        Optimiser status and constraint residuals.
    """

    points: np.ndarray
    tau: float
    z: np.ndarray
    h: float
    geometric: float
    quadratic: float
    converged: bool
    info: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.geometric + self.quadratic

    @property
    def N(self) -> int:
        return self.points.shape[0] - 1

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "h": self.h,
            "tau": self.tau,
            "z": np.asarray(self.z).tolist(),
            "action_total": self.total,
            "action_geometric": self.geometric,
            "action_quadratic": self.quadratic,
            "converged": self.converged,
            **{k: v for k, v in self.info.items() if np.isscalar(v) or isinstance(v, (str, bool))},
        }


def _metric(spec: SystemSpec):
    """Inverse diffusion ``a^{-1}`` when ``a`` is constant, ``None`` for the identity."""
    if spec.has_identity_diffusion:
        return None
    a = spec.constant_diffusion
    if a is None:
        raise ValueError(f"{spec.name}: the path solvers need a constant diffusion tensor")
    if np.linalg.matrix_rank(a) < spec.dim:
        raise ValueError(f"{spec.name}: the path solvers need an invertible diffusion tensor")
    return np.linalg.inv(a)


def discrete_action(points, spec: SystemSpec) -> float:
    """
    ``sum_i |d_i| (|b_i| + |b_{i-1}|) / 2 - <d_i, (b_i + b_{i-1}) / 2>`` with
    ``d_i = phi_i - phi_{i-1}`` (Euclidean metric).
    """
    phi = np.asarray(points, dtype=float)
    if phi.shape[0] < 2:
        raise ValueError("a path needs at least two points")
    b = eval_drift(spec, phi)
    d = np.diff(phi, axis=0)
    nb = np.linalg.norm(b, axis=1)
    seg = np.linalg.norm(d, axis=1) * 0.5 * (nb[1:] + nb[:-1])
    seg -= 0.5 * np.einsum("ij,ij->i", d, b[1:] + b[:-1])
    return float(np.sum(seg))


def discrete_action_general(points, spec: SystemSpec) -> float:
    """
    Same quadrature in the metric ``<u, v>_a = u^T a^{-1} v``.

    Each segment averages the two endpoint values of
    ``|d|_{a(phi)} |b(phi)|_{a(phi)} - <d, b(phi)>_{a(phi)}``, so every term is
    nonnegative and ``a = I`` reproduces :func:`discrete_action`.
    """
    phi = np.asarray(points, dtype=float)
    if phi.shape[0] < 2:
        raise ValueError("a path needs at least two points")
    b = eval_drift(spec, phi)
    a = eval_diffusion(spec, phi)
    try:
        A = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("diffusion tensor is singular on the path") from exc
    d = np.diff(phi, axis=0)

    def term(Ak, bk):
        dd = np.sqrt(np.einsum("ij,ijk,ik->i", d, Ak, d))
        bb = np.sqrt(np.einsum("ij,ijk,ik->i", bk, Ak, bk))
        return dd * bb - np.einsum("ij,ijk,ik->i", d, Ak, bk)

    return float(np.sum(0.5 * (term(A[1:], b[1:]) + term(A[:-1], b[:-1]))))


def action_gradient(points, spec: SystemSpec, A=None):
    """
    Discrete geometric action (constant metric ``A = a^{-1}``, identity when
    ``None``) and its gradient with respect to every point.
    """
    phi = np.asarray(points, dtype=float)
    b = eval_drift(spec, phi)
    J = eval_jacobian(spec, phi)
    d = np.diff(phi, axis=0)
    if A is None:
        Ad, Ab = d, b
    else:
        Ad, Ab = d @ A, b @ A
    dn = np.sqrt(np.maximum(np.einsum("ij,ij->i", d, Ad), 0.0))
    bn = np.sqrt(np.maximum(np.einsum("ij,ij->i", b, Ab), 0.0))
    bsum = bn[1:] + bn[:-1]
    S = float(np.sum(0.5 * dn * bsum - 0.5 * np.einsum("ij,ij->i", d, Ab[1:] + Ab[:-1])))

    unit = np.divide(Ad, dn[:, None], out=np.zeros_like(Ad), where=dn[:, None] > 0)
    dbeta = np.divide(np.einsum("kji,kj->ki", J, Ab), bn[:, None], out=np.zeros_like(b), where=bn[:, None] > 0)
    JtAd = lambda k: np.einsum("kji,kj->ki", J[k], Ad)  # noqa: E731
    grad = np.zeros_like(phi)
    # derivative of segment i with respect to its right end phi_i
    grad[1:] += 0.5 * unit * bsum[:, None] + 0.5 * dn[:, None] * dbeta[1:] - 0.5 * (Ab[1:] + Ab[:-1]) - 0.5 * JtAd(slice(1, None))
    # and with respect to its left end phi_{i-1}
    grad[:-1] += -0.5 * unit * bsum[:, None] + 0.5 * dn[:, None] * dbeta[:-1] + 0.5 * (Ab[1:] + Ab[:-1]) - 0.5 * JtAd(slice(None, -1))
    return S, grad


def equal_arclength_defect(points) -> float:
    """``max_i | |d_i|^2 - |d_{i+1}|^2 | / mean(|d|)^2``."""
    d2 = np.sum(np.diff(np.asarray(points, dtype=float), axis=0) ** 2, axis=1)
    mean = np.mean(np.sqrt(d2))
    if mean == 0:
        return 0.0
    return float(np.max(np.abs(d2[:-1] - d2[1:])) / mean**2) if d2.size > 1 else 0.0


def default_kappa(cycle: LimitCycle) -> float:
    """Default ``kappa = arclength / (2 * 40)`` for tube radii ``h(N) = kappa / N``."""
    return cycle.arclength / 80.0


class _PathProblem:
    """
    Variables ``[phi_0 .. phi_{N-1}, tau, w]`` with ``z = h w``;
    ``phi_N = x_end`` is fixed.

    Working with ``w`` keeps the problem conditioning independent of ``h``.
    Constraints are dimensionless: the sphere as ``|w|^2 - 1``, the
    attachment in units of ``arclength / 2 pi`` and the arclength equalities
    relative to the squared initial mean segment.
    """

    def __init__(self, spec, cycle, frame, G, x_end, N, h, seg_scale):
        self.spec = spec
        self.cycle = cycle
        self.frame = frame
        self.G = G
        self.x_end = np.asarray(x_end, dtype=float)
        self.N = N
        self.h = h
        self.d = spec.dim
        self.m = self.d - 1 if h > 0 else 0
        self.A = _metric(spec)
        self.seg2 = seg_scale**2
        self.len_scale = max(cycle.arclength / (2.0 * np.pi), 1e-300)

    @property
    def n(self):
        return self.N * self.d + 1 + self.m

    def pack(self, phi, tau, z):
        w = np.asarray(z, dtype=float) / self.h if self.m else np.zeros(0)
        return np.concatenate([np.asarray(phi[: self.N]).ravel(), [tau], w])

    def unpack(self, v):
        """Points, ``tau`` and the scaled normal coordinate ``w``."""
        Nd = self.N * self.d
        phi = np.vstack([v[:Nd].reshape(self.N, self.d), self.x_end])
        return phi, float(v[Nd]), v[Nd + 1 :]

    def objective(self, v):
        phi, tau, w = self.unpack(v)
        S, gphi = action_gradient(phi, self.spec, self.A)
        g = np.zeros(self.n)
        g[: self.N * self.d] = gphi[: self.N].ravel()
        if self.m:
            h2 = self.h**2
            Gt = self.G(tau)
            S += 0.5 * h2 * (w @ Gt @ w)
            g[self.N * self.d] = 0.5 * h2 * (w @ self.G.derivative(tau) @ w)
            g[self.N * self.d + 1 :] = h2 * (Gt @ w)
        return S, g

    def constraints(self, v):
        phi, tau, w = self.unpack(v)
        cons = []
        if self.m:
            cons.append([w @ w - 1.0])
        attach = self.cycle.position(tau) - phi[0]
        if self.m:
            attach = attach + self.h * (self.frame.basis(tau)[:, 1:] @ w)
        cons.append(attach / self.len_scale)
        d2 = np.sum(np.diff(phi, axis=0) ** 2, axis=1)
        cons.append((d2[:-1] - d2[1:]) / self.seg2)
        return np.concatenate(cons)

    def jacobian(self, v):
        phi, tau, w = self.unpack(v)
        N, d, m = self.N, self.d, self.m
        r0 = 1 if m else 0
        Jc = np.zeros((r0 + d + N - 1, self.n))
        it = N * d
        if m:
            Jc[0, it + 1 :] = 2.0 * w
        dtau = self.cycle.velocity(tau)
        if m:
            dtau = dtau + self.h * (self.frame.basis_derivative(tau)[:, 1:] @ w)
            Jc[r0 : r0 + d, it + 1 :] = self.h * self.frame.basis(tau)[:, 1:] / self.len_scale
        Jc[r0 : r0 + d, it] = dtau / self.len_scale
        Jc[r0 : r0 + d, 0:d] = -np.eye(d) / self.len_scale
        # row i-1 of the arclength block: |phi_i - phi_{i-1}|^2 - |phi_{i+1} - phi_i|^2
        diff = np.diff(phi, axis=0) * (2.0 / self.seg2)
        arc = np.zeros((N - 1, N, d))
        i = np.arange(1, N)
        arc[i - 1, i] = diff[:-1] + diff[1:]
        arc[i - 1, i - 1] = -diff[:-1]
        j = i[:-1]
        arc[j - 1, j + 1] = -diff[1:-1]
        Jc[r0 + d :, : N * d] = arc.reshape(N - 1, N * d)
        return Jc

    def hess_pattern(self):
        """Block-pentadiagonal in the points, dense among ``phi_0``, ``tau`` and ``z``."""
        N, d = self.N, self.d
        blk = np.arange(self.n) // d
        blk[N * d :] = -1
        P = (np.abs(blk[:, None] - blk[None, :]) <= 2) & (blk[:, None] >= 0) & (blk[None, :] >= 0)
        border = (blk == 0) | (blk == -1)
        P |= border[:, None] & border[None, :]
        return P


def _initial_attachment(frame: MovingFrame, cycle: LimitCycle, x_end, h):
    tau0 = cycle.nearest_phase(x_end)
    r = np.asarray(x_end, dtype=float) - cycle.position(tau0)
    if h == 0:
        return tau0, np.zeros(0)
    w = frame.reciprocal(tau0)[1:] @ r
    nw = np.linalg.norm(w)
    if nw == 0:
        w = np.zeros(cycle.dim - 1)
        w[0] = 1.0
        nw = 1.0
    return tau0, h * w / nw


def resample_path(points, M: int) -> np.ndarray:
    """``M + 1`` points equally spaced in arclength along a polyline."""
    pts = np.asarray(points, dtype=float)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    if s[-1] == 0:
        return np.repeat(pts[:1], M + 1, axis=0)
    t = np.linspace(0.0, s[-1], M + 1)
    return np.stack([np.interp(t, s, pts[:, k]) for k in range(pts.shape[1])], axis=1)


_PATH_OPTIMIZER_DEFAULTS = {"mu0": 100.0, "max_outer": 200, "max_inner": 5000}


def _solve_path(spec, cycle, frame, G, x_end, N, h, init, optimizer_options, n_coarse=10):
    if N < 2:
        raise ValueError("N must be at least 2")
    x_end = np.asarray(x_end, dtype=float)
    d = spec.dim
    # degenerate targets on the tube (or on the cycle for h = 0)
    try:
        tau_e, z_e = to_curvilinear(frame, x_end)
        inside = np.linalg.norm(z_e) < h * (1.0 - 1e-8)
        on_surface = abs(np.linalg.norm(z_e) - h) <= 1e-8 * max(h, cycle.arclength)
    except ChartError:
        inside = on_surface = False
    if inside:
        raise ValueError("x_end lies inside the tube; the quadratic model applies there directly")
    if on_surface:
        zq = z_e if h > 0 else np.zeros(0)
        quad = 0.5 * float(zq @ G(tau_e) @ zq) if h > 0 else 0.0
        pts = np.repeat(x_end[None], N + 1, axis=0)
        return DiscretePath(pts, float(tau_e), zq, h, 0.0, quad, True, {"status": "target_on_tube"})

    if init is None:
        tau0, z0 = _initial_attachment(frame, cycle, x_end, h)
        start = cycle.position(tau0)
        if h > 0:
            start = start + frame.basis(tau0)[:, 1:] @ z0
        if n_coarse and N > n_coarse:
            # coarse-to-fine: the same problem on fewer points supplies the guess
            Nc = N
            while Nc > n_coarse:
                Nc = (Nc + 1) // 2
            coarse = _solve_path(spec, cycle, frame, G, x_end, Nc, h, None, optimizer_options, n_coarse=0)
            while Nc < N:
                Nc = min(2 * Nc, N)
                guess = {"points": resample_path(coarse.points, Nc), "tau": coarse.tau, "z": coarse.z}
                coarse = _solve_path(spec, cycle, frame, G, x_end, Nc, h, guess, optimizer_options, n_coarse=0)
            return coarse
        s = np.linspace(0.0, 1.0, N + 1)[:, None]
        phi0 = (1.0 - s) * start + s * x_end
    else:
        phi0 = np.asarray(init["points"], dtype=float)
        tau0 = float(init["tau"])
        z0 = np.asarray(init.get("z", np.zeros(d - 1 if h > 0 else 0)), dtype=float)
        if phi0.shape != (N + 1, d):
            raise ValueError("initial path has the wrong shape")
    seg = float(np.sum(np.linalg.norm(np.diff(phi0, axis=0), axis=1))) / N
    prob = _PathProblem(spec, cycle, frame, G, x_end, N, h, max(seg, 1e-12))
    nlp = NlpProblem(
        prob.objective,
        prob.pack(phi0, tau0, z0),
        grad=True,
        constraints=prob.constraints,
        cjac=prob.jacobian,
        hess_pattern=prob.hess_pattern(),
    )
    res = minimize_constrained(nlp, **{**_PATH_OPTIMIZER_DEFAULTS, **(optimizer_options or {})})
    phi, tau, w = prob.unpack(res.x)
    z = h * w
    geo = action_gradient(phi, spec, prob.A)[0]
    quad = 0.5 * float(z @ G(tau) @ z) if h > 0 else 0.0
    cons = prob.constraints(res.x)
    info = {
        "status": res.status,
        "kkt": res.kkt,
        "feasibility": res.feasibility,
        "outer_iterations": res.outer_iterations,
        "inner_iterations": res.inner_iterations,
        "arclength_defect": equal_arclength_defect(phi),
        "attachment_residual": float(np.max(np.abs(cons[(1 if h > 0 else 0) : (1 if h > 0 else 0) + d]))) * prob.len_scale,
        "sphere_residual": float(abs(z @ z - h * h)) if h > 0 else 0.0,
    }
    return DiscretePath(phi, tau, np.asarray(z), h, geo, quad, res.converged, info)


def minimize_lqa(
    spec: SystemSpec,
    cycle: LimitCycle,
    frame: MovingFrame,
    G: PeriodicMatrixFunction,
    x_end,
    N: int = 160,
    h: Optional[float] = None,
    init: Optional[dict] = None,
    kappa: Optional[float] = None,
    optimizer_options: Optional[dict] = None,
) -> DiscretePath:
    """
    Minimum action path from the tube ``|z| = h`` to ``x_end``.

    Minimises ``S_N(phi) + z^T G(tau) z / 2`` over ``phi_0 .. phi_{N-1}``,
    ``tau`` and ``z`` subject to ``|z|^2 = h^2``,
    ``phi_0 = gamma(tau) + sum_i z_i e_i(tau)`` and equal segment lengths.
    ``h`` defaults to ``kappa / N`` (see :func:`default_kappa`).  The
    default initial guess attaches at the cycle phase nearest ``x_end``,
    with ``z`` along the normal projection of ``x_end - gamma``, and runs a
    straight line from there.  ``init`` may supply ``points``, ``tau``, ``z``.
    """
    if h is None:
        h = (default_kappa(cycle) if kappa is None else kappa) / N
    if h <= 0:
        raise ValueError("tube radius must be positive (use minimize_lc for h = 0)")
    return _solve_path(spec, cycle, frame, G, x_end, N, h, init, optimizer_options)


def minimize_lc(
    spec: SystemSpec,
    cycle: LimitCycle,
    frame: MovingFrame,
    x_end,
    N: int = 160,
    init: Optional[dict] = None,
    optimizer_options: Optional[dict] = None,
) -> DiscretePath:
    """Minimum action path from the cycle itself (``phi_0 = gamma(tau)``) to ``x_end``."""
    return _solve_path(spec, cycle, frame, None, x_end, N, 0.0, init, optimizer_options)


def convergence_study(
    spec: SystemSpec,
    cycle: LimitCycle,
    frame: MovingFrame,
    G: PeriodicMatrixFunction,
    x_end,
    Ns: Sequence[int] = (20, 40, 80, 160),
    kappa: Optional[float] = None,
    reference: Optional[float] = None,
    optimizer_options: Optional[dict] = None,
) -> dict:
    """
    LQA solves with ``h = kappa / N`` for each ``N``.

    Errors are measured against ``reference`` when given, otherwise against
    the result at the largest ``N`` (which is then left out of the fit).
    ``order`` is minus the least-squares slope of ``log error`` against
    ``log N``, so second-order convergence gives ``order`` near 2.
    Returns ``{"N", "h", "action", "error", "order", "reference", "kappa",
    "paths"}``.
    """
    Ns = sorted(int(n) for n in Ns)
    if kappa is None:
        kappa = default_kappa(cycle)
    paths = [minimize_lqa(spec, cycle, frame, G, x_end, N=n, h=kappa / n, optimizer_options=optimizer_options) for n in Ns]
    for n, p in zip(Ns, paths):
        if not p.converged:
            raise RuntimeError(f"path solve at N={n} did not converge ({p.info.get('status')})")
    actions = np.array([p.total for p in paths])
    if reference is None:
        ref = actions[-1]
        fit = slice(0, len(Ns) - 1)
    else:
        ref = float(reference)
        fit = slice(0, len(Ns))
    err = np.abs(actions - ref)
    order = -loglog_slope(np.array(Ns)[fit], err[fit])
    return {
        "N": Ns,
        "h": [kappa / n for n in Ns],
        "action": actions.tolist(),
        "error": err.tolist(),
        "order": order,
        "reference": ref,
        "kappa": kappa,
        "paths": paths,
    }
