"""
Freidlin-Wentzell Hamiltonian and shooting of extremal trajectories.

``H(x, p) = <b(x), p> + <p, a(x) p> / 2``.  Zero-energy solutions of

    x' = b + a p,    p' = -(db/dx)^T p - d_x <p, a p> / 2

leaving the cycle are minimum action paths; along them the quasi-potential
grows by ``<p, a p> / 2`` per unit time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .localqp import LocalModel, momentum_approx
from .systems import SystemSpec, eval_diffusion, eval_drift, eval_jacobian, finite_difference_jacobian

__all__ = [
    "ShootingError",
    "Extremal",
    "hamiltonian",
    "canonical_rhs",
    "implicit_midpoint",
    "shoot",
    "default_radius",
]


class ShootingError(RuntimeError):
    """The Hamiltonian drift budget was exhausted or the trajectory left the domain."""


def hamiltonian(spec: SystemSpec, x, p):
    """``<b(x), p> + <p, a(x) p> / 2``; vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    b = eval_drift(spec, x)
    a = eval_diffusion(spec, x, check=False)
    return np.einsum("...i,...i->...", b, p) + 0.5 * np.einsum("...i,...ij,...j->...", p, a, p)


def _diffusion_gradient(spec: SystemSpec, x, p):
    """``d_x <p, a(x) p>``: zero for constant ``a``, central differences otherwise."""
    if spec.constant_diffusion is not None:
        return np.zeros_like(x)
    def quad(y):
        return np.atleast_1d(p @ spec.diffusion(y) @ p)

    return finite_difference_jacobian(quad, x)[0]


def canonical_rhs(spec: SystemSpec, x, p):
    """Right-hand side ``(x', p')`` of the canonical equations."""
    a = eval_diffusion(spec, x, check=False)
    dx = eval_drift(spec, x) + a @ p
    dp = -eval_jacobian(spec, x).T @ p - 0.5 * _diffusion_gradient(spec, x, p)
    return dx, dp


def implicit_midpoint(f: Callable, y, h: float, tol: float = 1e-12, max_iter: int = 100):
    """
    One implicit midpoint step ``y1 = y + h f((y + y1) / 2)`` solved by
    fixed-point iteration.  Returns ``None`` when the iteration does not
    reach ``tol`` (the caller then shortens the step).
    """
    y1 = y + h * f(y)
    scale = max(1.0, float(np.max(np.abs(y))))
    for _ in range(max_iter):
        y_new = y + h * f(0.5 * (y + y1))
        if not np.all(np.isfinite(y_new)):
            return None
        err = float(np.max(np.abs(y_new - y1)))
        y1 = y_new
        if err <= tol * scale:
            return y1
    return None


@dataclass(eq=False)
class Extremal:
    """
    Shot trajectory.

    Attributes
    ----------
    t, x, p, V, H : ndarray
        Time grid, states, momenta, accumulated action and Hamiltonian.
    status : str
        ``"t_max"``, ``"event"``, ``"escaped"`` (left the bounding box) or
        ``"branch"`` (stopped at a discontinuity of the diffusion).
    seed : dict
        ``tau``, ``z`` and the initial momentum.
    """

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    V: np.ndarray
    H: np.ndarray
    status: str
    seed: dict = field(default_factory=dict)
    n_rejected: int = 0

    @property
    def max_abs_H(self) -> float:
        return float(np.max(np.abs(self.H)))


def default_radius(model: LocalModel) -> float:
    """Seed radius ``1e-3 * arclength / (2 pi)``."""
    return 1e-3 * model.cycle.arclength / (2.0 * np.pi)


_TRIPLE_JUMP = (
    1.0 / (2.0 - 2.0 ** (1.0 / 3.0)),
    -(2.0 ** (1.0 / 3.0)) / (2.0 - 2.0 ** (1.0 / 3.0)),
    1.0 / (2.0 - 2.0 ** (1.0 / 3.0)),
)


def _step(f, y, dt, scheme):
    if scheme == "midpoint":
        return implicit_midpoint(f, y, dt)
    if scheme == "composition4":
        # symmetric triple jump of midpoint steps: symplectic, fourth order
        for c in _TRIPLE_JUMP:
            y = implicit_midpoint(f, y, c * dt)
            if y is None:
                return None
        return y
    raise ValueError(f"unknown scheme {scheme!r}")


def shoot(
    spec: SystemSpec,
    model: LocalModel,
    tau: float,
    z_dir,
    h: Optional[float] = None,
    t_max: float = 50.0,
    step: Optional[float] = None,
    h_budget: float = 1e-7,
    stop: Optional[Callable] = None,
    box: float = 1e3,
    max_steps: int = 1_000_000,
    momentum=None,
    min_step: float = 1e-10,
    scheme: str = "midpoint",
    drift_rate: Optional[float] = None,
) -> Extremal:
    """
    Integrate the canonical equations from a tube point.

    Seeds ``x(0) = gamma(tau) + h sum z_i e_i`` and ``p(0)`` from the
    gradient of the quadratic model (or ``momentum`` if given), then takes
    implicit midpoint steps (``scheme="composition4"`` uses the fourth-order
    symmetric composition of three midpoint steps instead).

    Neither scheme conserves a non-quadratic ``H`` exactly, and along an
    escaping trajectory the energy error accumulates.  The step size is
    therefore chosen so the change of ``H`` per step stays below
    ``drift_rate * dt`` (default ``h_budget / (4 t_max)``), which keeps
    ``|H|`` under ``h_budget`` over the whole window.

    The accumulated action is ``V = Q(tau, z) + int <p, a p> / 2 dt``
    (midpoint quadrature on each substep).  ``stop(x)`` is a scalar event
    function; integration ends where it changes sign, the last step being
    shortened to the linearly predicted crossing.

    Raises
    ------
    ShootingError
        When the step size falls below ``min_step``.
    """
    d = spec.dim
    z_dir = np.atleast_1d(np.asarray(z_dir, dtype=float))
    if h is None:
        h = default_radius(model)
    nz = np.linalg.norm(z_dir)
    if nz == 0:
        raise ValueError("z_dir must be nonzero")
    z = h * z_dir / nz
    x0 = model.point(tau, z)
    p0 = momentum_approx(model, tau, z) if momentum is None else np.asarray(momentum, dtype=float)
    V0 = float(model.Q(tau, z))
    if step is None:
        step = 1e-2 * model.cycle.period / (2.0 * np.pi)
    max_step = step
    if drift_rate is None:
        drift_rate = h_budget / (4.0 * t_max)
    order = 2 if scheme == "midpoint" else 4

    def f(y):
        dx, dp = canonical_rhs(spec, y[:d], y[d:])
        return np.concatenate([dx, dp])

    def energy(y):
        return float(hamiltonian(spec, y[:d], y[d:]))

    def advance(y, dt):
        y1 = _step(f, y, dt, scheme)
        if y1 is None:
            return None, None
        ym = 0.5 * (y + y1)
        am = eval_diffusion(spec, ym[:d], check=False)
        return y1, 0.5 * dt * float(ym[d:] @ am @ ym[d:])

    branch = spec.diffusion_branch
    label0 = None if branch is None else bool(branch(x0))
    y = np.concatenate([x0, p0])
    H0 = energy(y)
    if abs(H0) > h_budget:
        raise ShootingError(f"seed Hamiltonian {H0:.3e} already exceeds the budget")
    ts, ys, Vs, Hs = [0.0], [y], [V0], [H0]
    t, V, Hc = 0.0, V0, H0
    g_prev = None if stop is None else float(stop(x0))
    status = "t_max"
    rejected = 0
    for _ in range(max_steps):
        if t >= t_max * (1.0 - 1e-14):
            break
        dt = min(step, t_max - t)
        y1, dV = advance(y, dt)
        if y1 is None:
            rejected += 1
            step *= 0.25
            if step < min_step:
                raise ShootingError(f"implicit solve failed at t={t:.6g}")
            continue
        if branch is not None and bool(branch(y1[:d])) != label0:
            # H jumps with the diffusion across the interface; the step is not taken
            status = "branch"
            break
        H1 = energy(y1)
        drift = abs(H1 - Hc)
        # floor at the rounding level of evaluating H itself
        target = drift_rate * dt + 64.0 * np.finfo(float).eps * (1.0 + float(np.abs(y1[d:]) @ np.abs(f(y1)[:d])))
        fac = 2.0 if drift == 0 else min(2.0, max(0.2, 0.9 * (target / drift) ** (1.0 / order)))
        if drift > target or abs(H1) > h_budget:
            rejected += 1
            step = dt * min(fac, 0.5)
            if step < min_step:
                raise ShootingError(f"energy budget exhausted at t={t:.6g} (|H|={abs(H1):.3e})")
            continue
        step = min(dt * fac, max_step) if dt == step else step
        if stop is not None:
            g = float(stop(y1[:d]))
            if g_prev * g <= 0 and g_prev != 0:
                w = g_prev / (g_prev - g)
                y_ev, dV_ev = advance(y, w * dt)
                if y_ev is not None:
                    y1, dV, dt = y_ev, dV_ev, w * dt
                    H1 = energy(y1)
                status = "event"
            g_prev = g
        t += dt
        V += dV
        y, Hc = y1, H1
        ts.append(t)
        ys.append(y)
        Vs.append(V)
        Hs.append(H1)
        if status == "event":
            break
        if np.max(np.abs(y[:d])) > box:
            status = "escaped"
            break
    Y = np.array(ys)
    return Extremal(
        t=np.array(ts),
        x=Y[:, :d],
        p=Y[:, d:],
        V=np.array(Vs),
        H=np.array(Hs),
        status=status,
        seed={"tau": float(tau), "z": z.tolist(), "p0": p0.tolist(), "Q0": V0},
        n_rejected=rejected,
    )
