"""
Quadratic approximation of the quasi-potential in a tube around the cycle.

Near the cycle ``V(tau, z) = z^T G(tau) z / 2 + O(|z|^3)`` with ``G`` the
periodic Riccati solution.  The model also supplies the gradient of the
quadratic form (the momentum that seeds Hamiltonian shooting) and point
clouds on tube surfaces for export.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cycle import LimitCycle
from .frame import MovingFrame, from_curvilinear, to_curvilinear
from .riccati import PeriodicMatrixFunction

__all__ = ["LocalModel", "quadratic_qp", "momentum_approx", "tube_surface", "normal_directions"]


@dataclass(eq=False)
class LocalModel:
    """
    Quadratic quasi-potential around a cycle.

    Attributes
    ----------
    cycle : LimitCycle
    frame : MovingFrame
    G : PeriodicMatrixFunction
        Normal Hessian; for anti-periodic frames it is sampled over ``2 T``
        and ``(tau, z)`` with ``tau`` in ``[0, T)`` refer to its first half.
    h : float, optional
        Tube radius in state-space units.
    delta : float, optional
        Level value for tubes ``Q = delta``.
    """

    cycle: LimitCycle
    frame: MovingFrame
    G: PeriodicMatrixFunction
    h: Optional[float] = None
    delta: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.cycle.dim

    def Q(self, tau, z):
        return quadratic_qp(self, tau, z)

    def momentum(self, tau, z):
        return momentum_approx(self, tau, z)

    def point(self, tau, z):
        return from_curvilinear(self.frame, tau, z)

    def coordinates(self, x):
        return to_curvilinear(self.frame, x)

    def quasi_potential(self, x) -> float:
        """``Q`` at a Cartesian point inside the tubular chart."""
        tau, z = to_curvilinear(self.frame, x)
        return float(quadratic_qp(self, tau, z))

    def gradient(self, x):
        """``grad Q`` at a Cartesian point inside the tubular chart."""
        tau, z = to_curvilinear(self.frame, x)
        return momentum_approx(self, tau, z)


def quadratic_qp(model: LocalModel, tau, z):
    """``z^T G(tau) z / 2``."""
    z = np.asarray(z, dtype=float)
    G = model.G(tau)
    return 0.5 * np.einsum("...i,...ij,...j->...", z, G, z)


def momentum_approx(model: LocalModel, tau, z):
    """
    Gradient of the quadratic form in Cartesian coordinates.

    ``p = lambda <z, (G'/2 - Omega~^T G) z> e^0 + sum_i (G z)_i e^i`` with
    ``lambda = 1 / |gamma'(tau)|``.  The tangential term is quadratic in
    ``z`` and is kept.  ``G'`` is the exact right-hand side of the Riccati
    equation at the grid, interpolated in between.
    """
    tau = float(tau)
    z = np.asarray(z, dtype=float)
    G = model.G(tau)
    dG = model.G.derivative(tau)
    Om_n = model.frame.omega(tau)[1:, 1:]
    Einv = model.frame.reciprocal(tau)
    lam = 1.0 / np.linalg.norm(model.cycle.velocity(tau))
    tang = lam * (z @ ((0.5 * dG - Om_n.T @ G) @ z))
    return tang * Einv[0] + Einv[1:].T @ (G @ z)


def normal_directions(m: int, n: int, seed: int = 0) -> np.ndarray:
    """
    Unit vectors in ``R^m``: ``+-1`` for ``m = 1``, equispaced angles for
    ``m = 2`` and seeded Gaussian draws otherwise.
    """
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        th = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    v = np.random.default_rng(seed).standard_normal((n, m))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def tube_surface(model: LocalModel, n_tau: int = 64, n_theta: int = 16, h=None, delta=None, seed: int = 0):
    """
    Sample the tube ``|z| = h`` or the level tube ``Q = delta``.

    Returns a dict of arrays ``x (n, d)``, ``tau (n,)``, ``z (n, d-1)`` and
    ``Q (n,)`` with ``n = n_tau * n_dirs``.
    """
    h = model.h if h is None and delta is None else h
    delta = model.delta if delta is None and h is None else delta
    if (h is None) == (delta is None):
        raise ValueError("give exactly one of h (radius) or delta (level)")
    if (h is not None and h <= 0) or (delta is not None and delta <= 0):
        raise ValueError("tube size must be positive")
    m = model.dim - 1
    dirs = normal_directions(m, n_theta, seed)
    taus = np.arange(n_tau) * model.cycle.period / n_tau
    xs, ts, zs, qs = [], [], [], []
    for t in taus:
        G = model.G(t)
        if h is not None:
            z = h * dirs
        else:
            z = dirs * np.sqrt(2.0 * delta / np.einsum("ki,ij,kj->k", dirs, G, dirs))[:, None]
        xs.append(from_curvilinear(model.frame, t, z))
        ts.append(np.full(len(z), t))
        zs.append(z)
        qs.append(0.5 * np.einsum("ki,ij,kj->k", z, G, z))
    return {"x": np.concatenate(xs), "tau": np.concatenate(ts), "z": np.concatenate(zs), "Q": np.concatenate(qs)}
