"""
Moving frames along a limit cycle and the curvilinear coordinates they induce.

A frame is a smooth basis ``E(tau) = [e_0, ..., e_{d-1}]`` with ``e_0`` the
unit tangent.  Two constructions are provided: the planar Frenet frame and,
in any dimension, a frame whose normal vectors are left eigenvectors of the
monodromy matrix.  Eigenvectors attached to negative multipliers close up
with a sign flip after one period; such frames are stored *unwrapped* over
two periods, ``E(tau + T) = E(tau) F``, so every derived coefficient is a
smooth ``span``-periodic function with ``span = 2 T``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._numerics import ATOL, RTOL, PeriodicSpline, periodic_derivative, solve
from .cycle import LimitCycle
from .systems import SystemSpec, eval_drift, eval_jacobian

__all__ = [
    "FrameError",
    "ChartError",
    "MovingFrame",
    "build_frenet_2d",
    "build_eigen_frame",
    "build_frame",
    "monodromy_along_cycle",
    "omega_matrix",
    "to_curvilinear",
    "from_curvilinear",
    "curvilinear_gradient",
]

COND_WARN = 1e8


class FrameError(RuntimeError):
    """The frame cannot be constructed (degenerate multipliers, vanishing speed)."""


class ChartError(RuntimeError):
    """A point lies outside the tubular chart (phase Newton failed)."""


@dataclass(eq=False)
class MovingFrame:
    """
    Sampled moving frame.

    Attributes
    ----------
    cycle : LimitCycle
    kind : str
        ``"frenet"`` or ``"eigen"``.
    tau : ndarray, shape (n,)
        Uniform grid on ``[0, span)``.
    E, Einv, Omega : ndarray, shape (n, d, d)
        Basis, reciprocal basis (rows ``e^i``) and ``Omega = E^{-1} dE/dtau``.
    speed : ndarray, shape (n,)
        ``|gamma'(tau)|``.
    flip : ndarray, shape (d,)
        Diagonal of the sign matrix ``F``; ``-1`` marks anti-periodic vectors.
    cond : ndarray, shape (n,)
        Condition number of ``E``.
    """

    cycle: LimitCycle
    kind: str
    tau: np.ndarray
    E: np.ndarray
    Einv: np.ndarray
    Omega: np.ndarray
    speed: np.ndarray
    flip: np.ndarray

    def __post_init__(self):
        self.cond = np.linalg.cond(self.E)
        if np.max(self.cond) > COND_WARN:
            warnings.warn(f"frame condition number reaches {np.max(self.cond):.3e}")
        self._E = PeriodicSpline(self.tau, self.E, self.span)
        self._Omega = PeriodicSpline(self.tau, self.Omega, self.span)

    @property
    def period(self) -> float:
        return self.cycle.period

    @property
    def span(self) -> float:
        """Period of the frame itself: ``T`` or ``2 T`` for anti-periodic frames."""
        return self.cycle.period * (2 if self.antiperiodic else 1)

    @property
    def antiperiodic(self) -> bool:
        return bool(np.any(self.flip < 0))

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    @property
    def F(self) -> np.ndarray:
        return np.diag(self.flip.astype(float))

    def basis(self, tau):
        """``E(tau)``."""
        if self.kind == "frenet":
            return _frenet_basis(self.cycle.system.drift(self.cycle.position(tau)))
        return self._E(tau)

    def basis_derivative(self, tau):
        """``dE/dtau = E Omega``."""
        if self.kind == "frenet":
            return self.basis(tau) @ self.omega(tau)
        return self._E.derivative(tau)

    def reciprocal(self, tau):
        """``E(tau)^{-1}``; its rows are the reciprocal vectors ``e^i``."""
        return np.linalg.inv(self.basis(tau))

    def omega(self, tau):
        if self.kind == "frenet":
            x = self.cycle.position(tau)
            b = self.cycle.system.drift(x)
            acc = eval_jacobian(self.cycle.system, x) @ b
            return _frenet_omega(b, acc)
        return self._Omega(tau)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "period": self.period,
            "span": self.span,
            "n_samples": int(self.tau.size),
            "flip": self.flip.astype(int).tolist(),
            "max_cond": float(np.max(self.cond)),
        }


def _frenet_basis(b):
    b = np.asarray(b, dtype=float)
    e0 = b / np.linalg.norm(b, axis=-1, keepdims=True)
    e1 = np.stack([e0[..., 1], -e0[..., 0]], axis=-1)
    return np.stack([e0, e1], axis=-1)


def _frenet_omega(b, acc):
    # d e0/dtau = (acc - e0 <e0, acc>) / |b|; the normal rotates rigidly with e0
    b = np.asarray(b, dtype=float)
    speed = np.linalg.norm(b, axis=-1)
    e = _frenet_basis(b)
    w = np.einsum("...i,...i->...", e[..., 1], acc) / speed
    out = np.zeros(b.shape[:-1] + (2, 2))
    out[..., 1, 0] = w
    out[..., 0, 1] = -w
    return out


def build_frenet_2d(cycle: LimitCycle) -> MovingFrame:
    """
    Planar frame: unit tangent ``e_0`` and ``e_1 = (e_0y, -e_0x)``.

    ``Omega`` is evaluated in closed form from ``b`` and ``(db/dx) b``; its
    normal-normal block vanishes identically.
    """
    if cycle.dim != 2:
        raise FrameError("the Frenet construction is only provided in the plane")
    spec = cycle.system
    b = cycle.velocities
    speed = np.linalg.norm(b, axis=1)
    if np.min(speed) == 0:
        raise FrameError("the cycle velocity vanishes")
    acc = np.einsum("kij,kj->ki", eval_jacobian(spec, cycle.states), b)
    E = _frenet_basis(b)
    Einv = np.swapaxes(E, 1, 2).copy()
    Omega = _frenet_omega(b, acc)
    return MovingFrame(cycle, "frenet", cycle.tau.copy(), E, Einv, Omega, speed, np.ones(2))


def monodromy_along_cycle(spec: SystemSpec, cycle: LimitCycle, rtol=RTOL, atol=ATOL):
    """
    Monodromy matrices ``Phi(tau_k + T, tau_k)`` on the cycle grid.

    Uses ``Phi(tau + T, tau) = Phi(tau, 0) Phi(T, tau)``: one forward sweep
    gives ``Phi(tau, 0)``, one backward sweep of the adjoint equation
    ``dX/dtau = -X J(gamma(tau))`` gives ``Phi(T, tau)``.  Both factors stay
    bounded, so no ill-conditioned inverse is formed.
    """
    d = spec.dim
    T = cycle.period
    tau = cycle.tau

    def fwd(_, y):
        x = y[:d]
        return np.concatenate([spec.drift(x), (eval_jacobian(spec, x) @ y[d:].reshape(d, d)).ravel()])

    y0 = np.concatenate([cycle.states[0], np.eye(d).ravel()])
    sol_f = solve(fwd, (0.0, T), y0, rtol=rtol, atol=atol, dense_output=True)
    A = sol_f.sol(tau)[d:].T.reshape(-1, d, d)

    def bwd(t, y):
        x = sol_f.sol(t)[:d]
        return -(y.reshape(d, d) @ eval_jacobian(spec, x)).ravel()

    t_back = np.concatenate([[T], tau[::-1]])
    sol_b = solve(bwd, (T, 0.0), np.eye(d).ravel(), rtol=rtol, atol=atol, t_eval=t_back)
    B = sol_b.y[:, 1:].T.reshape(-1, d, d)[::-1]
    return A @ B


def _normal_blocks(mono_t, e0, ref_vals):
    """
    Real bases of the left eigenspaces of ``mono_t`` for the reference
    nontrivial multipliers, each projected onto ``e0``'s orthogonal complement.
    Returns a list of ``(d, 1)`` or ``(d, 2)`` arrays.
    """
    vals, vecs = np.linalg.eig(mono_t.T)
    used = np.zeros(vals.size, bool)
    blocks = []
    for mu in ref_vals:
        dist = np.abs(vals - mu)
        dist[used] = np.inf
        j = int(np.argmin(dist))
        used[j] = True
        if abs(mu.imag) > 0:
            if mu.imag < 0:
                continue
            dist = np.abs(vals - np.conj(mu))
            dist[used] = np.inf
            used[int(np.argmin(dist))] = True
            block = np.stack([vecs[:, j].real, vecs[:, j].imag], axis=1)
        else:
            block = vecs[:, j].real[:, None]
        block = block - np.outer(e0, e0 @ block)
        q, _ = np.linalg.qr(block)
        blocks.append(q)
    return blocks


def _procrustes(current, previous):
    """Orthogonal ``R`` maximising the overlap ``tr(previous^T current R)``."""
    u, _, vt = np.linalg.svd(current.T @ previous)
    return u @ vt


def build_eigen_frame(spec: SystemSpec, cycle: LimitCycle, rtol=RTOL, atol=ATOL, gap_tol=1e-9) -> MovingFrame:
    """
    Frame whose normal vectors span left eigenspaces of the monodromy matrix.

    Real multipliers give one unit eigenvector each; a complex pair gives an
    orthonormal basis of its real two-dimensional left-invariant subspace.
    Signs (or orthogonal mixing inside two-dimensional blocks) follow the
    previous grid point.  After one loop a vector either closes up (periodic)
    or returns to its negative (anti-periodic, ``F = -1``); periodic vectors
    come first.  A residual rotation of a complex block is unwound linearly in
    ``tau`` so the block closes up.  ``Omega`` comes from fourth-order central
    differences of the unwrapped frame.
    """
    d = spec.dim
    if d < 2:
        raise FrameError("a moving frame needs d >= 2")
    K = cycle.n_samples
    T = cycle.period
    b = eval_drift(spec, cycle.states)
    speed = np.linalg.norm(b, axis=1)
    if np.min(speed) == 0:
        raise FrameError("the cycle velocity vanishes")
    e0 = b / speed[:, None]

    mono = monodromy_along_cycle(spec, cycle, rtol, atol)
    vals0 = np.linalg.eigvals(mono[0])
    trivial = int(np.argmin(np.abs(vals0 - 1.0)))
    ref = np.delete(vals0, trivial)
    ref = ref[np.lexsort((-ref.imag, -ref.real, -np.abs(ref)))]
    scale = max(1.0, np.max(np.abs(vals0)))
    for i in range(ref.size):
        for j in range(i + 1, ref.size):
            if abs(ref[i] - ref[j]) < gap_tol * scale and abs(ref[i].imag) == 0:
                raise FrameError(f"clustered multipliers {ref[i]} and {ref[j]}")
    if np.min(np.abs(ref - 1.0)) < 1e-6:
        raise FrameError("a nontrivial multiplier is numerically equal to 1")

    blocks = [_normal_blocks(mono[k], e0[k], ref) for k in range(K)]
    nb = len(blocks[0])
    for k in range(1, K):
        for i in range(nb):
            blocks[k][i] = blocks[k][i] @ _procrustes(blocks[k][i], blocks[k - 1][i])

    signs = []
    for i in range(nb):
        close = _procrustes(blocks[K - 1][i], blocks[0][i])
        # holonomy: the continued block at tau = T equals blocks[0] @ close^T
        hol = close.T
        w = blocks[0][i].shape[1]
        if w == 1:
            signs.append([float(np.sign(hol[0, 0]))])
            continue
        if np.linalg.det(hol) < 0:
            # reflection: align the block with its axes, one vector flips
            ev, evec = np.linalg.eigh(0.5 * (hol + hol.T))
            order = np.argsort(-ev)
            evec = evec[:, order]
            for k in range(K):
                blocks[k][i] = blocks[k][i] @ evec
            signs.append([1.0, -1.0])
            continue
        theta = np.arctan2(hol[1, 0], hol[0, 0])
        if abs(abs(theta) - np.pi) < 1e-6:
            signs.append([-1.0, -1.0])
            continue
        for k in range(K):
            c, s = np.cos(-theta * k / K), np.sin(-theta * k / K)
            blocks[k][i] = blocks[k][i] @ np.array([[c, -s], [s, c]])
        signs.append([1.0, 1.0])

    order = sorted(range(nb), key=lambda i: (min(signs[i]) < 0, i))
    cols = np.empty((K, d, d))
    cols[:, :, 0] = e0
    flip = [1.0]
    c = 1
    for i in order:
        w = blocks[0][i].shape[1]
        for k in range(K):
            cols[k, :, c : c + w] = blocks[k][i]
        flip.extend(signs[i])
        c += w
    flip = np.array(flip)

    E = cols
    tau = cycle.tau.copy()
    sp = speed
    if np.any(flip < 0):
        E = np.concatenate([E, E * flip])
        tau = np.concatenate([tau, tau + T])
        sp = np.concatenate([speed, speed])
    Einv = np.linalg.inv(E)
    h = tau[1] - tau[0]
    Edot = periodic_derivative(E, h)
    Omega = Einv @ Edot
    return MovingFrame(cycle, "eigen", tau, E, Einv, Omega, sp, flip)


def build_frame(spec: SystemSpec, cycle: LimitCycle, kind: str = "auto") -> MovingFrame:
    """Frenet frame in the plane, eigenvector frame otherwise (``kind="auto"``)."""
    if kind == "auto":
        kind = "frenet" if spec.dim == 2 else "eigen"
    if kind == "frenet":
        return build_frenet_2d(cycle)
    if kind == "eigen":
        return build_eigen_frame(spec, cycle)
    raise ValueError(f"unknown frame kind {kind!r}")


def omega_matrix(frame: MovingFrame, tau):
    """Interpolated ``Omega(tau) = E(tau)^{-1} dE/dtau``."""
    return frame.omega(tau)


def from_curvilinear(frame: MovingFrame, tau, z):
    """``gamma(tau) + sum_i z^i e_i(tau)``."""
    E = frame.basis(tau)
    z = np.asarray(z, dtype=float)
    return frame.cycle.position(tau) + np.einsum("...ij,...j->...i", E[..., :, 1:], z)


def to_curvilinear(frame: MovingFrame, x, tau0=None, tol=1e-13, max_iter=50):
    """
    Phase ``tau`` and normal coordinates ``z`` of a point near the cycle.

    Solves ``<e^0(tau), x - gamma(tau)> = 0`` by Newton's method started at
    the nearest sample (or ``tau0``), then ``z^i = <e^i(tau), x - gamma(tau)>``.
    For anti-periodic frames the phase is returned in ``[0, T)`` and ``z``
    refers to the first half of the unwrapped frame.
    """
    x = np.asarray(x, dtype=float)
    cycle = frame.cycle
    if tau0 is None:
        tau0 = cycle.nearest_phase(x)
    tau = float(tau0)
    dt_max = 4.0 * cycle.period / cycle.n_samples
    for _ in range(max_iter):
        r = x - cycle.position(tau)
        Einv = frame.reciprocal(tau)
        f = Einv[0] @ r
        # d e^0/dtau = -(Omega E^{-1})_0
        dEinv0 = -(frame.omega(tau) @ Einv)[0]
        fp = dEinv0 @ r - Einv[0] @ cycle.velocity(tau)
        step = -f / fp
        step = float(np.clip(step, -dt_max, dt_max))
        tau += step
        if abs(step) <= tol * max(1.0, cycle.period):
            break
    else:
        raise ChartError(f"phase search did not converge for x={x}")
    tau = float(np.mod(tau, cycle.period))
    z = frame.reciprocal(tau)[1:] @ (x - cycle.position(tau))
    return tau, z


def curvilinear_gradient(frame: MovingFrame, tau, z, df_dtau, df_dz):
    """
    Cartesian gradient of ``f`` from its curvilinear partial derivatives.

    ``grad f = (df/dtau - <z, Omega~^T df/dz>) / (|gamma'| + sum_j z^j w^0_j) e^0
    + sum_i (df/dz^i) e^i``.
    """
    z = np.asarray(z, dtype=float)
    df_dz = np.asarray(df_dz, dtype=float)
    Om = frame.omega(tau)
    Einv = frame.reciprocal(tau)
    speed = np.linalg.norm(frame.cycle.velocity(tau))
    denom = speed + Om[0, 1:] @ z
    num = df_dtau - z @ (Om[1:, 1:].T @ df_dz)
    return num / denom * Einv[0] + Einv[1:].T @ df_dz
