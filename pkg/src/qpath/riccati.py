"""
Periodic Riccati equation for the normal Hessian of the quasi-potential.

On a moving frame the quadratic approximation ``Q = z^T G(tau) z / 2`` of the
quasi-potential near the cycle requires the symmetric periodic solution of

    G' = -Mt^T G - G Mt - G At G,

with ``Mt = Jt - Omega~`` (reduced Jacobian minus the normal-normal block of
the frame rotation) and ``At`` the diffusion restricted to the normal plane.
``H = G^{-1}`` solves the linear periodic Lyapunov equation
``H' = Mt H + H Mt^T + At``, which supplies independent checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import solve_discrete_lyapunov

from ._numerics import (
    ATOL,
    RTOL,
    PeriodicHermite,
    PeriodicJetHermite,
    PeriodicFourier,
    PeriodicLinear,
    from_vech,
    periodic_derivative,
    solve,
    spectral_derivative,
    sym,
)
from .cycle import LimitCycle
from .frame import MovingFrame
from .systems import SystemSpec, eval_diffusion, eval_jacobian

__all__ = [
    "RiccatiError",
    "PrdeCoefficients",
    "PeriodicMatrixFunction",
    "ConditionsReport",
    "reduced_coefficients",
    "default_c0",
    "riccati_period_map",
    "solve_prde",
    "analytic_planar_solution",
    "periodic_lyapunov_solution",
    "check_conditions",
    "prde_residual",
    "plde_residual",
    "plde_propagation_error",
    "conjugate_by_flip",
]


class RiccatiError(RuntimeError):
    """No positive definite periodic solution could be produced."""

    def __init__(self, message, tau=None):
        super().__init__(message)
        self.tau = tau


@dataclass(eq=False)
class PrdeCoefficients:
    """
    Sampled reduced coefficients on a uniform grid over ``[0, span)``.

    ``span`` equals the cycle period, or twice the period when the frame has
    anti-periodic vectors (the unwrapped frame then makes the coefficients
    ``2 T``-periodic with ``Mt(tau + T) = F Mt(tau) F``).
    """

    tau: np.ndarray
    Mt: np.ndarray
    At: np.ndarray
    span: float
    period: float
    flip: np.ndarray = field(default_factory=lambda: np.ones(1))
    linear_diffusion: bool = False

    def __post_init__(self):
        self.Mt = np.asarray(self.Mt, dtype=float)
        self.At = sym(np.asarray(self.At, dtype=float))
        self._M = PeriodicFourier(self.tau, self.Mt, self.span)
        # piecewise-linear interpolation keeps a PSD but non-smooth diffusion PSD
        cls = PeriodicLinear if self.linear_diffusion else PeriodicFourier
        self._A = cls(self.tau, self.At, self.span)

    @property
    def m(self) -> int:
        return self.Mt.shape[1]

    @property
    def normal_flip(self) -> np.ndarray:
        return np.asarray(self.flip, dtype=float)[-self.m :]

    def M(self, tau):
        return self._M(tau)

    def A(self, tau):
        return self._A(tau)

    def with_diffusion(self, At) -> "PrdeCoefficients":
        """Copy with the diffusion block replaced (e.g. ``At = 0`` for diagnostics)."""
        At = np.broadcast_to(np.asarray(At, dtype=float), self.At.shape).copy()
        return PrdeCoefficients(self.tau, self.Mt, At, self.span, self.period, self.flip, self.linear_diffusion)

    def reversed_time(self) -> "PrdeCoefficients":
        """Coefficients of the same problem with the sign of ``Mt`` flipped."""
        return PrdeCoefficients(self.tau, -self.Mt, self.At, self.span, self.period, self.flip, self.linear_diffusion)


def reduced_coefficients(spec: SystemSpec, cycle: LimitCycle, frame: MovingFrame) -> PrdeCoefficients:
    """
    ``Jt_ij = <e^i, (db/dx) e_j>``, ``Mt = Jt - Omega~`` and ``At_ij = <e^i, a e^j>``
    (``i, j >= 1``) on the frame grid.
    """
    x = cycle.position(frame.tau)
    J = eval_jacobian(spec, x)
    a = eval_diffusion(spec, x)
    Einv_n = frame.Einv[:, 1:, :]
    Jt = Einv_n @ J @ frame.E[:, :, 1:]
    Mt = Jt - frame.Omega[:, 1:, 1:]
    if frame.kind == "frenet":
        # the rotation block of a planar Frenet frame vanishes identically
        Mt = Jt
    At = Einv_n @ a @ np.swapaxes(Einv_n, 1, 2)
    return PrdeCoefficients(
        frame.tau.copy(), Mt, At, frame.span, cycle.period, frame.flip.copy(), not spec.smooth_diffusion
    )


class PeriodicMatrixFunction:
    """
    Symmetric matrix function sampled over one period of its coefficients.

    Values and exact derivatives (from the differential equation) on the grid
    feed a periodic Hermite interpolant.  Second and third derivatives, when
    supplied stacked in ``higher``, raise it to seventh order; without them
    it is cubic.
    """

    def __init__(self, tau, values, derivs, span, period, flip=None, iterations=0, history=None, higher=None):
        self.tau = np.asarray(tau, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        self.span = float(span)
        self.period = float(period)
        m = self.values.shape[1]
        self.flip = np.ones(m) if flip is None else np.asarray(flip, dtype=float)
        self.iterations = iterations
        self.history = [] if history is None else list(history)
        self.higher = None if higher is None else np.asarray(higher, dtype=float)
        if self.higher is None:
            self._interp = PeriodicHermite(self.tau, self.values, self.derivs, self.span)
        else:
            self._interp = PeriodicJetHermite(self.tau, [self.values, self.derivs, *self.higher], self.span)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def antiperiodic(self) -> bool:
        return bool(np.any(self.flip < 0))

    def __call__(self, tau):
        return sym(self._interp(tau))

    def derivative(self, tau):
        return sym(self._interp.derivative(tau))

    def eigenvalues(self, tau=None):
        vals = self.values if tau is None else self(tau)
        return np.linalg.eigvalsh(vals)

    def inverse_values(self):
        return np.linalg.inv(self.values)

    def half(self, which: int = 0):
        """
        Samples over one cycle period.  ``which=1`` returns the second half of
        a ``2 T`` representation, i.e. ``G`` in the basis ``E F``.
        """
        n = self.tau.size
        if not self.antiperiodic:
            if which:
                raise ValueError("a T-periodic function has a single half")
            return self.tau, self.values
        k = n // 2
        sl = slice(0, k) if which == 0 else slice(k, n)
        return self.tau[sl] - which * self.period, self.values[sl]


def default_c0(coeffs: PrdeCoefficients) -> float:
    return 100.0 * (1.0 + float(np.max(np.linalg.norm(coeffs.Mt, axis=(1, 2)))))


def _riccati_rhs(coeffs: PrdeCoefficients, idx):
    m = coeffs.m

    def rhs(t, v):
        G = from_vech(v, m, idx)
        M = coeffs.M(t)
        dG = -M.T @ G - G @ M - G @ coeffs.A(t) @ G
        return dG[idx]

    return rhs


def _riccati_rhs_matrix(coeffs, tau, G):
    M = coeffs.M(tau)
    return -np.swapaxes(M, -1, -2) @ G - G @ M - G @ coeffs.A(tau) @ G


def _riccati_higher(coeffs, tau, G, dG):
    """
    Second and third derivatives of ``G`` from differentiating the equation
    along the samples; ``None`` when ``At`` is not smooth.
    """
    if coeffs.linear_diffusion:
        return None
    M, A = coeffs.M(tau), coeffs.A(tau)
    M1, A1 = coeffs._M.derivative(tau), coeffs._A.derivative(tau)
    M2, A2 = coeffs._M.derivative(tau, 2), coeffs._A.derivative(tau, 2)

    def T(X):
        return np.swapaxes(X, -1, -2)

    G2 = -(T(M1) @ G + G @ M1 + G @ A1 @ G + T(M) @ dG + dG @ M + dG @ A @ G + G @ A @ dG)
    G3 = -(
        T(M2) @ G + G @ M2 + G @ A2 @ G
        + 2.0 * (T(M1) @ dG + dG @ M1 + dG @ A1 @ G + G @ A1 @ dG)
        + T(M) @ G2 + G2 @ M + G2 @ A @ G + 2.0 * dG @ A @ dG + G @ A @ G2
    )
    return np.stack([G2, G3])


def riccati_period_map(coeffs: PrdeCoefficients, G0, rtol=RTOL, atol=ATOL, t_eval=None, with_linearization=False):
    """
    Flow of the Riccati equation over one coefficient period from ``G0``.

    The upper triangle is integrated so the iterate is exactly symmetric.
    With ``with_linearization`` the transition matrix ``Psi`` of
    ``Psi' = -(Mt + At G)^T Psi`` is integrated alongside; the derivative of
    the period map is then ``dG0 -> Psi dG0 Psi^T``.
    Returns ``(G(span), Psi or None, sol)``.
    """
    m = coeffs.m
    idx = np.triu_indices(m)
    nv = idx[0].size
    G0 = sym(np.asarray(G0, dtype=float))
    base = _riccati_rhs(coeffs, idx)
    if with_linearization:

        def rhs(t, y):
            G = from_vech(y[:nv], m, idx)
            L = coeffs.M(t) + coeffs.A(t) @ G
            psi = y[nv:].reshape(m, m)
            return np.concatenate([base(t, y[:nv]), (-L.T @ psi).ravel()])

        y0 = np.concatenate([G0[idx], np.eye(m).ravel()])
    else:
        rhs = base
        y0 = G0[idx]
    # rejected trial steps from a large c0 may overflow; the step controller recovers
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve(rhs, (0.0, coeffs.span), y0, rtol=rtol, atol=atol, t_eval=t_eval)
    GT = from_vech(sol.y[:nv, -1], m, idx)
    psi = sol.y[nv:, -1].reshape(m, m) if with_linearization else None
    return GT, psi, sol


def solve_prde(
    coeffs: PrdeCoefficients,
    c0: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    rtol: float = RTOL,
    atol: float = ATOL,
    newton_after: int = 20,
) -> PeriodicMatrixFunction:
    """
    Periodic positive definite solution by iterating the period map.

    Starting from ``G_0 = c0 I``, ``G_{n+1}`` is the Riccati flow of ``G_n``
    over one coefficient period; the loop ends when
    ``|G_{n+1} - G_n|_F <= tol |G_n|_F``.  The map contracts at a rate set by
    the squared slowest multiplier, which can be close to one (weakly
    attracting cycles); when the observed contraction predicts more than
    ``newton_after`` further sweeps, iterates are corrected by a Newton step
    on the fixed-point equation (a discrete Stein equation built from the
    linearised period map).  Every accepted iterate still has to pass the
    plain stopping test above.

    Raises
    ------
    RiccatiError
        No convergence within ``max_iter`` sweeps, or a sample that is not
        positive definite (the failing phase is attached).
    """
    m = coeffs.m
    if c0 is None:
        c0 = default_c0(coeffs)
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    G = c0 * np.eye(m)
    history = []
    prev_change = None
    use_newton = False
    converged = False
    n = 0
    for n in range(1, max_iter + 1):
        G_next, psi, _ = riccati_period_map(coeffs, G, rtol, atol, with_linearization=use_newton)
        if not np.all(np.isfinite(G_next)):
            raise RiccatiError("Riccati flow produced non-finite values")
        change = np.linalg.norm(G_next - G) / np.linalg.norm(G)
        history.append(float(change))
        if change <= tol:
            G = G_next
            converged = True
            break
        if use_newton:
            # fixed point of G -> P(G):  X - Psi X Psi^T = P(G) - G
            step = solve_discrete_lyapunov(psi, G_next - G)
            trial = sym(G + step)
            G = trial if np.min(np.linalg.eigvalsh(trial)) > 0 else G_next
        else:
            if prev_change is not None and change < prev_change:
                rate = change / prev_change
                if change < 1e-2 and np.log(tol / change) / np.log(rate) > newton_after:
                    use_newton = True
            prev_change = change
            G = G_next
    if not converged:
        raise RiccatiError(f"period-map iteration did not converge in {max_iter} sweeps (last change {history[-1]:.3e})")
    return _sample_solution(coeffs, G, rtol, atol, n, history)


SAMPLE_RTOL = 1e-13
SAMPLE_ATOL = 1e-15


def _polish_fixed_point(coeffs, G0, rtol, atol, max_steps=3):
    """
    Newton steps on the period map at sampling accuracy.  The iteration
    tolerance leaves a seam jump that interpolation would turn into a
    derivative error of order jump / grid spacing.
    """
    G = G0
    for _ in range(max_steps):
        GT, psi, _ = riccati_period_map(coeffs, G, rtol, atol, with_linearization=True)
        jump = np.linalg.norm(GT - G)
        if jump <= 1e-13 * np.linalg.norm(G):
            break
        trial = sym(G + solve_discrete_lyapunov(psi, GT - G))
        if np.min(np.linalg.eigvalsh(trial)) <= 0:
            break
        GT2, _, _ = riccati_period_map(coeffs, trial, rtol, atol)
        if np.linalg.norm(GT2 - trial) >= jump:
            break
        G = trial
    return G


def _sample_solution(coeffs, G0, rtol, atol, iterations=0, history=None):
    m = coeffs.m
    idx = np.triu_indices(m)
    grid = coeffs.tau
    rtol, atol = min(rtol, SAMPLE_RTOL), min(atol, SAMPLE_ATOL)
    G0 = _polish_fixed_point(coeffs, sym(np.asarray(G0, dtype=float)), rtol, atol)
    # interval by interval: dense output is far less accurate than step endpoints
    rhs = _riccati_rhs(coeffs, idx)
    values = np.empty((grid.size, m, m))
    values[0] = G0
    v = G0[idx]
    for k in range(1, grid.size):
        v = solve(rhs, (grid[k - 1], grid[k]), v, rtol=rtol, atol=atol).y[:, -1]
        values[k] = from_vech(v, m, idx)
    derivs = _riccati_rhs_matrix(coeffs, grid, values)
    higher = _riccati_higher(coeffs, grid, values, derivs)
    eig_min = np.linalg.eigvalsh(values)[:, 0]
    k = int(np.argmin(eig_min))
    if eig_min[k] <= 0:
        raise RiccatiError(f"solution loses positive definiteness at tau={grid[k]:.6g}", float(grid[k]))
    return PeriodicMatrixFunction(grid, values, derivs, coeffs.span, coeffs.period, coeffs.normal_flip, iterations, history, higher)


def _planar_integrals(coeffs: PrdeCoefficients, refine: int):
    if coeffs.m != 1:
        raise ValueError("the closed-form solution needs a scalar normal direction (d = 2)")
    n = coeffs.tau.size * refine
    s = np.linspace(0.0, coeffs.span, n + 1)
    M = coeffs.M(s)[:, 0, 0]
    A = coeffs.A(s)[:, 0, 0]
    I = cumulative_simpson(M, x=s, initial=0.0)
    return s, I, A


def analytic_planar_solution(coeffs: PrdeCoefficients, refine: int = 16) -> PeriodicMatrixFunction:
    """
    Closed-form periodic solution of the scalar problem.

    With ``I(tau) = int_0^tau Mt`` the Lyapunov solution is
    ``H(tau) = exp(2 I(tau)) (H(0) + int_0^tau At exp(-2 I))`` and periodicity
    gives ``H(0) = int_0^T At exp(2 (I(T) - I(s))) ds / (1 - exp(2 I(T)))``.
    Integrals use composite Simpson quadrature on the coefficient grid
    refined ``refine`` times; ``G = 1 / H``.
    """
    s, I, A = _planar_integrals(coeffs, refine)
    IT = I[-1]
    if IT >= 0:
        raise RiccatiError("cycle not asymptotically stable: the normal stability integral is nonnegative")
    K = cumulative_simpson(A * np.exp(2.0 * (IT - I)), x=s, initial=0.0)
    H0 = K[-1] / (1.0 - np.exp(2.0 * IT))
    if not H0 > 1e-300 or not np.isfinite(H0):
        raise RiccatiError("no positive definite periodic solution: normal noise integral vanishes")
    Kin = cumulative_simpson(A * np.exp(-2.0 * I), x=s, initial=0.0)
    H = np.exp(2.0 * I) * (H0 + Kin)
    H = H[:-1:refine]
    if np.min(H) <= 0:
        k = int(np.argmin(H))
        raise RiccatiError("no positive definite periodic solution", float(coeffs.tau[k]))
    G = (1.0 / H)[:, None, None]
    derivs = _riccati_rhs_matrix(coeffs, coeffs.tau, G)
    higher = _riccati_higher(coeffs, coeffs.tau, G, derivs)
    return PeriodicMatrixFunction(coeffs.tau, G, derivs, coeffs.span, coeffs.period, coeffs.normal_flip, higher=higher)


def _lyapunov_transition(coeffs, t0, rtol=RTOL, atol=ATOL):
    """Reduced transition matrix and noise Gramian over one span starting at ``t0``."""
    m = coeffs.m

    def rhs(t, y):
        M = coeffs.M(t)
        phi = y[: m * m].reshape(m, m)
        W = y[m * m :].reshape(m, m)
        return np.concatenate([(M @ phi).ravel(), (M @ W + W @ M.T + coeffs.A(t)).ravel()])

    y0 = np.concatenate([np.eye(m).ravel(), np.zeros(m * m)])
    sol = solve(rhs, (t0, t0 + coeffs.span), y0, rtol=rtol, atol=atol)
    phi = sol.y[: m * m, -1].reshape(m, m)
    W = sym(sol.y[m * m :, -1].reshape(m, m))
    return phi, W


def periodic_lyapunov_solution(coeffs: PrdeCoefficients, tau0: float = 0.0):
    """
    ``H(tau0)`` of the periodic Lyapunov equation from the discrete equation
    ``H = Phi H Phi^T + W`` over one span (an oracle independent of the
    Riccati iteration).
    """
    phi, W = _lyapunov_transition(coeffs, tau0)
    return sym(solve_discrete_lyapunov(phi, W))


@dataclass
class ConditionsReport:
    stable: bool
    stability_margin: float
    multipliers: np.ndarray
    controllable: bool
    tau_checks: list

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "stability_margin": self.stability_margin,
            "multipliers_abs": np.abs(self.multipliers).tolist(),
            "controllable": self.controllable,
            "tau_checks": self.tau_checks,
        }


def check_conditions(coeffs: PrdeCoefficients, tau_prime: float = 0.0, n_scan: int = 8, rel: float = 1e-10):
    """
    Existence diagnostics for a positive definite periodic solution.

    Stability: every multiplier of the reduced system lies inside the unit
    disk.  Controllability of ``(Phi(tau'), W(tau' + span, tau'))``: each
    left eigenvector ``u`` of ``Phi`` satisfies ``u* W u > rel |W|``.  The
    test is run at ``tau_prime`` and at ``n_scan`` equispaced phases; one
    passing phase suffices.
    """
    taus = [float(tau_prime)] + [k * coeffs.span / n_scan for k in range(n_scan)]
    checks = []
    mult = None
    for t0 in taus:
        phi, W = _lyapunov_transition(coeffs, t0)
        vals, vecs = np.linalg.eig(phi.T)
        if mult is None:
            mult = vals
        wn = np.linalg.norm(W, 2)
        margins = []
        for j in range(vals.size):
            u = vecs[:, j] / np.linalg.norm(vecs[:, j])
            margins.append(float(np.real(np.conj(u) @ W @ u)))
        ok = wn > 0 and min(margins) > rel * wn
        checks.append({"tau": t0, "controllable": bool(ok), "min_margin": min(margins), "gramian_norm": float(wn)})
    rho = float(np.max(np.abs(mult)))
    return ConditionsReport(
        stable=rho < 1.0,
        stability_margin=1.0 - rho,
        multipliers=mult,
        controllable=any(c["controllable"] for c in checks),
        tau_checks=checks,
    )


def _sample_derivative(vals, coeffs, method):
    if method == "fd":
        return periodic_derivative(vals, coeffs.tau[1] - coeffs.tau[0])
    if method == "spectral":
        return spectral_derivative(vals, coeffs.span)
    raise ValueError(f"unknown differentiation method {method!r}")


def prde_residual(G, coeffs: PrdeCoefficients, method: str = "fd") -> float:
    """
    ``max_k |G' + Mt^T G + G Mt + G At G|_F`` on the grid.

    ``G'`` comes from the samples alone: fourth-order periodic differences
    (``method="fd"``) or FFT differentiation (``"spectral"``, exponentially
    accurate for smooth coefficients).  ``G`` may be a
    :class:`PeriodicMatrixFunction` or an array of samples.
    """
    vals = G.values if isinstance(G, PeriodicMatrixFunction) else np.asarray(G, dtype=float)
    vals = np.broadcast_to(vals, (coeffs.tau.size, coeffs.m, coeffs.m))
    dG = _sample_derivative(vals, coeffs, method)
    res = dG - _riccati_rhs_matrix(coeffs, coeffs.tau, vals)
    return float(np.max(np.linalg.norm(res, axis=(1, 2))))


def plde_residual(G: PeriodicMatrixFunction, coeffs: PrdeCoefficients, relative: bool = True, method: str = "spectral") -> float:
    """
    Residual of ``H' = Mt H + H Mt^T + At`` for ``H = G^{-1}`` on the grid,
    with ``H'`` differentiated from the samples (see :func:`prde_residual`).
    Scaled by ``max(1, max_tau |H'|)`` unless ``relative=False``.
    """
    H = G.inverse_values()
    dH = _sample_derivative(H, coeffs, method)
    M = coeffs.M(coeffs.tau)
    res = dH - (M @ H + H @ np.swapaxes(M, 1, 2) + coeffs.A(coeffs.tau))
    r = float(np.max(np.linalg.norm(res, axis=(1, 2))))
    if relative:
        r /= max(1.0, float(np.max(np.linalg.norm(dH, axis=(1, 2)))))
    return r


def plde_propagation_error(G: PeriodicMatrixFunction, coeffs: PrdeCoefficients) -> float:
    """
    Integrate the Lyapunov equation from ``H(0) = G(0)^{-1}`` and return the
    largest relative deviation from ``G^{-1}`` on the grid.
    """
    m = coeffs.m
    H = G.inverse_values()

    def rhs(t, y):
        X = y.reshape(m, m)
        M = coeffs.M(t)
        return (M @ X + X @ M.T + coeffs.A(t)).ravel()

    sol = solve(rhs, (0.0, coeffs.span), H[0].ravel(), rtol=SAMPLE_RTOL, atol=SAMPLE_ATOL, t_eval=coeffs.tau)
    Hs = sol.y.T.reshape(-1, m, m)
    return float(np.max(np.linalg.norm(Hs - H, axis=(1, 2))) / np.max(np.linalg.norm(H, axis=(1, 2))))


def conjugate_by_flip(G: PeriodicMatrixFunction, F=None, tol: float = 1e-8) -> PeriodicMatrixFunction:
    """
    Check ``G(tau + T) = F G(tau) F`` on a ``2 T`` representation and return
    a copy whose second half is rebuilt exactly from the first.

    For ``F = I`` (or a ``T``-periodic ``G``) the input is returned unchanged.
    The measured violation is stored on the result as ``conjugacy_error``.
    """
    flip = G.flip if F is None else np.diag(np.asarray(F, dtype=float)) if np.ndim(F) == 2 else np.asarray(F, dtype=float)
    flip = flip[-G.m :]
    if not G.antiperiodic and np.all(flip > 0):
        G.conjugacy_error = 0.0
        return G
    n = G.tau.size
    k = n // 2
    S = np.outer(flip, flip)
    err = float(np.max(np.linalg.norm(G.values[k:] - S * G.values[:k], axis=(1, 2))))
    if err > tol * max(1.0, float(np.max(np.abs(G.values)))):
        raise RiccatiError(f"flip conjugacy violated by {err:.3e}")
    values = G.values.copy()
    derivs = G.derivs.copy()
    values[k:] = S * values[:k]
    derivs[k:] = S * derivs[:k]
    higher = None
    if G.higher is not None:
        higher = G.higher.copy()
        higher[:, k:] = S * higher[:, :k]
    out = PeriodicMatrixFunction(G.tau, values, derivs, G.span, G.period, flip, G.iterations, G.history, higher)
    out.conjugacy_error = err
    return out
