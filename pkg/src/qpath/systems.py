"""
Dynamical systems with additive (possibly state-dependent) noise.

A :class:`SystemSpec` bundles the drift ``b(x)``, the diffusion tensor
``a(x) = sigma(x) sigma(x)^T`` and, optionally, an analytic Jacobian of the
drift.  All callables are vectorised over leading axes: ``drift`` maps
``(..., d) -> (..., d)``, ``diffusion`` and ``jacobian`` map
``(..., d) -> (..., d, d)``.

The builtin catalogue contains the benchmark systems used throughout the
package (:func:`vdp`, :func:`twolc`, :func:`lv3d`, :func:`net5d`) together
with :func:`hopf`, the normal form of a supercritical Hopf bifurcation whose
quasi-potential is known in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SystemSpec",
    "eval_drift",
    "eval_jacobian",
    "eval_diffusion",
    "finite_difference_jacobian",
    "time_reversed",
    "linear",
    "vdp",
    "twolc",
    "lv3d",
    "net5d",
    "hopf",
    "BUILTINS",
    "get_system",
    "system_from_config",
    "load_system",
]

Array = np.ndarray

_FD_STEP = np.cbrt(np.finfo(float).eps)


@dataclass(frozen=True)
class SystemSpec:
    """
    Drift, diffusion and Jacobian of ``dx = b(x) dt + sqrt(eps) sigma(x) dW``.

    Parameters
    ----------
    dim : int
        State dimension ``d``.
    drift : callable
        Vectorised drift ``b``.
    diffusion : callable
        Vectorised diffusion tensor ``a``.
    jacobian : callable, optional
        Vectorised analytic Jacobian ``d b_i / d x_j``.  Central finite
        differences are used when omitted.
    name : str
        Identifier used in reports and output files.
    params : dict
        Parameters the system was built with (for provenance only).
    constant_diffusion : ndarray, optional
        The diffusion tensor when it does not depend on ``x``.  Enables exact
        zero derivatives of ``a`` and the constant-metric action formulas.
    diffusion_branch : callable, optional
        Piecewise label of the diffusion coefficient for systems whose
        ``a(x)`` is discontinuous.  Integrators that need ``d a / d x``
        refuse to cross a change of label.
    guess : tuple, optional
        ``(x_guess, period_guess)`` near a stable limit cycle.
    """

    dim: int
    drift: Callable[[Array], Array]
    diffusion: Callable[[Array], Array]
    jacobian: Optional[Callable[[Array], Array]] = None
    name: str = "system"
    params: dict = field(default_factory=dict)
    constant_diffusion: Optional[Array] = None
    diffusion_branch: Optional[Callable[[Array], Array]] = None
    guess: Optional[tuple] = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")

    @property
    def has_identity_diffusion(self) -> bool:
        a = self.constant_diffusion
        return a is not None and np.array_equal(a, np.eye(self.dim))

    @property
    def smooth_diffusion(self) -> bool:
        return self.diffusion_branch is None


def _check_point(spec: SystemSpec, x) -> Array:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != spec.dim:
        raise ValueError(
            f"{spec.name}: expected points with last axis of length {spec.dim}, "
            f"got shape {x.shape}"
        )
    return x


def eval_drift(spec: SystemSpec, x) -> Array:
    """Return ``b(x)``; ``x`` may carry leading batch axes."""
    x = _check_point(spec, x)
    return np.asarray(spec.drift(x), dtype=float)


def finite_difference_jacobian(func: Callable[[Array], Array], x) -> Array:
    """
    Central-difference Jacobian of a vectorised map.

    The step for coordinate ``i`` is ``cbrt(eps) * max(1, |x_i|)``, which
    balances truncation against round-off for second-order differences.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    steps = _FD_STEP * np.maximum(1.0, np.abs(x))
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hi = steps[..., i : i + 1]
        fp = np.asarray(func(x + hi * e), dtype=float)
        fm = np.asarray(func(x - hi * e), dtype=float)
        cols.append((fp - fm) / (2.0 * hi))
    jac = np.stack(cols, axis=-1)
    if not np.all(np.isfinite(jac)):
        raise FloatingPointError("non-finite drift evaluation in finite differences")
    return jac


def eval_jacobian(spec: SystemSpec, x) -> Array:
    """Return the drift Jacobian, analytic when available."""
    x = _check_point(spec, x)
    if spec.jacobian is not None:
        return np.asarray(spec.jacobian(x), dtype=float)
    return finite_difference_jacobian(spec.drift, x)


def eval_diffusion(spec: SystemSpec, x, check: bool = True) -> Array:
    """Return ``a(x)``; raise if it is not symmetric positive semidefinite."""
    x = _check_point(spec, x)
    a = np.asarray(spec.diffusion(x), dtype=float)
    if check:
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-12):
            raise ValueError(f"{spec.name}: diffusion tensor is not symmetric")
        if np.min(np.linalg.eigvalsh(a)) < -1e-12:
            raise ValueError(f"{spec.name}: diffusion tensor is not positive semidefinite")
    return a


def time_reversed(spec: SystemSpec) -> SystemSpec:
    """The same system with ``b -> -b``; stable cycles become unstable."""
    jac = None
    if spec.jacobian is not None:
        jac = lambda x, f=spec.jacobian: -f(x)
    return replace(
        spec,
        drift=lambda x, f=spec.drift: -f(x),
        jacobian=jac,
        name=spec.name + "-reversed",
    )


def _constant_diffusion(a: Array):
    a = np.array(a, dtype=float)
    a.setflags(write=False)

    def diffusion(x):
        x = np.asarray(x)
        return np.broadcast_to(a, x.shape[:-1] + a.shape).copy()

    return a, diffusion


# ---------------------------------------------------------------------------
# builtin catalogue


def linear(matrix) -> SystemSpec:
    """Linear drift ``b(x) = M x`` with identity diffusion."""
    m = np.array(matrix, dtype=float)
    d = m.shape[0]
    a, diffusion = _constant_diffusion(np.eye(d))
    return SystemSpec(
        dim=d,
        drift=lambda x: np.einsum("ij,...j->...i", m, x),
        diffusion=diffusion,
        jacobian=lambda x: np.broadcast_to(m, np.shape(x)[:-1] + m.shape).copy(),
        name="linear",
        params={"matrix": m.tolist()},
        constant_diffusion=a,
    )


def vdp(case: str = "i", mu: float = 1.0) -> SystemSpec:
    """
    Van der Pol oscillator ``x' = y, y' = -x + mu (1 - x^2) y``.

    ``case`` selects the noise: ``"i"`` isotropic, ``"ii"`` noise on ``y``
    only, ``"iii"`` isotropic for ``x >= 0`` and switched off for ``x < 0``.
    The value on the switching line ``x = 0`` is taken from the ``x > 0``
    branch.
    """

    def drift(x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., 0], x[..., 1]
        return np.stack([q, -p + mu * (1.0 - p * p) * q], axis=-1)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., 0], x[..., 1]
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 0.0
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = -1.0 - 2.0 * mu * p * q
        out[..., 1, 1] = mu * (1.0 - p * p)
        return out

    branch = None
    if case == "i":
        const, diffusion = _constant_diffusion(np.eye(2))
    elif case == "ii":
        const, diffusion = _constant_diffusion(np.diag([0.0, 1.0]))
    elif case == "iii":
        const = None

        def diffusion(x):
            x = np.asarray(x, dtype=float)
            on = (x[..., 0] >= 0.0).astype(float)
            return on[..., None, None] * np.eye(2)

        def branch(x):
            return np.asarray(x)[..., 0] >= 0.0

    else:
        raise ValueError(f"unknown van der Pol diffusion case {case!r}")

    return SystemSpec(
        dim=2,
        drift=drift,
        diffusion=diffusion,
        jacobian=jacobian,
        name=f"vdp-{case}",
        params={"mu": mu, "diffusion_case": case},
        constant_diffusion=const,
        diffusion_branch=branch,
        guess=((2.0, 0.0), 6.6),
    )


def twolc(shift: float = 0.9) -> SystemSpec:
    """Planar system with two stable cycles separated by a saddle."""

    def drift(x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., 0], x[..., 1]
        return np.stack([p - p**3 / 3.0 + q - q**3 / 9.0, p + shift], axis=-1)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., 0], x[..., 1]
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 - p * p
        out[..., 0, 1] = 1.0 - q * q / 3.0
        out[..., 1, 0] = 1.0
        out[..., 1, 1] = 0.0
        return out

    const, diffusion = _constant_diffusion(np.eye(2))
    return SystemSpec(
        dim=2,
        drift=drift,
        diffusion=diffusion,
        jacobian=jacobian,
        name="twolc",
        params={"shift": shift},
        constant_diffusion=const,
        guess=((-0.87576892, 2.00411112), 5.8),
    )


LV3D_MATRIX = ((2.0, 5.0, 0.5), (0.5, 1.0, 1.48), (1.0, 0.5, 1.0))


def lv3d(matrix=LV3D_MATRIX) -> SystemSpec:
    """Three-species Lotka-Volterra model ``x_i' = x_i sum_j c_ij (1 - x_j)``."""
    c = np.array(matrix, dtype=float)
    if c.shape != (3, 3):
        raise ValueError("lv3d interaction matrix must be 3x3")

    def drift(x):
        x = np.asarray(x, dtype=float)
        return x * np.einsum("ij,...j->...i", c, 1.0 - x)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        growth = np.einsum("ij,...j->...i", c, 1.0 - x)
        out = -x[..., :, None] * c
        idx = np.arange(3)
        out[..., idx, idx] += growth
        return out

    const, diffusion = _constant_diffusion(np.eye(3))
    return SystemSpec(
        dim=3,
        drift=drift,
        diffusion=diffusion,
        jacobian=jacobian,
        name="lv3d",
        params={"matrix": c.tolist()},
        constant_diffusion=const,
        guess=((2.44357031, 0.48593311, 0.54950545), 6.8),
    )


def net5d(gain: float = 2.0) -> SystemSpec:
    """Five-unit gene-network model with sigmoid ``h(u) = (1 + tanh(gain u)) / 2``."""

    def sig(u):
        return 0.5 * (1.0 + np.tanh(gain * u))

    def dsig(u):
        return 0.5 * gain * (1.0 - np.tanh(gain * u) ** 2)

    def drift(x):
        x = np.asarray(x, dtype=float)
        h1, h2, h3, h4, h5 = (sig(x[..., i]) for i in range(5))
        b1 = -x[..., 0] + 1 - 2 * h5 - 2 * h2 + 2 * h2 * h5 + 2 * h2 * h4 - 2 * h2 * h4 * h5
        b2 = -x[..., 1] + 1 - 2 * h1
        b3 = -x[..., 2] + 1 - 2 * h2 + 2 * h2 * h5
        b4 = -x[..., 3] + 1 - 2 * h3
        b5 = -x[..., 4] + 1 - 2 * h4 - 2 * h2 + 2 * h2 * h4
        return np.stack([b1, b2, b3, b4, b5], axis=-1)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        h = [sig(x[..., i]) for i in range(5)]
        g = [dsig(x[..., i]) for i in range(5)]
        _, h2, _, h4, h5 = h
        out = np.zeros(x.shape[:-1] + (5, 5))
        idx = np.arange(5)
        out[..., idx, idx] = -1.0
        out[..., 0, 1] = g[1] * (-2 + 2 * h5 + 2 * h4 - 2 * h4 * h5)
        out[..., 0, 3] = g[3] * (2 * h2 - 2 * h2 * h5)
        out[..., 0, 4] = g[4] * (-2 + 2 * h2 - 2 * h2 * h4)
        out[..., 1, 0] = -2 * g[0]
        out[..., 2, 1] = g[1] * (-2 + 2 * h5)
        out[..., 2, 4] = 2 * h2 * g[4]
        out[..., 3, 2] = -2 * g[2]
        out[..., 4, 1] = g[1] * (-2 + 2 * h4)
        out[..., 4, 3] = g[3] * (-2 + 2 * h2)
        return out

    const, diffusion = _constant_diffusion(np.eye(5))
    return SystemSpec(
        dim=5,
        drift=drift,
        diffusion=diffusion,
        jacobian=jacobian,
        name="net5d",
        params={"gain": gain},
        constant_diffusion=const,
        guess=((0.39053286, 0.10509412, -0.58467195, 0.6499489, -0.91820043), 8.1),
    )


def hopf(omega: float = 1.0) -> SystemSpec:
    """
    Hopf normal form ``x' = -omega y + x (1 - r^2)``, ``y' = omega x + y (1 - r^2)``.

    With identity diffusion the quasi-potential of the unit circle is
    ``V(r) = 2 (U(r) - U(1))`` with ``U(r) = -r^2/2 + r^4/4``.
    """

    def drift(x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., 0], x[..., 1]
        s = 1.0 - p * p - q * q
        return np.stack([-omega * q + p * s, omega * p + q * s], axis=-1)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        p, q = x[..., 0], x[..., 1]
        s = 1.0 - p * p - q * q
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = s - 2 * p * p
        out[..., 0, 1] = -omega - 2 * p * q
        out[..., 1, 0] = omega - 2 * p * q
        out[..., 1, 1] = s - 2 * q * q
        return out

    const, diffusion = _constant_diffusion(np.eye(2))
    return SystemSpec(
        dim=2,
        drift=drift,
        diffusion=diffusion,
        jacobian=jacobian,
        name="hopf",
        params={"omega": omega},
        constant_diffusion=const,
        guess=((1.0, 0.0), 2 * np.pi / omega),
    )


BUILTINS = {
    "vdp": vdp,
    "twolc": twolc,
    "lv3d": lv3d,
    "net5d": net5d,
    "hopf": hopf,
}


def get_system(name: str, diffusion_case: Optional[str] = None, **params) -> SystemSpec:
    """Build a catalogue system by name; ``vdp-ii`` is shorthand for case ``ii``."""
    if name.startswith("vdp-") and diffusion_case is None:
        name, diffusion_case = "vdp", name[4:]
    try:
        ctor = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}") from None
    if diffusion_case is not None:
        if name != "vdp":
            if diffusion_case != "i":
                raise ValueError(f"{name} only supports isotropic noise (case 'i')")
        else:
            params["case"] = diffusion_case
    return ctor(**params)


def system_from_config(config: dict) -> SystemSpec:
    """
    Build a system from ``{"system": name, "params": {...}, "diffusion_case": ...}``.
    """
    if "system" not in config:
        raise ValueError("system config needs a 'system' entry")
    params = dict(config.get("params") or {})
    return get_system(config["system"], config.get("diffusion_case"), **params)


def load_system(path) -> SystemSpec:
    return system_from_config(json.loads(Path(path).read_text()))
