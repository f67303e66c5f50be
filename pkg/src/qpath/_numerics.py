"""Small numerical building blocks shared by the pipeline stages."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly, CubicHermiteSpline, CubicSpline

RTOL = 1e-10
ATOL = 1e-12


class IntegrationError(RuntimeError):
    """An adaptive integration stopped before reaching its final time."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


def solve(fun, t_span, y0, rtol=RTOL, atol=ATOL, t_eval=None, dense_output=False, **kw):
    """``solve_ivp`` with the embedded 8(5,3) Dormand-Prince pair; raises on failure."""
    sol = solve_ivp(
        fun,
        t_span,
        np.asarray(y0, dtype=float),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        dense_output=dense_output,
        **kw,
    )
    if sol.status < 0:
        t_last = sol.t[-1] if sol.t.size else t_span[0]
        y_last = sol.y[:, -1] if sol.y.size else np.asarray(y0)
        raise IntegrationError(f"integration failed at t={t_last:.6g}: {sol.message}", t_last, y_last)
    return sol


def transition_matrix(matrix_fn, t0, t1, rtol=RTOL, atol=ATOL):
    """State transition matrix of ``y' = M(t) y`` from ``t0`` to ``t1``."""
    m0 = np.atleast_2d(matrix_fn(t0))
    n = m0.shape[0]
    if t1 == t0:
        return np.eye(n)

    def rhs(t, y):
        return (np.atleast_2d(matrix_fn(t)) @ y.reshape(n, n)).ravel()

    sol = solve(rhs, (t0, t1), np.eye(n).ravel(), rtol=rtol, atol=atol)
    return sol.y[:, -1].reshape(n, n)


def periodic_derivative(samples, h, pad=None):
    """
    Fourth-order central difference of uniformly sampled periodic data.

    ``samples`` has the periodic grid on axis 0.  ``pad`` optionally maps a
    sample to its value one period later (used for frames that only close
    up to a sign flip); by default the data are assumed exactly periodic.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape[0] < 5:
        raise ValueError("need at least five samples for the five-point stencil")
    if pad is None:
        ext = np.concatenate([s[-2:], s, s[:2]])
    else:
        ext = np.concatenate([pad(s[-2:], -1), s, pad(s[:2], +1)])
    return (-ext[4:] + 8.0 * ext[3:-1] - 8.0 * ext[1:-3] + ext[:-4]) / (12.0 * h)


def spectral_derivative(samples, span):
    """Derivative of uniformly sampled smooth periodic data by FFT differentiation."""
    s = np.asarray(samples, dtype=float)
    n = s.shape[0]
    k = np.fft.rfftfreq(n, d=span / n) * 2.0 * np.pi
    c = np.fft.rfft(s, axis=0)
    c = c * (1j * k).reshape((-1,) + (1,) * (s.ndim - 1))
    if n % 2 == 0:
        c[-1] = 0.0
    return np.fft.irfft(c, n=n, axis=0)


class PeriodicSpline:
    """Periodic cubic spline through samples on ``k * span / n``."""

    def __init__(self, tau, values, span):
        values = np.asarray(values, dtype=float)
        self.span = float(span)
        t = np.append(np.asarray(tau, dtype=float), self.span)
        y = np.concatenate([values, values[:1]])
        self._spline = CubicSpline(t, y, axis=0, bc_type="periodic")
        self._deriv = self._spline.derivative()

    def __call__(self, tau):
        return self._spline(np.mod(tau, self.span))

    def derivative(self, tau):
        return self._deriv(np.mod(tau, self.span))


class PeriodicHermite:
    """Periodic cubic Hermite interpolant from values and exact derivatives."""

    def __init__(self, tau, values, derivs, span):
        values = np.asarray(values, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        self.span = float(span)
        t = np.append(np.asarray(tau, dtype=float), self.span)
        self._spline = CubicHermiteSpline(
            t,
            np.concatenate([values, values[:1]]),
            np.concatenate([derivs, derivs[:1]]),
            axis=0,
        )
        self._deriv = self._spline.derivative()
        self._deriv2 = self._deriv.derivative()

    def __call__(self, tau):
        return self._spline(np.mod(tau, self.span))

    def derivative(self, tau):
        return self._deriv(np.mod(tau, self.span))

    def second_derivative(self, tau):
        return self._deriv2(np.mod(tau, self.span))


class PeriodicJetHermite:
    """
    Periodic Hermite interpolant from values and any number of exact
    derivatives per node (``jets[0]`` values, ``jets[1]`` first derivatives, ...).
    """

    def __init__(self, tau, jets, span):
        self.span = float(span)
        t = np.append(np.asarray(tau, dtype=float), self.span)
        data = np.stack([np.asarray(a, dtype=float) for a in jets], axis=1)
        self._poly = BPoly.from_derivatives(t, np.concatenate([data, data[:1]]))
        self._deriv = self._poly.derivative()

    def __call__(self, tau):
        return self._poly(np.mod(tau, self.span))

    def derivative(self, tau):
        return self._deriv(np.mod(tau, self.span))


class PeriodicQuinticHermite(PeriodicJetHermite):
    """Periodic quintic Hermite interpolant from values and two exact derivatives."""

    def __init__(self, tau, values, derivs, second, span):
        super().__init__(tau, (values, derivs, second), span)


class PeriodicFourier:
    """
    Trigonometric interpolant of uniformly sampled periodic data.

    Infinitely smooth, which keeps high-order adaptive integrators honest
    (their error estimators assume smooth right-hand sides; cubic splines
    have jumps in the third derivative at every knot).  Modes whose
    amplitude is below ``cutoff`` times the largest one are dropped.
    """

    def __init__(self, tau, values, span, cutoff=1e-15):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        self.span = float(span)
        self._shape = values.shape[1:]
        c = np.fft.rfft(values.reshape(n, -1), axis=0) / n
        c[1:] *= 2.0
        if n % 2 == 0:
            c[-1] *= 0.5
        amp = np.max(np.abs(c), axis=1)
        keep = amp > cutoff * amp.max() if amp.max() > 0 else np.zeros(amp.size, bool)
        keep[0] = True
        self._k = np.nonzero(keep)[0].astype(float)
        self._c = c[keep]
        self._w = 2.0 * np.pi / self.span
        # sample grid starts at tau[0]
        self._t0 = float(np.asarray(tau)[0])

    def _eval(self, tau, order):
        t = np.asarray(tau, dtype=float) - self._t0
        phase = np.exp(1j * self._w * np.multiply.outer(t, self._k))
        coef = self._c if order == 0 else self._c * (1j * self._w * self._k[:, None]) ** order
        out = (phase @ coef).real
        return out.reshape(t.shape + self._shape)

    def __call__(self, tau):
        return self._eval(tau, 0)

    def derivative(self, tau, order=1):
        return self._eval(tau, order)


class PeriodicLinear:
    """Periodic piecewise-linear interpolant; preserves convex sets such as PSD cones."""

    def __init__(self, tau, values, span):
        values = np.asarray(values, dtype=float)
        self.span = float(span)
        self._t = np.append(np.asarray(tau, dtype=float), self.span)
        self._y = np.concatenate([values, values[:1]])

    def __call__(self, tau):
        t = np.mod(tau, self.span)
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(t)
        i = np.clip(np.searchsorted(self._t, t, side="right") - 1, 0, len(self._t) - 2)
        w = (t - self._t[i]) / (self._t[i + 1] - self._t[i])
        w = w.reshape(w.shape + (1,) * (self._y.ndim - 1))
        out = (1.0 - w) * self._y[i] + w * self._y[i + 1]
        return out[0] if scalar else out


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def vech_indices(m):
    return np.triu_indices(m)


def from_vech(v, m, idx=None):
    if idx is None:
        idx = np.triu_indices(m)
    g = np.zeros((m, m))
    g[idx] = v
    return g + np.triu(g, 1).T


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
