"""
scikit-learn style wrapper around the cycle, frame and Riccati stages.

``fit`` builds the local quadratic model of a catalogue system, after which
points can be mapped to curvilinear coordinates (``transform``) or to the
quadratic quasi-potential (``predict``), and escape paths computed with
``minimum_action``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from qpath.cycle import find_limit_cycle
from qpath.frame import build_frame, to_curvilinear
from qpath.gmam import minimize_lc, minimize_lqa
from qpath.localqp import LocalModel, quadratic_qp
from qpath.riccati import reduced_coefficients, solve_prde
from qpath.systems import SystemSpec, get_system

__all__ = ["LimitCycleQuasiPotential"]


class LimitCycleQuasiPotential(BaseEstimator, TransformerMixin):
    """
    Quadratic quasi-potential around the stable limit cycle of a system.

    Parameters
    ----------
    system : str or SystemSpec
        Catalogue name (``"vdp"``, ``"twolc"``, ...) or a ready system.
    diffusion_case : str, optional
        Noise case for catalogue systems that have several.
    system_params : dict, optional
        Keyword parameters passed to the catalogue constructor.
    n_samples : int
        Phase samples on the cycle.
    frame : {"auto", "frenet", "eigen"}
    c0 : float, optional
        Scale of the starting guess ``c0 I`` for the Riccati iteration.
    tol : float
        Tolerance of the cycle and Riccati solves.

    Attributes
    ----------
    spec_, cycle_, frame_, coefficients_, G_, model_
        Products of the pipeline stages.
    period_ : float
    n_features_in_ : int
    """

    def __init__(
        self,
        system="vdp",
        diffusion_case: Optional[str] = None,
        system_params: Optional[dict] = None,
        n_samples: int = 512,
        frame: str = "auto",
        c0: Optional[float] = None,
        tol: float = 1e-10,
    ):
        self.system = system
        self.diffusion_case = diffusion_case
        self.system_params = system_params
        self.n_samples = n_samples
        self.frame = frame
        self.c0 = c0
        self.tol = tol

    def _make_spec(self) -> SystemSpec:
        if isinstance(self.system, SystemSpec):
            return self.system
        return get_system(self.system, self.diffusion_case, **(self.system_params or {}))

    def fit(self, X=None, y=None):
        """
        Find the cycle, its frame and the periodic Riccati solution.

        ``X`` optionally holds one state used as the initial guess for the
        cycle search (first row); ``y`` is ignored.
        """
        spec = self._make_spec()
        guess = None
        if X is not None:
            X = check_array(X, ensure_2d=False).reshape(-1, spec.dim)
            guess = X[0]
        self.spec_ = spec
        self.cycle_ = find_limit_cycle(spec, x_guess=guess, tol=self.tol, n_samples=self.n_samples)
        self.frame_ = build_frame(spec, self.cycle_, kind=self.frame)
        self.coefficients_ = reduced_coefficients(spec, self.cycle_, self.frame_)
        self.G_ = solve_prde(self.coefficients_, c0=self.c0, tol=self.tol)
        self.model_ = LocalModel(self.cycle_, self.frame_, self.G_)
        self.period_ = self.cycle_.period
        self.n_features_in_ = spec.dim
        return self

    def _check(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before using the estimator")
        return check_array(X).reshape(-1, self.n_features_in_)

    def transform(self, X):
        """Curvilinear coordinates ``(tau, z_1, ..., z_{d-1})`` of each row."""
        X = self._check(X)
        out = np.empty_like(X)
        for k, x in enumerate(X):
            tau, z = to_curvilinear(self.frame_, x)
            out[k, 0] = tau
            out[k, 1:] = z
        return out

    def predict(self, X):
        """Quadratic quasi-potential ``z^T G(tau) z / 2`` of each row."""
        C = self.transform(X)
        return np.array([float(quadratic_qp(self.model_, c[0], c[1:])) for c in C])

    def minimum_action(self, x_end, N: int = 160, method: str = "lqa", h=None, kappa=None, optimizer_options=None):
        """
        Minimum action path from the cycle to ``x_end``.

        ``method="lqa"`` attaches the path to a tube around the cycle and
        adds the quadratic term; ``"lc"`` attaches it to the cycle itself.
        """
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before using the estimator")
        if method == "lqa":
            return minimize_lqa(
                self.spec_, self.cycle_, self.frame_, self.G_, x_end, N=N, h=h, kappa=kappa,
                optimizer_options=optimizer_options,
            )
        if method == "lc":
            return minimize_lc(self.spec_, self.cycle_, self.frame_, x_end, N=N, optimizer_options=optimizer_options)
        raise ValueError(f"unknown method {method!r}")
