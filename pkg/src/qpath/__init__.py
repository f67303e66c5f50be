"""
Quadratic quasi-potentials around stable limit cycles and minimum action
escape paths.

Pipeline: find the cycle (:mod:`qpath.cycle`), build a moving frame along
it (:mod:`qpath.frame`), solve the periodic Riccati equation for the
normal-plane Hessian (:mod:`qpath.riccati`), then either shoot extremals
from the tube (:mod:`qpath.hamiltonian`) or minimise a discrete geometric
action attached to the tube (:mod:`qpath.gmam`).
"""

from qpath.cycle import LimitCycle, find_limit_cycle
from qpath.frame import MovingFrame, build_frame
from qpath.gmam import DiscretePath, convergence_study, minimize_lc, minimize_lqa
from qpath.hamiltonian import Extremal, shoot
from qpath.localqp import LocalModel
from qpath.riccati import PeriodicMatrixFunction, reduced_coefficients, solve_prde
from qpath.systems import SystemSpec, get_system

__version__ = "0.1.0"

__all__ = [
    "SystemSpec",
    "get_system",
    "LimitCycle",
    "find_limit_cycle",
    "MovingFrame",
    "build_frame",
    "PeriodicMatrixFunction",
    "reduced_coefficients",
    "solve_prde",
    "LocalModel",
    "Extremal",
    "shoot",
    "DiscretePath",
    "minimize_lqa",
    "minimize_lc",
    "convergence_study",
]
