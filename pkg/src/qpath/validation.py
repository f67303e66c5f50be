"""
End-to-end validation checks against known values.

Each check returns a :class:`CheckResult`; :func:`run_checks` evaluates a
selection in order and shares expensive intermediate products (cycles,
Riccati solutions, paths) through a :class:`ValidationContext`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from qpath._numerics import loglog_slope
from qpath.cycle import find_limit_cycle
from qpath.frame import build_frame
from qpath.gmam import convergence_study, discrete_action, minimize_lc, minimize_lqa
from qpath.hamiltonian import hamiltonian, shoot
from qpath.localqp import LocalModel, momentum_approx, normal_directions
from qpath.riccati import (
    RiccatiError,
    analytic_planar_solution,
    check_conditions,
    conjugate_by_flip,
    plde_residual,
    reduced_coefficients,
    riccati_period_map,
    solve_prde,
)
from qpath.systems import get_system, linear

__all__ = ["CheckResult", "ValidationContext", "CHECKS", "TARGETS", "run_checks", "format_table"]

# escape targets used throughout
TARGETS = {
    "vdp": (2.0, -2.5),
    "twolc": (-0.9, 0.6942),
    "hopf": (1.5, 0.0),
}
HOPF_ACTION = 0.78125
TWOLC_ACTION = 0.1599
TWOLC_HJ_REFERENCE = 0.1567


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "summary": self.summary, "details": self.details}


class ValidationContext:
    """Memoises pipeline products by system name and path solves by ``(system, method, N)``."""

    def __init__(self):
        self._setups: Dict[str, tuple] = {}
        self._paths: Dict[tuple, object] = {}

    def setup(self, name: str):
        """``(spec, cycle, frame, coeffs, G)`` for a catalogue system."""
        if name not in self._setups:
            spec = get_system(name)
            cycle = find_limit_cycle(spec)
            frame = build_frame(spec, cycle)
            coeffs = reduced_coefficients(spec, cycle, frame)
            self._setups[name] = (spec, cycle, frame, coeffs, solve_prde(coeffs))
        return self._setups[name]

    def path(self, name: str, method: str, N: int):
        key = (name, method, N)
        if key not in self._paths:
            spec, cycle, frame, _, G = self.setup(name)
            if method == "lqa":
                self._paths[key] = minimize_lqa(spec, cycle, frame, G, TARGETS[name], N=N)
            else:
                self._paths[key] = minimize_lc(spec, cycle, frame, TARGETS[name], N=N)
        return self._paths[key]


def check_riccati_oracle(ctx: ValidationContext) -> CheckResult:
    _, _, _, coeffs, G = ctx.setup("hopf")
    Ga = analytic_planar_solution(coeffs)
    taus = np.linspace(0.0, coeffs.period, 257)
    err_iter = float(np.max(np.abs(G(taus) - 4.0)))
    err_closed = float(np.max(np.abs(Ga(taus) - 4.0)))
    ok = err_iter <= 1e-6 and err_closed <= 1e-6
    return CheckResult(
        "riccati_oracle",
        ok,
        f"hopf |G - 4|: iterative {err_iter:.2e}, closed form {err_closed:.2e} (tol 1e-6)",
        {"iterative_error": err_iter, "closed_form_error": err_closed},
    )


PERIODS = {"vdp": 6.6633, "twolc": 5.7966, "lv3d": 6.7965, "net5d": 8.1165}


def check_periods(ctx: ValidationContext) -> CheckResult:
    got = {name: ctx.setup(name)[1].period for name in PERIODS}
    errs = {name: abs(got[name] - PERIODS[name]) for name in PERIODS}
    ok = all(e <= 5e-3 for e in errs.values())
    text = ", ".join(f"{n} {got[n]:.4f}" for n in PERIODS)
    return CheckResult("periods", ok, f"{text} (tol 5e-3)", {"periods": got, "errors": errs})


def check_planar_crosscheck(ctx: ValidationContext) -> CheckResult:
    details = {}
    ok = True
    for case in ("i", "ii", "iii"):
        spec = get_system("vdp", case)
        cycle = ctx.setup("vdp")[1] if case == "i" else find_limit_cycle(spec)
        frame = build_frame(spec, cycle)
        coeffs = reduced_coefficients(spec, cycle, frame)
        G = solve_prde(coeffs)
        try:
            Ga = analytic_planar_solution(coeffs)
        except RiccatiError as exc:
            details[case] = {"error": str(exc)}
            ok = False
            continue
        taus = np.linspace(0.0, coeffs.period, 1025)
        diff = float(np.max(np.abs(G(taus) - Ga(taus))))
        gmin = float(min(G.values.min(), Ga.values.min()))
        details[case] = {"max_difference": diff, "min_G": gmin}
        ok &= gmin > 0
        if case == "i":
            ok &= diff <= 1e-6
    return CheckResult(
        "planar_crosscheck",
        bool(ok),
        f"vdp (i) |G_iter - G_closed| {details['i'].get('max_difference', np.nan):.2e} (tol 1e-6); "
        f"min G (ii) {details['ii'].get('min_G', np.nan):.3g}, (iii) {details['iii'].get('min_G', np.nan):.3g}",
        details,
    )


def check_escape_action(ctx: ValidationContext) -> CheckResult:
    p = ctx.path("twolc", "lqa", 160)
    err = abs(p.total - TWOLC_ACTION)
    ok = bool(p.converged and err <= 2e-3)
    return CheckResult(
        "escape_action",
        ok,
        f"twolc N=160 action {p.total:.5f} vs {TWOLC_ACTION} (tol 2e-3); HJ reference {TWOLC_HJ_REFERENCE}",
        {"action": p.total, "geometric": p.geometric, "quadratic": p.quadratic, "tau": p.tau,
         "converged": p.converged, "hj_reference": TWOLC_HJ_REFERENCE, "info": p.info},
    )


def check_convergence_order(ctx: ValidationContext) -> CheckResult:
    details = {}
    ok = True
    for name in ("vdp", "hopf"):
        spec, cycle, frame, _, G = ctx.setup(name)
        st = convergence_study(spec, cycle, frame, G, TARGETS[name])
        for n, p in zip(st["N"], st["paths"]):
            ctx._paths.setdefault((name, "lqa", n), p)
        details[name] = {k: st[k] for k in ("N", "h", "action", "error", "order")}
        ok &= 1.6 <= st["order"] <= 2.4
    return CheckResult(
        "convergence_order",
        bool(ok),
        f"fitted order vdp {details['vdp']['order']:.2f}, hopf {details['hopf']['order']:.2f} (range [1.6, 2.4])",
        details,
    )


def _fan(spec, model, n_tau, scheme, t_max, stop=None, seed=0):
    dirs = normal_directions(spec.dim - 1, 2, seed)
    out = []
    for tau in np.arange(n_tau) * model.cycle.period / n_tau:
        for zd in dirs:
            out.append(shoot(spec, model, tau, zd, t_max=t_max, scheme=scheme, stop=stop))
    return out


def check_hamiltonian(ctx: ValidationContext) -> CheckResult:
    spec, cycle, frame, _, G = ctx.setup("hopf")
    model = LocalModel(cycle, frame, G)
    ext = shoot(spec, model, 0.0, [1.0], t_max=8.0, stop=lambda x: np.linalg.norm(x) - 1.5)
    v_err = abs(ext.V[-1] - HOPF_ACTION)
    max_H = {"hopf_oracle": ext.max_abs_H}
    for name in ("vdp", "twolc"):
        s, c, f, _, g = ctx.setup(name)
        shots = _fan(s, LocalModel(c, f, g), 2, "composition4", 5.0)
        max_H[name] = max(e.max_abs_H for e in shots)
    ok = ext.status == "event" and v_err <= 1e-3 and all(v < 1e-7 for v in max_H.values())
    worst = max(max_H.values())
    return CheckResult(
        "hamiltonian",
        bool(ok),
        f"max|H| {worst:.2e} (tol 1e-7); hopf V(r=1.5) {ext.V[-1]:.6f} vs {HOPF_ACTION} (tol 1e-3)",
        {"max_abs_H": max_H, "hopf_V": float(ext.V[-1]), "hopf_status": ext.status},
    )


def check_antiperiodic(ctx: ValidationContext) -> CheckResult:
    _, cycle, frame, coeffs, G = ctx.setup("net5d")
    n_flip = int(np.sum(frame.flip < 0))
    T = cycle.period
    span_ok = G.antiperiodic and abs(G.span - 2.0 * T) <= 1e-12 * T
    k = G.tau.size // 2
    ev_err = float(np.max(np.abs(np.linalg.eigvalsh(G.values[:k]) - np.linalg.eigvalsh(G.values[k:]))))
    taus = np.linspace(0.0, T, 97, endpoint=False)
    S = np.diag(G.flip)
    off_grid = float(max(np.linalg.norm(G(t + T) - S @ G(t) @ S) for t in taus))
    conj = conjugate_by_flip(G).conjugacy_error
    ok = n_flip == 2 and span_ok and ev_err <= 1e-6 and max(conj, off_grid) <= 1e-8
    return CheckResult(
        "antiperiodic",
        bool(ok),
        f"net5d flipped vectors {n_flip} (want 2); eigenvalue periodicity {ev_err:.2e} (tol 1e-6); "
        f"|G(t+T) - F G F| {max(conj, off_grid):.2e} (tol 1e-8)",
        {"n_flipped": n_flip, "span_is_2T": bool(span_ok), "eigenvalue_error": ev_err,
         "conjugacy_grid": conj, "conjugacy_off_grid": off_grid},
    )


def _psd_propagation(coeffs, n_seeds=20):
    m = coeffs.m
    worst = np.inf
    grid = np.linspace(0.0, coeffs.span, 65)
    for seed in range(n_seeds):
        rng = np.random.default_rng(seed)
        B = rng.standard_normal((m, rng.integers(0, m + 1)))
        G0 = B @ B.T * rng.uniform(0.1, 10.0)
        _, _, sol = riccati_period_map(coeffs, G0, t_eval=grid)
        idx = np.triu_indices(m)
        for y in sol.y.T:
            g = np.zeros((m, m))
            g[idx] = y
            g = g + np.triu(g, 1).T
            worst = min(worst, float(np.linalg.eigvalsh(g)[0]) / max(1.0, float(np.abs(g).max())))
    return worst


def _cubic_scaling(spec, model, seed=0):
    rng = np.random.default_rng(seed)
    radii = np.logspace(-3, -2, 6)
    m = spec.dim - 1
    worst = []
    taus = rng.uniform(0.0, model.cycle.period, 8)
    dirs = normal_directions(m, 8, seed) if m > 1 else np.array([[1.0], [-1.0]] * 4)
    for r in radii:
        vals = []
        for tau, dz in zip(taus, dirs):
            z = r * dz / np.linalg.norm(dz)
            x = model.point(tau, z)
            vals.append(abs(hamiltonian(spec, x, momentum_approx(model, tau, z))))
        worst.append(max(vals))
    return loglog_slope(radii, worst), worst


def check_properties(ctx: ValidationContext) -> CheckResult:
    spec, cycle, frame, coeffs, G = ctx.setup("vdp")
    psd = _psd_propagation(coeffs)
    plde = plde_residual(G, coeffs)
    ctrl_iso = check_conditions(coeffs).controllable
    ctrl_zero = check_conditions(coeffs.with_diffusion(0.0)).controllable
    slope, _ = _cubic_scaling(spec, LocalModel(cycle, frame, G))
    # nonnegative geometric action on random paths, zero on a flow-aligned one
    rng = np.random.default_rng(0)
    s_min = min(discrete_action(rng.normal(size=(33, 2)) * 2.0, spec) for _ in range(20))
    contracting = linear(-np.eye(2))
    s_flow = discrete_action(np.linspace([2.0, 1.0], [0.5, 0.25], 17), contracting)
    parts = {
        "psd_propagation_min_eig": psd,
        "plde_residual": plde,
        "controllable_identity": bool(ctrl_iso),
        "controllable_zero_noise": bool(ctrl_zero),
        "hamiltonian_order": slope,
        "min_action_random_paths": float(s_min),
        "action_flow_aligned": float(s_flow),
    }
    ok = (
        psd >= -1e-10
        and plde <= 1e-6
        and ctrl_iso
        and not ctrl_zero
        and slope >= 3.0
        and s_min >= 0.0
        and abs(s_flow) <= 1e-12
    )
    return CheckResult(
        "properties",
        bool(ok),
        f"PSD min eig {psd:.1e}; PLDE residual {plde:.1e}; controllable a=I {ctrl_iso}, A=0 {ctrl_zero}; "
        f"|H| order {slope:.2f}; min S {s_min:.2e}; flow-aligned S {s_flow:.1e}",
        parts,
    )


def check_ordering(ctx: ValidationContext) -> CheckResult:
    details = {}
    ok = True
    for N in (40, 160):
        lqa = ctx.path("twolc", "lqa", N)
        lc = ctx.path("twolc", "lc", N)
        details[N] = {"lqa": lqa.total, "lc": lc.total, "converged": bool(lqa.converged and lc.converged)}
        ok &= lqa.converged and lc.converged and lqa.total <= lc.total + 1e-3
    text = "; ".join(f"N={N} LQA {v['lqa']:.5f} LC {v['lc']:.5f}" for N, v in details.items())
    return CheckResult("ordering", bool(ok), f"{text} (LQA <= LC + 1e-3)", details)


CHECKS: Dict[str, Callable[[ValidationContext], CheckResult]] = {
    "riccati_oracle": check_riccati_oracle,
    "periods": check_periods,
    "planar_crosscheck": check_planar_crosscheck,
    "escape_action": check_escape_action,
    "convergence_order": check_convergence_order,
    "hamiltonian": check_hamiltonian,
    "antiperiodic": check_antiperiodic,
    "properties": check_properties,
    "ordering": check_ordering,
}


def run_checks(names: Optional[Sequence[str]] = None, ctx: Optional[ValidationContext] = None, echo=None):
    """Run the named checks (all by default); ``echo`` receives each result as it completes."""
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; choose from {list(CHECKS)}")
    ctx = ValidationContext() if ctx is None else ctx
    results = []
    for name in names:
        t0 = time.perf_counter()
        try:
            res = CHECKS[name](ctx)
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(name, False, f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
        if echo is not None:
            echo(res)
    return results


def format_line(res: CheckResult) -> str:
    return f"{'PASS' if res.passed else 'FAIL'}  {res.name:<18} {res.summary}"


def format_table(results) -> str:
    return "\n".join(format_line(r) for r in results)
