"""
Command-line front end.

    qpath cycle|frame|riccati|shoot|map|path|study [flags]
    qpath validate [check ...]
    qpath demo <name> [flags]

Stages write CSV tables and JSON reports into ``--out``.  Cycles, frames
and Riccati solutions are cached there as ``.npz`` files keyed by a hash of
the configuration entries they depend on, so later stages reuse them.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from qpath import io
from qpath.cycle import LimitCycle, find_limit_cycle, is_asymptotically_stable
from qpath.frame import MovingFrame, build_frame
from qpath.gmam import convergence_study, default_kappa, minimize_lc, minimize_lqa
from qpath.hamiltonian import shoot
from qpath.localqp import LocalModel, normal_directions
from qpath.riccati import PeriodicMatrixFunction, check_conditions, prde_residual, reduced_coefficients, solve_prde
from qpath.systems import get_system
from qpath.validation import CHECKS, TARGETS, format_line, run_checks

__all__ = ["RunConfig", "main", "build_parser", "DEMOS"]

SUBCOMMANDS = ("cycle", "frame", "riccati", "shoot", "map", "path", "study", "validate", "demo")


@dataclass
class RunConfig:
    """Everything a run depends on; serialises to and from JSON."""

    system: str = "vdp"
    params: dict = field(default_factory=dict)
    diffusion_case: Optional[str] = None
    stages: List[str] = field(default_factory=lambda: ["cycle"])
    N: int = 160
    h: Optional[float] = None
    kappa: Optional[float] = None
    method: str = "lqa"
    Ns: List[int] = field(default_factory=lambda: [20, 40, 80, 160])
    x_end: Optional[List[float]] = None
    tol: float = 1e-10
    samples: int = 512
    c0: Optional[float] = None
    shoot_tau: float = 0.0
    shoot_dir: Optional[List[float]] = None
    t_max: float = 8.0
    scheme: str = "composition4"
    map_tau: int = 8
    map_dirs: int = 2
    map_extent: float = 1.5
    out: str = "qpath-out"
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names - {"schema_version", "kind"}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self, path) -> Path:
        return io.write_json(path, self.to_dict(), "run_config")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(io.read_json(path, "run_config"))

    @property
    def target(self):
        if self.x_end is not None:
            return np.asarray(self.x_end, dtype=float)
        if self.system in TARGETS:
            return np.asarray(TARGETS[self.system], dtype=float)
        raise ValueError(f"no default escape target for {self.system}; pass x_end in the config")


DEMOS = {
    "vdp-i": {"system": "vdp", "diffusion_case": "i", "stages": ["cycle", "frame", "riccati", "path"]},
    "vdp-ii": {"system": "vdp", "diffusion_case": "ii", "stages": ["cycle", "frame", "riccati", "map"]},
    "vdp-iii": {"system": "vdp", "diffusion_case": "iii", "stages": ["cycle", "frame", "riccati"]},
    "twolc": {"system": "twolc", "stages": ["cycle", "frame", "riccati", "path"]},
    "lv3d": {"system": "lv3d", "stages": ["cycle", "frame", "riccati", "map"]},
    "net5d": {"system": "net5d", "stages": ["cycle", "frame", "riccati", "map"]},
    "hopf": {"system": "hopf", "stages": ["cycle", "frame", "riccati", "map"]},
}


class NumericalFailure(RuntimeError):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(io.to_jsonable(obj), sort_keys=True).encode()).hexdigest()[:16]


class Pipeline:
    """Runs stages for one configuration, caching upstream products under ``out/.cache``."""

    def __init__(self, cfg: RunConfig, echo=print):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.cache = self.out / ".cache"
        self.echo = echo
        self.spec = get_system(cfg.system, cfg.diffusion_case, **cfg.params)
        self._cycle = self._frame = self._G = self._coeffs = None

    def _keys(self):
        c = self.cfg
        base = {"system": c.system, "params": c.params, "diffusion_case": c.diffusion_case, "samples": c.samples, "tol": c.tol}
        return {"cycle": _hash(base), "frame": _hash(base), "riccati": _hash({**base, "c0": c.c0})}

    def _cache_path(self, stage):
        return self.cache / f"{stage}-{self._keys()[stage]}.npz"

    @property
    def cycle(self) -> LimitCycle:
        if self._cycle is None:
            p = self._cache_path("cycle")
            if p.exists():
                z = np.load(p)
                self._cycle = LimitCycle(self.spec, float(z["period"]), z["tau"], z["states"], z["velocities"], z["multipliers"], z["monodromy0"])
            else:
                self._cycle = find_limit_cycle(self.spec, tol=self.cfg.tol, n_samples=self.cfg.samples)
                c = self._cycle
                self.cache.mkdir(parents=True, exist_ok=True)
                np.savez(p, period=c.period, tau=c.tau, states=c.states, velocities=c.velocities,
                         multipliers=c.multipliers, monodromy0=c.monodromy0)
        return self._cycle

    @property
    def frame(self) -> MovingFrame:
        if self._frame is None:
            p = self._cache_path("frame")
            if p.exists():
                z = np.load(p)
                self._frame = MovingFrame(self.cycle, str(z["kind"]), z["tau"], z["E"], z["Einv"], z["Omega"], z["speed"], z["flip"])
            else:
                self._frame = f = build_frame(self.spec, self.cycle)
                self.cache.mkdir(parents=True, exist_ok=True)
                np.savez(p, kind=f.kind, tau=f.tau, E=f.E, Einv=f.Einv, Omega=f.Omega, speed=f.speed, flip=f.flip)
        return self._frame

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = reduced_coefficients(self.spec, self.cycle, self.frame)
        return self._coeffs

    @property
    def G(self) -> PeriodicMatrixFunction:
        if self._G is None:
            p = self._cache_path("riccati")
            if p.exists():
                z = np.load(p)
                self._G = PeriodicMatrixFunction(z["tau"], z["values"], z["derivs"], float(z["span"]), float(z["period"]),
                                                 z["flip"], int(z["iterations"]),
                                                 higher=z["higher"] if "higher" in z.files else None)
            else:
                self._G = G = solve_prde(self.coeffs, c0=self.cfg.c0, tol=self.cfg.tol)
                self.cache.mkdir(parents=True, exist_ok=True)
                np.savez(p, tau=G.tau, values=G.values, derivs=G.derivs, span=G.span, period=G.period,
                         flip=G.flip, iterations=G.iterations,
                         **({} if G.higher is None else {"higher": G.higher}))
        return self._G

    @property
    def model(self) -> LocalModel:
        return LocalModel(self.cycle, self.frame, self.G)

    def _write(self, name, table):
        header, rows = table
        io.write_csv(self.out / name, header, rows)
        self.echo(f"wrote {self.out / name}")

    def _json(self, name, payload, kind):
        io.write_json(self.out / name, payload, kind)
        self.echo(f"wrote {self.out / name}")

    # stages

    def run_cycle(self):
        c = self.cycle
        stab = is_asymptotically_stable(c)
        self._write("cycle.csv", io.cycle_table(c))
        self._json("cycle.json", {**c.to_dict(), "arclength": c.arclength, "stability": stab.to_dict()}, "cycle")
        if not stab.stable:
            raise NumericalFailure("cycle is not asymptotically stable", stab.to_dict())

    def run_frame(self):
        self._write("frame.csv", io.frame_table(self.frame))
        self._json("frame.json", self.frame.to_dict(), "frame")

    def run_riccati(self):
        G = self.G
        report = check_conditions(self.coeffs)
        ev = G.eigenvalues()
        payload = {
            "iterations": G.iterations,
            "antiperiodic": G.antiperiodic,
            "span": G.span,
            "min_eigenvalue": float(ev.min()),
            "max_eigenvalue": float(ev.max()),
            "prde_residual": prde_residual(G, self.coeffs),
            "conditions": report.to_dict(),
        }
        self._write("G.csv", io.riccati_table(G))
        self._json("riccati.json", payload, "riccati")

    def _stop(self):
        c = self.cycle
        centre = c.states.mean(axis=0)
        radius = self.cfg.map_extent * float(np.max(np.linalg.norm(c.states - centre, axis=1)))
        return lambda x: float(np.linalg.norm(x - centre) - radius)

    def _shoot(self, tau, z_dir):
        return shoot(self.spec, self.model, tau, z_dir, t_max=self.cfg.t_max, scheme=self.cfg.scheme, stop=self._stop())

    def run_shoot(self):
        m = self.spec.dim - 1
        z_dir = self.cfg.shoot_dir if self.cfg.shoot_dir is not None else np.eye(m)[0]
        ext = self._shoot(self.cfg.shoot_tau, z_dir)
        self._write("extremal.csv", io.extremal_table(ext))
        self._json("shoot.json", {"tau": self.cfg.shoot_tau, "z_dir": z_dir, "status": ext.status,
                                  "V_end": float(ext.V[-1]), "max_abs_H": ext.max_abs_H, "steps": len(ext.t)}, "shoot")

    def run_map(self):
        cfg = self.cfg
        dirs = normal_directions(self.spec.dim - 1, cfg.map_dirs, cfg.seed)
        taus = np.arange(cfg.map_tau) * self.cycle.period / cfg.map_tau
        seeds = [(t, d) for t in taus for d in dirs]
        self.model  # materialise cached products before threads start
        workers = max(1, min(_thread_cap(), len(seeds)))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                shots = list(pool.map(lambda s: self._shoot(*s), seeds))
        else:
            shots = [self._shoot(*s) for s in seeds]
        d = self.spec.dim
        header = ["shot", "tau0"] + [f"dir{i}" for i in range(d - 1)] + ["t"] + [f"x{i}" for i in range(d)] + ["V", "H"]
        blocks = []
        for k, ((t0, dz), e) in enumerate(zip(seeds, shots)):
            n = len(e.t)
            blocks.append(np.column_stack([np.full(n, k), np.full(n, t0), np.tile(dz, (n, 1)), e.t, e.x, e.V, e.H]))
        self._write("map.csv", (header, np.vstack(blocks)))
        summary = [{"shot": k, "tau0": t0, "dir": dz, "status": e.status, "V_end": float(e.V[-1]), "max_abs_H": e.max_abs_H}
                   for k, ((t0, dz), e) in enumerate(zip(seeds, shots))]
        self._json("map.json", {"shots": summary}, "map")

    def _path_payload(self, p):
        return {
            "method": "lqa" if p.h > 0 else "lc",
            "N": p.N,
            "h": p.h,
            "action": p.total,
            "geometric": p.geometric,
            "quadratic": p.quadratic,
            "tau": p.tau,
            "z": p.z,
            "converged": p.converged,
            "info": p.info,
            "x_end": self.cfg.target,
        }

    def run_path(self):
        cfg = self.cfg
        if cfg.method == "lc":
            p = minimize_lc(self.spec, self.cycle, self.frame, cfg.target, N=cfg.N)
        else:
            p = minimize_lqa(self.spec, self.cycle, self.frame, self.G, cfg.target, N=cfg.N, h=cfg.h, kappa=cfg.kappa)
        self._write("path.csv", io.path_table(p))
        payload = self._path_payload(p)
        self._json("result.json", payload, "path_result")
        if not p.converged:
            raise NumericalFailure("path optimisation did not converge", payload)

    def run_study(self):
        cfg = self.cfg
        kappa = cfg.kappa if cfg.kappa is not None else default_kappa(self.cycle)
        st = convergence_study(self.spec, self.cycle, self.frame, self.G, cfg.target, Ns=cfg.Ns, kappa=kappa)
        rows = np.column_stack([st["N"], st["h"], st["action"], st["error"]])
        self._write("study.csv", (["N", "h", "action", "error"], rows))
        self._json("study.json", {k: v for k, v in st.items() if k != "paths"}, "study")

    def run(self, stages):
        for s in stages:
            getattr(self, f"run_{s}")()


def _thread_cap() -> int:
    env = os.environ.get("QPATH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpath", description="Quasi-potentials around limit cycles and escape paths.")
    p.add_argument("command", choices=SUBCOMMANDS, help="stage to run")
    p.add_argument("names", nargs="*", help="demo name, or checks for validate")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--system", help="catalogue system name (vdp, twolc, lv3d, net5d, hopf)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--N", type=int, help="path points")
    p.add_argument("--h", type=float, help="tube radius")
    p.add_argument("--kappa", type=float, help="tube radius scale, h = kappa / N")
    p.add_argument("--samples", type=int, help="phase samples K on the cycle")
    p.add_argument("--tol", type=float, help="cycle and Riccati tolerance")
    p.add_argument("--seed", type=int, help="seed for random shooting directions")
    p.add_argument("--method", choices=("lqa", "lc"), help="path attachment")
    p.add_argument("--x-end", type=float, nargs="+", dest="x_end", help="escape target")
    return p


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    if args.command == "demo":
        if len(args.names) != 1 or args.names[0] not in DEMOS:
            raise KeyError(f"unknown demo {args.names}; choose from {sorted(DEMOS)}")
        name = args.names[0]
        cfg = dataclasses.replace(cfg, **DEMOS[name], out=str(Path(args.out or cfg.out)))
    elif args.command != "validate":
        stage = args.command
        prior = {"cycle": [], "frame": ["cycle"], "riccati": ["cycle", "frame"]}.get(stage, ["cycle", "frame", "riccati"])
        cfg = dataclasses.replace(cfg, stages=prior + [stage])
    for key in ("system", "out", "N", "h", "kappa", "samples", "tol", "seed", "method", "x_end"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "validate":
        unknown = [n for n in args.names if n not in CHECKS]
        if unknown:
            parser.print_usage(sys.stderr)
            print(f"qpath: unknown checks {unknown}; choose from {list(CHECKS)}", file=sys.stderr)
            return 2
        results = run_checks(args.names or None, echo=lambda r: print(format_line(r), flush=True))
        out = Path(args.out or "qpath-out")
        io.write_json(out / "validate.json", {"results": [r.to_dict() for r in results]}, "validation")
        n_pass = sum(r.passed for r in results)
        print(f"{n_pass}/{len(results)} checks passed")
        return 0 if n_pass == len(results) else 1
    try:
        cfg = _config_from_args(args)
    except KeyError as exc:
        parser.print_usage(sys.stderr)
        print(f"qpath: {exc.args[0]}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_json(out / "config.json")
    stage = None
    try:
        pipe = Pipeline(cfg)
        for stage in cfg.stages:
            pipe.run([stage])
    except (NumericalFailure, ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        payload = getattr(exc, "payload", {})
        io.write_json(out / "error.json", {"stage": stage, "error": type(exc).__name__, "message": str(exc),
                                           "details": payload}, "failure")
        print(f"qpath: {stage} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
