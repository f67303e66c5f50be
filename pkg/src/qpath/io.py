"""
CSV and JSON readers and writers for pipeline products.

CSV files have a single header row and one record per line (RFC 4180, as
written by :mod:`csv`); floats are printed with 17 significant digits so
that values round-trip exactly.  JSON documents carry a ``schema_version``
field and are written with sorted keys, so identical inputs give identical
bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "SchemaError",
    "write_csv",
    "read_csv",
    "write_json",
    "read_json",
    "to_jsonable",
    "cycle_table",
    "frame_table",
    "riccati_table",
    "path_table",
    "extremal_table",
    "tube_table",
]

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A file does not match the expected layout or schema version."""


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> Path:
    """Write ``rows`` (2-D array or sequence of records) under ``header``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=object)) if len(rows) else np.zeros((0, len(header)))
    if rows.shape[1] != len(header):
        raise SchemaError(f"{len(header)} columns in header but {rows.shape[1]} in data")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    """Return ``(header, data)`` with ``data`` a float array of shape ``(n, len(header))``."""
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [r for r in rd if r]
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed numeric table") from exc
    return header, data


def to_jsonable(obj):
    """Convert numpy containers and scalars into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"real": to_jsonable(obj.real), "imag": to_jsonable(obj.imag)}
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"real": float(obj.real), "imag": float(obj.imag)}
    if obj is None or isinstance(obj, (str, int)):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, payload: dict, kind: str) -> Path:
    """Write ``payload`` tagged with ``schema_version`` and ``kind``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, **to_jsonable(payload)}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def read_json(path, kind=None) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    if kind is not None and doc.get("kind") != kind:
        raise SchemaError(f"{path}: kind {doc.get('kind')!r}, expected {kind!r}")
    return doc


def _coords(prefix, d):
    return [f"{prefix}{i}" for i in range(d)]


def cycle_table(cycle):
    """Columns ``tau, x0.., v0..`` (state and velocity samples)."""
    d = cycle.dim
    header = ["tau"] + _coords("x", d) + _coords("v", d)
    return header, np.column_stack([cycle.tau, cycle.states, cycle.velocities])


def frame_table(frame):
    """Columns ``tau, E_ij`` (row-major) and ``cond``."""
    d = frame.dim
    header = ["tau"] + [f"E{i}{j}" for i in range(d) for j in range(d)] + ["cond"]
    return header, np.column_stack([frame.tau, frame.E.reshape(len(frame.tau), -1), frame.cond])


def riccati_table(G):
    """Columns ``tau``, upper-triangle entries ``G_ij`` (``i <= j``) and eigenvalues."""
    m = G.values.shape[1]
    iu = np.triu_indices(m)
    header = ["tau"] + [f"G{i}{j}" for i, j in zip(*iu)] + [f"eig{k}" for k in range(m)]
    return header, np.column_stack([G.tau, G.values[:, iu[0], iu[1]], G.eigenvalues()])


def path_table(path):
    """Columns ``i, phi0..``."""
    pts = path.points
    return ["i"] + _coords("phi", pts.shape[1]), np.column_stack([np.arange(len(pts)), pts])


def extremal_table(ext):
    """Columns ``t, phi.., p.., V, H``."""
    d = ext.x.shape[1]
    header = ["t"] + _coords("phi", d) + _coords("p", d) + ["V", "H"]
    return header, np.column_stack([ext.t, ext.x, ext.p, ext.V, ext.H])


def tube_table(surface: dict):
    """Columns ``tau, z.., x.., Q`` for :func:`qpath.localqp.tube_surface` output."""
    z, x = surface["z"], surface["x"]
    header = ["tau"] + _coords("z", z.shape[1]) + _coords("x", x.shape[1]) + ["Q"]
    return header, np.column_stack([surface["tau"], z, x, surface["Q"]])
