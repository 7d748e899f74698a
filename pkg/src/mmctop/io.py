"""Run configuration, result files and VTK export.

All files carry ``formatVersion`` (JSON) or a versioned header line.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

_CONFIG_KEYS = {
    "formatVersion", "problem", "meshScale", "mesh", "overrides", "maxIter", "tol", "outdir",
    "vtkEvery", "exportComponents", "fdValidate", "fdDelta", "fdVariables", "fullCompare",
    "solver", "voidMode", "mma",
}
_OVERRIDE_KEYS = {"epsilon", "alpha", "lam", "p", "scl", "dgt0", "volfrac", "E", "nu",
                  "thickness", "bounds"}
_MMA_KEYS = {"epsimin", "raa0", "albefa", "asyinit", "asyincr", "asydecr", "move", "a0", "c", "d"}
_SOLVERS = {"auto", "direct", "dense", "cg", "amg"}


@dataclass
class RunConfig:
    problem: object
    max_iter: int = 500
    tol: float = 1e-4
    outdir: Path = Path("runs")
    vtk_every: int = 0
    export_components: bool = True
    fd_validate: bool = False
    fd_delta: float = 1e-8
    fd_variables: list | None = None
    full_compare: bool = False
    solver: str = "auto"
    void_mode: str = "strict"
    mma: dict = field(default_factory=dict)


def _reject_unknown(d: dict, allowed: set, where: str):
    for key in d:
        if key not in allowed:
            raise ValueError(f"unknown {where} key {key!r}")


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse JSON config text, applying defaults for absent keys."""
    from .mma import MmaParams
    from .problems import ProblemDefinition, builtin

    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed config: {exc}") from None
    if not isinstance(d, dict):
        raise ValueError("config must be a JSON object")
    _reject_unknown(d, _CONFIG_KEYS, "config")
    version = d.get("formatVersion", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported formatVersion {version!r}")
    if "problem" not in d:
        raise ValueError("config needs a 'problem'")

    overrides = dict(d.get("overrides", {}))
    _reject_unknown(overrides, _OVERRIDE_KEYS, "overrides")
    if "bounds" in overrides:
        overrides["bounds"] = {k: tuple(v) for k, v in overrides["bounds"].items()}
    for k in ("p", "dgt0"):
        if k in overrides:
            overrides[k] = int(overrides[k])
    spec = d["problem"]
    if isinstance(spec, str):
        scale = d.get("meshScale", 1)
        prob = builtin(spec, mesh_scale=scale, mesh=d.get("mesh"), **overrides)
    elif isinstance(spec, dict):
        if "meshScale" in d or "mesh" in d:
            raise ValueError("meshScale/mesh apply to builtin problems only")
        prob = ProblemDefinition.from_dict(spec)
        if overrides:
            prob = prob.with_overrides(**overrides)
    else:
        raise ValueError("problem must be a builtin name or a problem object")

    mma = dict(d.get("mma", {}))
    _reject_unknown(mma, _MMA_KEYS, "mma")
    MmaParams(**mma)
    cfg = RunConfig(
        problem=prob,
        max_iter=int(d.get("maxIter", 500)),
        tol=float(d.get("tol", 1e-4)),
        outdir=Path(d.get("outdir", Path("runs") / prob.name)),
        vtk_every=int(d.get("vtkEvery", 0)),
        export_components=bool(d.get("exportComponents", True)),
        fd_validate=bool(d.get("fdValidate", False)),
        fd_delta=float(d.get("fdDelta", 1e-8)),
        fd_variables=d.get("fdVariables"),
        full_compare=bool(d.get("fullCompare", False)),
        solver=str(d.get("solver", "auto")),
        void_mode=str(d.get("voidMode", "strict")),
        mma=mma,
    )
    if base_dir is not None and not cfg.outdir.is_absolute():
        cfg.outdir = Path(base_dir) / cfg.outdir
    if cfg.max_iter < 1:
        raise ValueError("maxIter must be >= 1")
    if not cfg.tol > 0:
        raise ValueError("tol must be positive")
    if cfg.vtk_every < 0:
        raise ValueError("vtkEvery must be >= 0")
    if not cfg.fd_delta > 0:
        raise ValueError("fdDelta must be positive")
    if cfg.solver not in _SOLVERS:
        raise ValueError(f"unknown solver {cfg.solver!r}")
    if cfg.void_mode not in ("strict", "literal"):
        raise ValueError(f"unknown voidMode {cfg.void_mode!r}")
    return cfg


def export_vtk(field_values, mesh, path, name: str = "density") -> Path:
    """Legacy ASCII STRUCTURED_POINTS file.

    An element field is written as CELL_DATA, a nodal field as POINT_DATA.
    Values use ``%.9g`` so output is byte-stable.
    """
    v = np.asarray(field_values, dtype=float).ravel()
    if v.size == mesh.n_ele:
        section = f"CELL_DATA {mesh.n_ele}"
    elif v.size == mesh.n_nod:
        section = f"POINT_DATA {mesh.n_nod}"
    else:
        raise ValueError(f"field of size {v.size} matches neither elements nor nodes")
    hx, hy, *rest = mesh.elem_size
    hz = rest[0] if rest else 1.0
    nz = mesh.nelz + 1 if mesh.dim == 3 else 1
    lines = [
        "# vtk DataFile Version 3.0",
        f"mmctop formatVersion {FORMAT_VERSION}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {mesh.nelx + 1} {mesh.nely + 1} {nz}",
        "ORIGIN 0 0 0",
        f"SPACING {hx:.9g} {hy:.9g} {hz:.9g}",
        section,
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines += [f"{x:.9g}" for x in v]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


HISTORY_COLUMNS = ("iteration", "obj", "f0val", "volfrac", "obj_vr5", "ver", "n_active",
                   "path_exists", "path_size", "retained_fraction", "t_TDF", "t_srch", "t_FEr",
                   "t_FE", "t_sens", "t_updt", "srch_ratio", "obj_full", "ks_violations")


class HistoryWriter:
    """Append-only iteration CSV, flushed after every row."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w", newline="")
        self._fh.write(f"# mmctop history formatVersion {FORMAT_VERSION}\n")
        self._w = csv.writer(self._fh)
        self._w.writerow(HISTORY_COLUMNS)
        self._fh.flush()

    def append(self, rec):
        row = []
        for col in HISTORY_COLUMNS:
            val = getattr(rec, col)
            if isinstance(val, (bool, np.bool_)):
                row.append(int(val))
            elif isinstance(val, float):
                row.append(repr(float(val)) if math.isfinite(val) else "nan")
            else:
                row.append(val)
        self._w.writerow(row)
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_history(path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(lines)]


def write_components(path, kind: str, params, active, extra: dict | None = None) -> Path:
    data = {
        "formatVersion": FORMAT_VERSION,
        "components": [
            {"kind": kind, "params": [float(v) for v in row], "active": bool(a)}
            for row, a in zip(np.asarray(params), np.asarray(active))
        ],
    }
    data.update(extra or {})
    path = Path(path)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def read_components(path):
    from .geometry import component_from_record

    data = json.loads(Path(path).read_text())
    if data.get("formatVersion") != FORMAT_VERSION:
        raise ValueError("unsupported components formatVersion")
    comps = [component_from_record(r) for r in data["components"]]
    active = [bool(r.get("active", True)) for r in data["components"]]
    return comps, active


