"""Topology description functions (TDFs) of components and their aggregate.

A component's TDF is positive inside it, zero on its boundary and negative
outside. The structure's TDF is a Kreisselmeier-Steinhauser (K-S) smooth max
of the component TDFs.
"""
from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import _kernels_py, kernels

log = logging.getLogger(__name__)

VARS_3D = ("x0", "y0", "z0", "L1", "L2", "L3", "alpha", "beta", "gamma")
VARS_2D = ("x0", "y0", "L", "t1", "t2", "theta")


@dataclass(frozen=True)
class Component3D:
    """Cuboid component: center, half-dimensions and three rotation angles."""

    x0: float
    y0: float
    z0: float
    L1: float
    L2: float
    L3: float
    alpha: float
    beta: float
    gamma: float

    kind = "cuboid3d"
    nvars = 9

    def __post_init__(self):
        if min(self.L1, self.L2, self.L3) <= 0:
            raise ValueError(f"half-dimensions must be positive, got {self.half_sizes}")
        if not np.all(np.isfinite(self.params)):
            raise ValueError("component parameters must be finite")

    @property
    def params(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @property
    def half_sizes(self) -> tuple[float, float, float]:
        return (self.L1, self.L2, self.L3)


@dataclass(frozen=True)
class Component2D:
    """Trapezoid component: center, half-length, end half-widths, angle."""

    x0: float
    y0: float
    L: float
    t1: float
    t2: float
    theta: float

    kind = "trapezoid2d"
    nvars = 6

    def __post_init__(self):
        if min(self.L, self.t1, self.t2) <= 0:
            raise ValueError(f"L, t1, t2 must be positive, got {self.half_sizes}")
        if not np.all(np.isfinite(self.params)):
            raise ValueError("component parameters must be finite")

    @property
    def params(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @property
    def half_sizes(self) -> tuple[float, float, float]:
        return (self.L, self.t1, self.t2)


Component = Component3D | Component2D
_KINDS = {"cuboid3d": Component3D, "trapezoid2d": Component2D}


def component_from_params(kind: str, params) -> Component:
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown component kind {kind!r}") from None
    params = [float(v) for v in params]
    if len(params) != len(fields(cls)):
        raise ValueError(f"{kind} needs {len(fields(cls))} parameters, got {len(params)}")
    return cls(*params)


def component_to_record(c: Component) -> dict:
    return {"kind": c.kind, "params": [float(v) for v in c.params]}


def component_from_record(record: dict) -> Component:
    return component_from_params(record["kind"], record["params"])


@dataclass(frozen=True)
class TdfHyperParams:
    p: int = 6
    lam: float = 100.0
    exp_floor: float = 1e-12

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2 or self.p % 2:
            raise ValueError(f"p must be an even integer >= 2, got {self.p}")
        if self.lam <= 0 or self.exp_floor <= 0:
            raise ValueError("lam and exp_floor must be positive")


def rotation_matrix_3d(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Global-to-local rotation; local = R @ (x - x0)."""
    return _kernels_py.rotation_3d(alpha, beta, gamma)


def rotation_matrix_derivs_3d(alpha: float, beta: float, gamma: float):
    """Partial derivatives of :func:`rotation_matrix_3d` in each angle."""
    return _kernels_py.rotation_derivs_3d(alpha, beta, gamma)


def _points(points, dim):
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if pts.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {pts.shape}")
    return pts


def tdf_eval_3d(c: Component3D, points, hp: TdfHyperParams = TdfHyperParams()) -> np.ndarray:
    phi, _ = kernels.tdf3d(c.params, _points(points, 3), int(hp.p), False)
    return phi


def tdf_grad_3d(c: Component3D, points, hp: TdfHyperParams = TdfHyperParams()) -> np.ndarray:
    """(n, 9) partials in the order x0, y0, z0, L1, L2, L3, alpha, beta, gamma.

    At the exact component center all partials are returned as zero.
    """
    _, grad = kernels.tdf3d(c.params, _points(points, 3), int(hp.p), True)
    return grad


def tdf_eval_2d(c: Component2D, points, hp: TdfHyperParams = TdfHyperParams()) -> np.ndarray:
    phi, _ = kernels.tdf2d(c.params, _points(points, 2), int(hp.p), False)
    return phi


def tdf_grad_2d(c: Component2D, points, hp: TdfHyperParams = TdfHyperParams()) -> np.ndarray:
    """(n, 6) partials in the order x0, y0, L, t1, t2, theta."""
    _, grad = kernels.tdf2d(c.params, _points(points, 2), int(hp.p), True)
    return grad


def tdf_eval(c: Component, points, hp: TdfHyperParams = TdfHyperParams()) -> np.ndarray:
    if isinstance(c, Component3D):
        return tdf_eval_3d(c, points, hp)
    return tdf_eval_2d(c, points, hp)


def tdf_value_and_grad(c: Component, points, hp: TdfHyperParams = TdfHyperParams()):
    pts = _points(points, 3 if isinstance(c, Component3D) else 2)
    kernel = kernels.tdf3d if isinstance(c, Component3D) else kernels.tdf2d
    return kernel(c.params, pts, int(hp.p), True)


def ks_aggregate(columns, lam: float, exp_floor: float = 1e-12):
    """Smooth max over the columns of an (nNod, m) array.

    Returns ``(phi_max, weights)`` where ``weights`` are the row-stochastic
    softmax weights, i.e. d(phi_max)/d(column).
    """
    cols = np.asarray(columns, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    if cols.shape[1] == 0:
        raise ValueError("need at least one TDF column")
    top = cols.max(axis=1)
    e = np.exp(lam * (cols - top[:, None]))
    total = e.sum(axis=1)
    phi_max = top + np.log(np.maximum(total, exp_floor)) / lam
    weights = e / total[:, None]
    return phi_max, weights


def prune_components(components, tdf_columns, min_size: float, epsilon: float, active=None):
    """Active flags after removing tiny or out-of-band components.

    A component is dropped when ``min(half_sizes) / min_size <= 0.1`` or when
    every nodal ``|phi|`` is at least ``epsilon``. Flags never switch back on.
    If everything would be dropped, the last previously active component is
    kept and a warning is logged.
    """
    if min_size <= 0:
        raise ValueError("min_size must be positive")
    n = len(components)
    prev = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    cols = np.asarray(tdf_columns, dtype=float).reshape(-1, n)
    out = prev.copy()
    for i, c in enumerate(components):
        if not prev[i]:
            continue
        tiny = min(c.half_sizes) / min_size <= 0.1
        outside = bool(np.all(np.abs(cols[:, i]) >= epsilon))
        if tiny or outside:
            out[i] = False
    if not out.any() and prev.any():
        keep = np.flatnonzero(prev)[-1]
        out[keep] = True
        log.warning("all components met the removal criteria; keeping component %d", keep)
    return out
