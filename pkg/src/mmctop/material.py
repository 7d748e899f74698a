"""Ersatz material model: smoothed Heaviside of the TDF and element densities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HeavisideParams:
    epsilon: float = 0.25
    alpha: float = 1e-3

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


def heaviside(x, hp: HeavisideParams = HeavisideParams()):
    """C1 cubic ramp from ``alpha`` (x < -eps) to 1 (x > eps)."""
    x = np.asarray(x, dtype=float)
    eps, a = hp.epsilon, hp.alpha
    ramp = 0.75 * (1.0 - a) * (x / eps - x ** 3 / (3.0 * eps ** 3)) + 0.5 * (1.0 + a)
    # clip rounding near the ends so the range is exactly [alpha, 1]
    ramp = np.clip(ramp, a, 1.0)
    return np.where(x > eps, 1.0, np.where(x < -eps, a, ramp))


def heaviside_deriv(x, hp: HeavisideParams = HeavisideParams()):
    x = np.asarray(x, dtype=float)
    eps, a = hp.epsilon, hp.alpha
    d = 0.75 * (1.0 - a) * (1.0 / eps - x ** 2 / eps ** 3)
    return np.where(np.abs(x) > eps, 0.0, d)


def element_density(nodal_h, mesh) -> np.ndarray:
    """Mean of each element's nodal values."""
    nodal_h = np.asarray(nodal_h, dtype=float)
    if nodal_h.shape != (mesh.n_nod,):
        raise ValueError(f"nodal field has shape {nodal_h.shape}, mesh has {mesh.n_nod} nodes")
    return nodal_h[mesh.elem_nodes].mean(axis=1)


def nodal_weights(mesh) -> np.ndarray:
    """Volume share of each node: element volume split evenly among its nodes."""
    npe = mesh.elem_nodes.shape[1]
    w = np.bincount(mesh.elem_nodes.ravel(), minlength=mesh.n_nod).astype(float)
    return w * (mesh.elem_volume / npe)


def structural_volume(nodal_h, weights) -> float:
    return float(np.dot(weights, nodal_h))
