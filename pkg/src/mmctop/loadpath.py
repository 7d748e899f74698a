"""Load transmission path search and the reduced (redundant-DOF-free) model.

Components and non-design domains are vertices of a graph; two vertices are
adjacent when the element sets they cover intersect. A breadth-first search
from the vertices covering loaded elements collects the path.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import ks_aggregate
from .material import HeavisideParams, element_density, heaviside


@dataclass
class LoadPathResult:
    exists: bool
    path: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    den_sld: np.ndarray | None = None
    retained_dofs: np.ndarray | None = None


def component_coverage(tdf_column, mesh, epsilon: float) -> np.ndarray:
    """Sorted element indices having at least one node with ``phi > -epsilon``."""
    nodes = np.flatnonzero(np.asarray(tdf_column) > -epsilon)
    if nodes.size == 0:
        return np.zeros(0, dtype=np.int64)
    return mesh.elems_of_nodes(nodes)


def _incidence(coverages, n_ele=None) -> sp.csr_matrix:
    rows = np.concatenate([np.full(len(c), i) for i, c in enumerate(coverages)] or [[]])
    cols = np.concatenate([np.asarray(c, dtype=np.int64) for c in coverages] or [[]])
    if n_ele is None:
        n_ele = int(cols.max()) + 1 if cols.size else 0
    return sp.csr_matrix((np.ones(rows.size), (rows.astype(np.int64), cols.astype(np.int64))),
                         shape=(len(coverages), n_ele))


def connectivity_graph(coverages, n_ele=None) -> np.ndarray:
    """Symmetric boolean adjacency: ``i ~ j`` iff their coverages intersect (i != j)."""
    C = _incidence(coverages, n_ele)
    A = (C @ C.T).toarray() > 0
    np.fill_diagonal(A, False)
    return A


def find_load_path(graph, coverages, loading_elements, fixed_elements) -> LoadPathResult:
    """Breadth-first search from loaded components; see module docstring."""
    loading = np.asarray(loading_elements, dtype=np.int64)
    fixed = np.asarray(fixed_elements, dtype=np.int64)
    covered_load = np.zeros(loading.size, dtype=bool)
    seeds, touches_fixed = [], np.zeros(len(coverages), dtype=bool)
    for i, cov in enumerate(coverages):
        hit = np.isin(loading, cov)
        if hit.any():
            seeds.append(i)
            covered_load |= hit
        touches_fixed[i] = np.isin(fixed, cov).any()
    if loading.size == 0 or not covered_load.all() or not touches_fixed.any():
        return LoadPathResult(False)

    graph = np.asarray(graph, dtype=bool)
    visited = np.zeros(len(coverages), dtype=bool)
    visited[seeds] = True
    front = deque(seeds)
    while front:
        i = front.popleft()
        for j in np.flatnonzero(graph[i] & ~visited):
            visited[j] = True
            front.append(j)
    path = np.flatnonzero(visited)
    return LoadPathResult(bool(touches_fixed[path].any()), path)


def void_threshold(hs: HeavisideParams, mode: str = "strict") -> float:
    """Density below which an element counts as void for DOF removal.

    ``strict`` uses ``alpha + 1e-6``; ``literal`` uses ``alpha + epsilon``.
    """
    if mode == "strict":
        return hs.alpha + 1e-6
    if mode == "literal":
        return hs.alpha + hs.epsilon
    raise ValueError(f"unknown void mode {mode!r}")


def retained_dofs(mesh, densities, free_dofs, threshold: float) -> np.ndarray:
    """Free DOFs touching at least one element with density >= threshold."""
    solid = np.asarray(densities) >= threshold
    keep = np.zeros(mesh.n_dof, dtype=bool)
    keep[mesh.edof[solid].ravel()] = True
    free = np.asarray(free_dofs, dtype=np.int64)
    return free[keep[free]]


def reduced_model(path_columns, lam: float, hs: HeavisideParams, mesh, free_dofs,
                  threshold: float | None = None, exp_floor: float = 1e-12):
    """Densities from the path members only, and the DOFs worth keeping.

    ``path_columns`` is the (nNod, k) array of TDFs of the path's components
    and non-design domains.
    """
    phi, _ = ks_aggregate(path_columns, lam, exp_floor)
    den = element_density(heaviside(phi, hs), mesh)
    thr = void_threshold(hs) if threshold is None else threshold
    return den, retained_dofs(mesh, den, free_dofs, thr)


def stiffness_mask(den_sld, threshold: float) -> np.ndarray:
    """Elements that enter the reduced stiffness matrix.

    Sub-threshold elements are dropped outright. Keeping them would tie the
    retained nodes they touch to the clamped removed DOFs, i.e. add springs
    to ground that switch on and off as boundaries cross nodes.
    """
    return np.asarray(den_sld) >= threshold
