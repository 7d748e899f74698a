"""Built-in benchmark problems and their initial component lattices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .fem import Mesh, build_mesh
from .geometry import (Component3D, Component2D, component_from_record, component_to_record)

OBJECTIVES = ("compliance", "output_displacement")


@dataclass(frozen=True)
class LatticeSpec:
    """Regular grid of component centers at ``xInt, 3*xInt, ...`` along each axis.

    ``base`` holds the size and angle values shared by every component;
    ``signs`` maps an angle name to a sign pattern cycled over the component
    index. Sites are visited x outermost, then z, then y, and each site emits
    ``replicas`` consecutive components.
    """

    kind: str
    domain: tuple
    spacing: tuple
    base: tuple
    replicas: int = 1
    signs: dict = field(default_factory=dict)


def _axis(interval: float, length: float) -> np.ndarray:
    return np.arange(interval, length + 1e-9 * max(length, 1.0), 2.0 * interval)


def lattice_init(spec: LatticeSpec):
    if spec.replicas < 1:
        raise ValueError("replicas must be >= 1")
    axes = [_axis(i, d) for i, d in zip(spec.spacing, spec.domain)]
    if any(a.size == 0 for a in axes):
        raise ValueError("empty lattice: spacing exceeds the domain")
    if spec.kind == "cuboid3d":
        xs, ys, zs = axes
        sites = [(x, y, z) for x, z, y in product(xs, zs, ys)]
        angle_names, cls = ("alpha", "beta", "gamma"), Component3D
    elif spec.kind == "trapezoid2d":
        xs, ys = axes
        sites = list(product(xs, ys))
        angle_names, cls = ("theta",), Component2D
    else:
        raise ValueError(f"unknown component kind {spec.kind!r}")
    na = len(angle_names)
    sizes, angles = list(spec.base[:-na]), list(spec.base[-na:])
    for name in spec.signs:
        if name not in angle_names:
            raise ValueError(f"sign pattern for unknown angle {name!r}")
    out = []
    for site in sites:
        for _ in range(spec.replicas):
            k = len(out)
            ang = []
            for name, val in zip(angle_names, angles):
                pat = spec.signs.get(name, (1,))
                ang.append(pat[k % len(pat)] * val)
            out.append(cls(*site, *sizes, *ang))
    return out


@dataclass(frozen=True)
class ProblemDefinition:
    name: str
    domain: tuple
    mesh_shape: tuple
    volfrac: float
    fixed_dofs: np.ndarray
    loads: np.ndarray
    loading_elements: np.ndarray
    fixed_elements: np.ndarray
    components: tuple
    non_design_nodes: tuple = ()
    springs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    dummy_load: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    objective: str = "compliance"
    E: float = 1.0
    nu: float = 0.3
    thickness: float = 1.0
    epsilon: float = 0.25
    alpha: float = 1e-3
    lam: float = 100.0
    p: int = 6
    scl: float = 1.0
    dgt0: int = 5
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if not 0 < self.volfrac <= 1:
            raise ValueError("volfrac must lie in (0, 1]")
        if len(self.components) == 0:
            raise ValueError("problem has no components")
        if self.objective == "output_displacement" and len(self.dummy_load) == 0:
            raise ValueError("output_displacement needs a dummy load")

    @property
    def dim(self) -> int:
        return len(self.mesh_shape)

    @property
    def mesh(self) -> Mesh:
        nel = tuple(self.mesh_shape) + (0,) * (3 - self.dim)
        dom = tuple(self.domain) + (0.0,) * (3 - self.dim)
        return build_mesh(*nel, *dom)

    def load_vector(self, n_dof: int) -> np.ndarray:
        return _vector(self.loads, n_dof)

    def dummy_vector(self, n_dof: int) -> np.ndarray:
        return _vector(self.dummy_load, n_dof)

    def free_dofs(self, n_dof: int) -> np.ndarray:
        return np.setdiff1d(np.arange(n_dof), self.fixed_dofs)

    def non_design_columns(self, n_nod: int) -> np.ndarray:
        cols = -np.ones((n_nod, len(self.non_design_nodes)))
        for i, nodes in enumerate(self.non_design_nodes):
            cols[np.asarray(nodes, dtype=np.int64), i] = 1.0
        return cols

    def with_overrides(self, **kw) -> "ProblemDefinition":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "domain": list(self.domain),
            "mesh": list(self.mesh_shape),
            "volfrac": self.volfrac,
            "objective": self.objective,
            "E": self.E, "nu": self.nu, "thickness": self.thickness,
            "epsilon": self.epsilon, "alpha": self.alpha, "lam": self.lam, "p": self.p,
            "scl": self.scl, "dgt0": self.dgt0,
            "fixedDofs": [int(v) for v in self.fixed_dofs],
            "loads": [[int(d), float(v)] for d, v in self.loads],
            "loadingElements": [int(v) for v in self.loading_elements],
            "fixedElements": [int(v) for v in self.fixed_elements],
            "nonDesignNodes": [[int(v) for v in nodes] for nodes in self.non_design_nodes],
            "springs": [[int(d), float(v)] for d, v in self.springs],
            "dummyLoad": [[int(d), float(v)] for d, v in self.dummy_load],
            "bounds": {k: [float(a), float(b)] for k, (a, b) in self.bounds.items()},
            "components": [component_to_record(c) for c in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemDefinition":
        allowed = {"name", "domain", "mesh", "volfrac", "objective", "E", "nu", "thickness",
                   "epsilon", "alpha", "lam", "p", "scl", "dgt0", "fixedDofs", "loads",
                   "loadingElements", "fixedElements", "nonDesignNodes", "springs", "dummyLoad",
                   "bounds", "components"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ValueError(f"unknown problem key {unknown[0]!r}")
        required = {"domain", "mesh", "volfrac", "fixedDofs", "loads", "loadingElements",
                    "fixedElements", "components"}
        missing = sorted(required - set(d))
        if missing:
            raise ValueError(f"problem is missing key {missing[0]!r}")

        def pairs(key):
            return np.asarray(d.get(key, []), dtype=float).reshape(-1, 2)

        kw = {k: d[k] for k in ("E", "nu", "thickness", "epsilon", "alpha", "lam", "scl",
                                "objective") if k in d}
        if "p" in d:
            kw["p"] = int(d["p"])
        if "dgt0" in d:
            kw["dgt0"] = int(d["dgt0"])
        prob = cls(
            name=d.get("name", "custom"),
            domain=tuple(float(v) for v in d["domain"]),
            mesh_shape=tuple(int(v) for v in d["mesh"]),
            volfrac=float(d["volfrac"]),
            fixed_dofs=np.asarray(d["fixedDofs"], dtype=np.int64),
            loads=pairs("loads"),
            loading_elements=np.asarray(d["loadingElements"], dtype=np.int64),
            fixed_elements=np.asarray(d["fixedElements"], dtype=np.int64),
            components=tuple(component_from_record(r) for r in d["components"]),
            non_design_nodes=tuple(np.asarray(n, dtype=np.int64) for n in d.get("nonDesignNodes", [])),
            springs=pairs("springs"),
            dummy_load=pairs("dummyLoad"),
            bounds={k: tuple(v) for k, v in d.get("bounds", {}).items()},
            **kw,
        )
        validate_problem(prob)
        return prob


def _vector(entries, n: int) -> np.ndarray:
    v = np.zeros(n)
    for dof, val in np.asarray(entries, dtype=float).reshape(-1, 2):
        v[int(dof)] += val
    return v


def validate_problem(prob: ProblemDefinition) -> None:
    if len(prob.domain) != prob.dim:
        raise ValueError("domain and mesh dimensions differ")
    mesh = prob.mesh
    kinds = {c.kind for c in prob.components}
    expected = "cuboid3d" if prob.dim == 3 else "trapezoid2d"
    if kinds != {expected}:
        raise ValueError(f"{prob.dim}D problems need {expected} components")
    for name, arr, hi in (("fixedDofs", prob.fixed_dofs, mesh.n_dof),
                          ("loadingElements", prob.loading_elements, mesh.n_ele),
                          ("fixedElements", prob.fixed_elements, mesh.n_ele)):
        if arr.size and (arr.min() < 0 or arr.max() >= hi):
            raise ValueError(f"{name} out of range")
    for key, arr in (("loads", prob.loads), ("springs", prob.springs), ("dummyLoad", prob.dummy_load)):
        if arr.size and (arr[:, 0].min() < 0 or arr[:, 0].max() >= mesh.n_dof):
            raise ValueError(f"{key} DOF out of range")
    if prob.loading_elements.size == 0 or prob.fixed_elements.size == 0:
        raise ValueError("need at least one loading and one fixed element")


# -- helpers for the builtins ---------------------------------------------------

def _scaled(shape, mesh_scale: int):
    if int(mesh_scale) != mesh_scale or mesh_scale < 1:
        raise ValueError(f"meshScale must be a positive integer, got {mesh_scale}")
    out = []
    for n in shape:
        if n % mesh_scale:
            raise ValueError(f"meshScale {mesh_scale} does not divide element count {n}")
        out.append(n // mesh_scale)
    return tuple(out)


def _select(mesh: Mesh, pred) -> np.ndarray:
    c = mesh.node_coords
    tol = 1e-9 * max(mesh.DL, mesh.DW, mesh.DH)
    cols = [c[:, k] for k in range(c.shape[1])]
    return np.flatnonzero(pred(*cols, tol))


def _nearest(mesh: Mesh, point) -> int:
    d = np.linalg.norm(mesh.node_coords - np.asarray(point, dtype=float), axis=1)
    return int(np.argmin(d))


def _dofs(mesh: Mesh, nodes, comps=None) -> np.ndarray:
    return mesh.dofs_of_nodes(np.atleast_1d(nodes), comps)


def _loads(dofs, values) -> np.ndarray:
    dofs = np.atleast_1d(dofs)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    return np.column_stack([dofs, values]).astype(float)


def _cantilever3d(shape):
    DL, DW, DH = 64.0, 8.0, 32.0
    mesh = build_mesh(*shape, DL, DW, DH)
    fixed_nodes = _select(mesh, lambda x, y, z, t: x < t)
    load_nodes = _select(mesh, lambda x, y, z, t: (x > DL - t) & (z < t))
    comps = lattice_init(LatticeSpec("cuboid3d", (DL, DW, DH), (8.0, 4.0, 8.0),
                                     (12.0, 2.5, 2.0, 0.0, math.atan(1.0), 0.0),
                                     replicas=2, signs={"beta": (1, -1)}))
    # a cuboid is unchanged by a half turn about any body axis, so half-turn
    # angle ranges lose no shapes and halve the smallest MMA angle step
    half = (-math.pi / 2, math.pi / 2)
    return dict(domain=(DL, DW, DH), volfrac=0.3, epsilon=0.25,
                bounds={"alpha": half, "beta": half, "gamma": half},
                fixed_dofs=_dofs(mesh, fixed_nodes),
                loads=_loads(_dofs(mesh, load_nodes, [2]), -1.0 / load_nodes.size),
                loading_elements=mesh.elems_of_nodes(load_nodes),
                fixed_elements=mesh.elems_of_nodes(fixed_nodes),
                components=tuple(comps))


def _mbb3d(shape):
    DL, DW, DH = 3.0, 0.5, 1.0
    mesh = build_mesh(*shape, DL, DW, DH)
    sym_x = _select(mesh, lambda x, y, z, t: x < t)
    sym_y = _select(mesh, lambda x, y, z, t: y > DW - t)
    support = np.array([_nearest(mesh, (DL, 0.0, 0.0))])
    fixed = np.unique(np.concatenate([_dofs(mesh, sym_x, [0]), _dofs(mesh, sym_y, [1]),
                                      _dofs(mesh, support)]))
    load_node = _nearest(mesh, (0.0, DW, DH))
    comps = lattice_init(LatticeSpec(
        "cuboid3d", (DL, DW, DH), (0.5, 0.25, 0.25),
        (0.7, 0.08, 0.08, math.atan(0.5), math.atan(0.5), math.atan(-0.5)),
        replicas=4, signs={"beta": (1, -1, 1, -1), "gamma": (1, 1, -1, -1)}))
    return dict(domain=(DL, DW, DH), volfrac=0.25, epsilon=0.2, fixed_dofs=fixed,
                loads=_loads(_dofs(mesh, load_node, [2]), -0.25),
                loading_elements=mesh.elems_of_nodes([load_node]),
                fixed_elements=mesh.elems_of_nodes(support),
                components=tuple(comps))


def _torsion3d(shape):
    DL, DW, DH = 12.0, 4.0, 4.0
    mesh = build_mesh(*shape, DL, DW, DH)
    fixed_nodes = _select(mesh, lambda x, y, z, t: x < t)
    corners = [_nearest(mesh, p) for p in ((DL, 0, 0), (DL, DW, 0), (DL, 0, DH), (DL, DW, DH))]
    dofs = _dofs(mesh, corners, [1, 2])
    values = [1, -1, 1, 1, -1, -1, -1, 1]
    thick = 0.25
    nd_left = _select(mesh, lambda x, y, z, t: x <= thick + t)
    nd_right = _select(mesh, lambda x, y, z, t: x >= DL - thick - t)
    # sign per block of four y-neighbours
    blocks = (1, -1, 1, -1, -1, 1, -1, 1)
    beta_signs = tuple(b for b in blocks for _ in range(4))
    tem2 = (1, -1, 1, -1)
    gamma_signs = tem2 * 4 + tuple(-v for v in tem2) * 4
    comps = lattice_init(LatticeSpec(
        "cuboid3d", (DL, DW, DH), (1.0, 0.5, 0.5),
        (1.2, 0.2, 0.2, 0.0, math.asin(0.4), math.asin(-0.4)),
        signs={"beta": beta_signs, "gamma": gamma_signs}))
    return dict(domain=(DL, DW, DH), volfrac=0.15, epsilon=0.5, scl=1000.0,
                fixed_dofs=_dofs(mesh, fixed_nodes),
                loads=_loads(dofs, values),
                loading_elements=mesh.elems_of_nodes(corners),
                fixed_elements=mesh.elems_of_nodes(fixed_nodes),
                non_design_nodes=(nd_left, nd_right),
                components=tuple(comps))


def _mechanism3d(shape, lattice: LatticeSpec):
    DL, DW, DH = 10.0, 1.0, 5.0
    mesh = build_mesh(*shape, DL, DW, DH)
    sym_y = _select(mesh, lambda x, y, z, t: y > DW - t)
    sym_z = _select(mesh, lambda x, y, z, t: z > DH - t)
    support = _select(mesh, lambda x, y, z, t: (x < t) & (z <= 0.2 * DH + t))
    fixed = np.unique(np.concatenate([_dofs(mesh, sym_y, [1]), _dofs(mesh, sym_z, [2]),
                                      _dofs(mesh, support)]))
    n_in = _nearest(mesh, (0.0, DW, DH))
    n_out = _nearest(mesh, (DL, DW, DH))
    d_in = _dofs(mesh, n_in, [0])[0]
    d_out = _dofs(mesh, n_out, [0])[0]
    k = 0.1 / 4
    return dict(domain=(DL, DW, DH), volfrac=0.2, epsilon=0.2, objective="output_displacement",
                fixed_dofs=fixed, loads=_loads(d_in, 0.25),
                springs=_loads([d_in, d_out], k), dummy_load=_loads(d_out, 1.0),
                loading_elements=mesh.elems_of_nodes([n_in, n_out]),
                fixed_elements=mesh.elems_of_nodes(support),
                components=tuple(lattice_init(lattice)))


def _mechanism3d_v1(shape):
    lat = LatticeSpec("cuboid3d", (10.0, 1.0, 5.0), (5 / 3, 1.0, 5 / 4),
                      (2.0, 0.5, 0.25, 0.0, math.atan(0.75), 0.0),
                      replicas=2, signs={"beta": (1, -1)})
    return _mechanism3d(shape, lat)


def _mechanism3d_v2(shape):
    beta = (-1, -1, 1, 1, -1, -1, 1, 1, 1, 1, -1, -1, 1, 1, -1, -1)
    gamma = (1, -1, 1, -1, 1, -1, 1, -1, -1, 1, -1, 1, -1, 1, -1, 1)
    lat = LatticeSpec("cuboid3d", (10.0, 1.0, 5.0), (5 / 6, 1 / 4, 5 / 8),
                      (1.2, 0.2, 0.2, math.atan(2.5), math.atan(0.75), math.atan(0.3)),
                      signs={"beta": beta, "gamma": gamma})
    return _mechanism3d(shape, lat)


def _cantilever2d(shape):
    DL, DW = 2.0, 1.0
    mesh = build_mesh(*shape, 0, DL, DW)
    fixed_nodes = _select(mesh, lambda x, y, t: x < t)
    load_node = _nearest(mesh, (DL, DW / 2))
    comps = lattice_init(LatticeSpec("trapezoid2d", (DL, DW), (0.25, 0.25),
                                     (0.4, 0.05, 0.05, math.asin(0.7)),
                                     replicas=2, signs={"theta": (1, -1)}))
    return dict(domain=(DL, DW), volfrac=0.4, epsilon=0.2, alpha=1e-9,
                fixed_dofs=_dofs(mesh, fixed_nodes),
                loads=_loads(_dofs(mesh, load_node, [1]), -1.0),
                loading_elements=mesh.elems_of_nodes([load_node]),
                fixed_elements=mesh.elems_of_nodes(fixed_nodes),
                components=tuple(comps))


BUILTINS = {
    "cantilever3d": ((128, 16, 64), _cantilever3d),
    "mbb3d": ((60, 10, 20), _mbb3d),
    "torsion3d": ((96, 32, 32), _torsion3d),
    "mechanism3d_v1": ((200, 20, 100), _mechanism3d_v1),
    "mechanism3d_v2": ((200, 20, 100), _mechanism3d_v2),
    "cantilever2d": ((200, 100), _cantilever2d),
}


def builtin(name: str, mesh_scale: int = 1, mesh=None, **overrides) -> ProblemDefinition:
    """A benchmark problem, optionally on a coarser (``mesh_scale``) or explicit mesh."""
    try:
        default_shape, make = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILTINS)}") from None
    shape = tuple(int(v) for v in mesh) if mesh is not None else _scaled(default_shape, mesh_scale)
    if len(shape) != len(default_shape) or min(shape) < 1:
        raise ValueError(f"{name} needs a {len(default_shape)}D mesh with positive counts")
    fields_ = make(shape)
    prob = ProblemDefinition(name=name, mesh_shape=shape, **fields_)
    if "bounds" in overrides:
        overrides["bounds"] = {**prob.bounds, **overrides["bounds"]}
    if overrides:
        prob = replace(prob, **overrides)
    validate_problem(prob)
    return prob
