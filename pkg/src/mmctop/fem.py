"""Structured-grid linear elasticity: mesh, element matrices, assembly, solve.

Numbering: elements and nodes start at the left-bottom(-front) corner and run
along x, then y, then layer by layer along z. Node ``(i, j, k)`` has index
``i + j*(nelx+1) + k*(nelx+1)*(nely+1)`` and DOFs ``dim*node + {0, 1, 2}``.

Local element node order (hex8) is counterclockwise on the bottom face, then
the top face::

    (0,0,0) (1,0,0) (1,1,0) (0,1,0) (0,0,1) (1,0,1) (1,1,1) (0,1,1)

and for quad4 the bottom face alone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from sksparse.cholmod import cholesky as _cholmod
except ImportError:  # SuperLU fallback
    _cholmod = None

log = logging.getLogger(__name__)

_HEX_CORNERS = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]
)
_QUAD_CORNERS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])

DENSE_LIMIT = 5000


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Mesh:
    nelx: int
    nely: int
    nelz: int
    DL: float
    DW: float
    DH: float

    @property
    def dim(self) -> int:
        return 2 if self.nelz == 0 else 3

    @property
    def n_ele(self) -> int:
        return self.nelx * self.nely * max(self.nelz, 1)

    @property
    def n_nodfc(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def n_nod(self) -> int:
        return self.n_nodfc * (self.nelz + 1)

    @property
    def n_dof(self) -> int:
        return self.dim * self.n_nod

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nelx, self.nely) if self.dim == 2 else (self.nelx, self.nely, self.nelz)

    @property
    def elem_size(self) -> tuple[float, ...]:
        if self.dim == 2:
            return (self.DL / self.nelx, self.DW / self.nely)
        return (self.DL / self.nelx, self.DW / self.nely, self.DH / self.nelz)

    @property
    def min_size(self) -> float:
        return min(self.elem_size)

    @property
    def elem_volume(self) -> float:
        return float(np.prod(self.elem_size))

    @property
    def domain_volume(self) -> float:
        return self.DL * self.DW * (self.DH if self.dim == 3 else 1.0)

    def node_id(self, i, j, k=0):
        return np.asarray(i) + np.asarray(j) * (self.nelx + 1) + np.asarray(k) * self.n_nodfc

    def elem_id(self, i, j, k=0):
        return np.asarray(i) + np.asarray(j) * self.nelx + np.asarray(k) * self.nelx * self.nely

    @cached_property
    def elem_nodes(self) -> np.ndarray:
        if self.dim == 2:
            j, i = np.meshgrid(np.arange(self.nely), np.arange(self.nelx), indexing="ij")
            base = self.node_id(i.ravel(), j.ravel())
            offs = self.node_id(_QUAD_CORNERS[:, 0], _QUAD_CORNERS[:, 1])
        else:
            k, j, i = np.meshgrid(
                np.arange(self.nelz), np.arange(self.nely), np.arange(self.nelx), indexing="ij"
            )
            base = self.node_id(i.ravel(), j.ravel(), k.ravel())
            offs = self.node_id(*_HEX_CORNERS.T)
        return (base[:, None] + offs[None, :]).astype(np.int64)

    @cached_property
    def node_coords(self) -> np.ndarray:
        xs = np.linspace(0.0, self.DL, self.nelx + 1)
        ys = np.linspace(0.0, self.DW, self.nely + 1)
        if self.dim == 2:
            y, x = np.meshgrid(ys, xs, indexing="ij")
            return np.ascontiguousarray(np.column_stack([x.ravel(), y.ravel()]))
        zs = np.linspace(0.0, self.DH, self.nelz + 1)
        z, y, x = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.ascontiguousarray(np.column_stack([x.ravel(), y.ravel(), z.ravel()]))

    @cached_property
    def edof(self) -> np.ndarray:
        d = self.dim
        return (d * self.elem_nodes[:, :, None] + np.arange(d)[None, None, :]).reshape(self.n_ele, -1)

    @cached_property
    def node_elems(self) -> sp.csr_matrix:
        """Node-by-element incidence (boolean CSR)."""
        npe = self.elem_nodes.shape[1]
        rows = self.elem_nodes.ravel()
        cols = np.repeat(np.arange(self.n_ele), npe)
        return sp.csr_matrix((np.ones(rows.size, dtype=bool), (rows, cols)),
                             shape=(self.n_nod, self.n_ele))

    def elems_of_nodes(self, nodes) -> np.ndarray:
        """Sorted indices of all elements containing any of ``nodes``."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        return np.unique(self.node_elems[nodes].indices)

    def dofs_of_nodes(self, nodes, components=None) -> np.ndarray:
        nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
        comps = range(self.dim) if components is None else components
        return np.sort(np.concatenate([self.dim * nodes + c for c in comps]))

    @cached_property
    def _pattern(self):
        # lower-triangle sparsity pattern and the scatter map element entries -> nnz slots
        d = self.edof.shape[1]
        il, jl = np.tril_indices(d)
        r = self.edof[:, il]
        c = self.edof[:, jl]
        rows = np.maximum(r, c).ravel()
        cols = np.minimum(r, c).ravel()
        key = rows * self.n_dof + cols
        uniq, scatter = np.unique(key, return_inverse=True)
        return il, jl, uniq // self.n_dof, uniq % self.n_dof, scatter.astype(np.int64)


def build_mesh(nelx: int, nely: int, nelz: int, DL: float, DW: float, DH: float = 0.0) -> Mesh:
    """Uniform grid of ``nelx*nely*nelz`` hex8 elements (``nelz=0`` for quad4)."""
    for name, v in (("nelx", nelx), ("nely", nely)):
        if int(v) != v or v <= 0:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    if int(nelz) != nelz or nelz < 0:
        raise ValueError(f"nelz must be a non-negative integer, got {nelz}")
    if DL <= 0 or DW <= 0 or (nelz > 0 and DH <= 0):
        raise ValueError(f"domain dimensions must be positive, got {(DL, DW, DH)}")
    return Mesh(int(nelx), int(nely), int(nelz), float(DL), float(DW), float(DH) if nelz else 0.0)


def _isotropic_3d(E, nu):
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[3:, 3:] = mu * np.eye(3)
    return D


_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def hex8_stiffness(E: float, nu: float, hx: float, hy: float, hz: float) -> np.ndarray:
    """24x24 stiffness of a rectangular hex8, 2x2x2 Gauss, DOFs ordered (ux, uy, uz) per node."""
    if E <= 0 or not -1 < nu < 0.5:
        raise ValueError(f"need E > 0 and -1 < nu < 0.5, got E={E}, nu={nu}")
    D = _isotropic_3d(E, nu)
    sgn = 2 * _HEX_CORNERS - 1
    h = np.array([hx, hy, hz])
    ke = np.zeros((24, 24))
    for xi in _GAUSS:
        for eta in _GAUSS:
            for zeta in _GAUSS:
                q = np.array([xi, eta, zeta])
                # dN/dxi_k = s_k/8 * prod_{l != k} (1 + s_l q_l)
                f = 1 + sgn * q
                dN = np.empty((8, 3))
                for k in range(3):
                    others = [m for m in range(3) if m != k]
                    dN[:, k] = sgn[:, k] / 8.0 * f[:, others[0]] * f[:, others[1]]
                dNdx = dN * (2.0 / h)
                B = np.zeros((6, 24))
                B[0, 0::3] = dNdx[:, 0]
                B[1, 1::3] = dNdx[:, 1]
                B[2, 2::3] = dNdx[:, 2]
                B[3, 0::3] = dNdx[:, 1]
                B[3, 1::3] = dNdx[:, 0]
                B[4, 1::3] = dNdx[:, 2]
                B[4, 2::3] = dNdx[:, 1]
                B[5, 0::3] = dNdx[:, 2]
                B[5, 2::3] = dNdx[:, 0]
                ke += B.T @ D @ B * (hx * hy * hz / 8.0)
    return 0.5 * (ke + ke.T)


def quad4_stiffness(E: float, nu: float, thickness: float, hx: float, hy: float) -> np.ndarray:
    """8x8 plane-stress stiffness of a rectangular quad4, 2x2 Gauss."""
    if E <= 0 or not -1 < nu < 0.5:
        raise ValueError(f"need E > 0 and -1 < nu < 0.5, got E={E}, nu={nu}")
    D = E / (1 - nu ** 2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
    sgn = 2 * _QUAD_CORNERS - 1
    h = np.array([hx, hy])
    ke = np.zeros((8, 8))
    for xi in _GAUSS:
        for eta in _GAUSS:
            f = 1 + sgn * np.array([xi, eta])
            dN = np.column_stack([sgn[:, 0] / 4 * f[:, 1], sgn[:, 1] / 4 * f[:, 0]])
            dNdx = dN * (2.0 / h)
            B = np.zeros((3, 8))
            B[0, 0::2] = dNdx[:, 0]
            B[1, 1::2] = dNdx[:, 1]
            B[2, 0::2] = dNdx[:, 1]
            B[2, 1::2] = dNdx[:, 0]
            ke += B.T @ D @ B * (thickness * hx * hy / 4.0)
    return 0.5 * (ke + ke.T)


def element_stiffness(mesh: Mesh, E: float = 1.0, nu: float = 0.3, thickness: float = 1.0) -> np.ndarray:
    if mesh.dim == 2:
        return quad4_stiffness(E, nu, thickness, *mesh.elem_size)
    return hex8_stiffness(E, nu, *mesh.elem_size)


@dataclass
class LinearSystem:
    K: sp.csr_matrix
    F: np.ndarray
    free_dofs: np.ndarray
    diag_shift: float = 0.0
    springs: dict = field(default_factory=dict)


def solid_diag_max(mesh: Mesh, E: float, ke: np.ndarray) -> float:
    """Largest diagonal entry of the fully solid global stiffness."""
    diag = np.bincount(mesh.edof.ravel(), weights=np.tile(np.diag(ke), mesh.n_ele) * E,
                       minlength=mesh.n_dof)
    return float(diag.max())


def assemble(mesh: Mesh, densities, E: float, ke: np.ndarray, F=None, free_dofs=None,
             springs: dict | None = None, diag_shift: float | None = None,
             shift_factor: float = 1e-8) -> LinearSystem:
    """Global stiffness ``sum_e rho_e * E * ke`` (exactly symmetric).

    ``springs`` maps DOF -> extra diagonal stiffness. ``diag_shift`` defaults to
    ``shift_factor`` times the largest diagonal of the fully solid matrix, which
    keeps the shift independent of the design.
    """
    rho = np.asarray(densities, dtype=float)
    if rho.shape != (mesh.n_ele,):
        raise ValueError(f"densities have shape {rho.shape}, expected ({mesh.n_ele},)")
    il, jl, prow, pcol, scatter = mesh._pattern
    vals = (rho[:, None] * (E * ke[il, jl])[None, :]).ravel()
    data = np.bincount(scatter, weights=vals, minlength=prow.size)
    lower = sp.csr_matrix((data, (prow, pcol)), shape=(mesh.n_dof, mesh.n_dof))
    K = (lower + lower.T - sp.diags(lower.diagonal())).tocsr()
    springs = dict(springs or {})
    if springs:
        idx = np.fromiter(springs.keys(), dtype=np.int64)
        K = K + sp.csr_matrix((np.fromiter(springs.values(), dtype=float), (idx, idx)),
                              shape=K.shape)
    if diag_shift is None:
        diag_shift = shift_factor * solid_diag_max(mesh, E, ke)
    F = np.zeros(mesh.n_dof) if F is None else np.asarray(F, dtype=float)
    free = np.arange(mesh.n_dof) if free_dofs is None else np.asarray(free_dofs, dtype=np.int64)
    return LinearSystem(K=K.tocsr(), F=F, free_dofs=free, diag_shift=float(diag_shift), springs=springs)


def _rigid_modes(coords: np.ndarray) -> np.ndarray:
    n, d = coords.shape
    c = coords - coords.mean(axis=0)
    if d == 2:
        B = np.zeros((2 * n, 3))
        B[0::2, 0] = 1
        B[1::2, 1] = 1
        B[0::2, 2] = -c[:, 1]
        B[1::2, 2] = c[:, 0]
        return B
    B = np.zeros((3 * n, 6))
    for k in range(3):
        B[k::3, k] = 1
    B[0::3, 3], B[1::3, 3] = -c[:, 1], c[:, 0]
    B[1::3, 4], B[2::3, 4] = -c[:, 2], c[:, 1]
    B[0::3, 5], B[2::3, 5] = c[:, 2], -c[:, 0]
    return B


def solve(sys: LinearSystem, retained_dofs=None, rhs=None, method: str = "auto",
          rtol: float = 1e-8, mesh: Mesh | None = None) -> np.ndarray:
    """Solve ``(K + shift*I) U = F`` on ``retained_dofs``; zero elsewhere.

    ``rhs`` may be an (n_dof,) vector or an (n_dof, k) array; it defaults to
    ``sys.F``. ``method`` is one of ``auto``, ``direct``, ``dense``, ``cg``
    (Jacobi-preconditioned CG) or ``amg`` (CG preconditioned with smoothed
    aggregation; needs ``mesh`` for the rigid-body modes and pyamg installed).
    ``auto`` picks ``dense`` below 5000 DOFs and ``direct`` otherwise.
    ``direct`` is a sparse Cholesky (CHOLMOD via scikit-sparse) when
    available, else SuperLU.
    """
    r = sys.free_dofs if retained_dofs is None else np.asarray(retained_dofs, dtype=np.int64)
    b_full = sys.F if rhs is None else np.asarray(rhs, dtype=float)
    single = b_full.ndim == 1
    B = b_full[:, None] if single else b_full
    U = np.zeros((sys.K.shape[0], B.shape[1]))
    if r.size == 0:
        return U[:, 0] if single else U
    A = sys.K[r][:, r]
    if sys.diag_shift:
        A = A + sys.diag_shift * sp.identity(r.size, format="csr")
    A = A.tocsc()
    b = B[r]
    if method == "auto":
        method = "dense" if r.size < DENSE_LIMIT else "direct"
    if method == "dense":
        x = scipy.linalg.solve(A.toarray(), b, assume_a="sym")
    elif method == "direct":
        if _cholmod is not None:
            x = _cholmod(A)(b)
        else:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
            x = lu.solve(b)
    elif method in ("cg", "amg"):
        x = np.empty_like(b)
        if method == "cg":
            dinv = 1.0 / A.diagonal()
            M = spla.LinearOperator(A.shape, matvec=lambda v: dinv * v)
        else:
            import pyamg

            if mesh is None:
                raise ValueError("amg solve needs the mesh for near-nullspace modes")
            modes = _rigid_modes(mesh.node_coords)[r]
            M = pyamg.smoothed_aggregation_solver(A.tocsr(), B=modes).aspreconditioner(cycle="V")
        for k in range(b.shape[1]):
            x[:, k], info = spla.cg(A, b[:, k], rtol=rtol, atol=0.0, maxiter=10 * r.size, M=M)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    x = np.asarray(x).reshape(b.shape)
    res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
    limit = max(rtol, 1e-8) * (10.0 if method in ("cg", "amg") else 1.0)
    if not np.all(np.isfinite(x)) or res > limit:
        raise SolverError(f"{method} solve failed on {r.size} DOFs", res)
    U[r] = x
    return U[:, 0] if single else U


def compliance(F, U) -> float:
    return float(np.dot(F, U))


def element_energy(U, ke: np.ndarray, mesh: Mesh, V=None) -> np.ndarray:
    """Per-element ``u_e^T ke v_e`` (``v = u`` when ``V`` is omitted)."""
    ue = np.asarray(U)[mesh.edof]
    ve = ue if V is None else np.asarray(V)[mesh.edof]
    return np.einsum("ij,jk,ik->i", ue, ke, ve)


def nodal_strain_energy(U, ke: np.ndarray, mesh: Mesh, E: float = 1.0, V=None,
                        mask=None) -> np.ndarray:
    """Element energies ``E * u_e^T ke v_e`` split equally among each element's nodes.

    Elements where ``mask`` is False contribute nothing.
    """
    energy = E * element_energy(U, ke, mesh, V)
    if mask is not None:
        energy = np.where(mask, energy, 0.0)
    npe = mesh.elem_nodes.shape[1]
    return np.bincount(mesh.elem_nodes.ravel(), weights=np.repeat(energy / npe, npe),
                       minlength=mesh.n_nod)


def export_matrix_market(sys: LinearSystem, path) -> Path:
    import scipy.io

    path = Path(path)
    scipy.io.mmwrite(str(path), sys.K, symmetry="symmetric")
    return path
