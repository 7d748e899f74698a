"""Analytic design sensitivities via the nodal chain rule.

Every gradient is a weighted sum over nodes of ``chain[m, (i, j)]``, the
derivative of the smoothed Heaviside of the aggregate TDF at node ``m``
with respect to variable ``j`` of active component ``i``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fem import nodal_strain_energy


@dataclass
class GradientBundle:
    df0dx: np.ndarray
    dfdx: np.ndarray
    dgt0: int = 5
    scl: float = 1.0


def chain_weights(delta_h, ks_weights, tdf_gradients, nvars: int | None = None) -> np.ndarray:
    """``H'(phi_s) * w_i * dphi_i/dd_j`` for every node and variable.

    ``delta_h`` is (n,), ``ks_weights`` (n, m) and ``tdf_gradients`` (n, m*nvars)
    with component-major variable order. Rows may be any node subset as long
    as the three arrays agree.
    """
    dh = np.asarray(delta_h, dtype=float)
    w = np.asarray(ks_weights, dtype=float)
    g = np.asarray(tdf_gradients, dtype=float)
    n, m = w.shape
    if nvars is None:
        nvars = g.shape[1] // max(m, 1)
    if dh.shape != (n,) or g.shape != (n, m * nvars):
        raise ValueError("inconsistent shapes for chain weights")
    scale = dh[:, None] * w
    return (g.reshape(n, m, nvars) * scale[:, :, None]).reshape(n, m * nvars)


def compliance_gradient(engy_nod, nodal_e, chain, scl: float = 1.0) -> np.ndarray:
    """``-sum_m E_m * engy_m * chain[m, :] / scl``.

    ``engy_nod`` holds unit-modulus nodal energies (element ``u^T ke u`` split
    evenly to nodes); ``nodal_e`` is the modulus, scalar or per node.
    """
    e = np.asarray(engy_nod, dtype=float) * nodal_e
    return -(e @ np.asarray(chain)) / scl


def volume_gradient(nodal_weights, chain, domain_volume: float) -> np.ndarray:
    return (np.asarray(nodal_weights, dtype=float) / domain_volume) @ np.asarray(chain)


def output_gradient(U, Uadj, ke, mesh, nodal_e, chain, scl: float = 1.0, rows=None) -> np.ndarray:
    """Gradient of ``Fout . U`` using the adjoint field ``Uadj``."""
    engy = nodal_strain_energy(U, ke, mesh, 1.0, V=Uadj)
    if rows is not None:
        engy = engy[rows]
    return compliance_gradient(engy, nodal_e, chain, scl)


def round_significant(values, dgt0: int):
    """Round each value to ``dgt0`` significant decimal digits."""
    if int(dgt0) != dgt0 or dgt0 < 1:
        raise ValueError(f"dgt0 must be a positive integer, got {dgt0}")
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    nz = v != 0
    mag = np.floor(np.log10(np.abs(v[nz])))
    scale = 10.0 ** (int(dgt0) - 1 - mag)
    out[nz] = np.round(v[nz] * scale) / scale
    return out if out.ndim else float(out)


@dataclass
class FdReport:
    analytic_obj: np.ndarray
    fd_obj: np.ndarray
    analytic_vol: np.ndarray
    fd_vol: np.ndarray
    floor: float = 1e-10

    @staticmethod
    def _rel(a, b, floor):
        diff = np.abs(a - b)
        scale = np.maximum(np.abs(a), np.abs(b))
        return np.where(scale < floor, diff, diff / np.maximum(scale, floor))

    @property
    def rel_obj(self):
        return self._rel(self.analytic_obj, self.fd_obj, self.floor)

    @property
    def rel_vol(self):
        return self._rel(self.analytic_vol, self.fd_vol, self.floor)

    @property
    def max_rel_obj(self) -> float:
        return float(self.rel_obj.max(initial=0.0))

    @property
    def max_rel_vol(self) -> float:
        return float(self.rel_vol.max(initial=0.0))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "analytic_obj", "fd_obj", "rel_err_obj",
                        "analytic_vol", "fd_vol", "rel_err_vol"])
            cols = (self.analytic_obj, self.fd_obj, self.rel_obj,
                    self.analytic_vol, self.fd_vol, self.rel_vol)
            for k in range(self.analytic_obj.size):
                w.writerow([k] + [repr(float(a[k])) for a in cols])
        return path


def _tdf_ld(kind, prm, coords, p):
    """Component TDF values in extended precision (value only)."""
    ld = np.longdouble
    if kind == "cuboid3d":
        x0, y0, z0, l1, l2, l3, a, b, g = prm
        ca, sa, cb, sb, cg, sg = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(g), np.sin(g)
        dx, dy, dz = coords[:, 0] - x0, coords[:, 1] - y0, coords[:, 2] - z0
        xl = cb * cg * dx + cb * sg * dy - sb * dz
        yl = (sa * sb * cg - ca * sg) * dx + (sa * sb * sg + ca * cg) * dy + sa * cb * dz
        zl = (ca * sb * cg + sa * sg) * dx + (ca * sb * sg - sa * cg) * dy + ca * cb * dz
        w = (xl / l1) ** p + (yl / l2) ** p + (zl / l3) ** p
    else:
        x0, y0, length, t1, t2, th = prm
        c, s = np.cos(th), np.sin(th)
        dx, dy = coords[:, 0] - x0, coords[:, 1] - y0
        xl = c * dx + s * dy
        yl = -s * dx + c * dy
        width = (t1 + t2) / 2 + (t2 - t1) / (2 * length) * xl
        width = np.maximum(width, ld(1e-6) * (t1 + t2))
        w = (xl / length) ** p + (yl / width) ** p
    return 1 - w ** (ld(1) / p)


def _forward_ld(setup, params, members):
    """Extended-precision design -> (nodal H, element densities of ``members``)."""
    ld = np.longdouble
    mesh, hp, hs = setup.mesh, setup.hp, setup.hs
    coords = mesh.node_coords.astype(ld)
    cols = [_tdf_ld(setup.kind, params[i], coords, hp.p) for i in range(params.shape[0])]
    cols += [setup.nd_cols[:, k].astype(ld) for k in range(setup.nd_cols.shape[1])]
    cols = np.stack(cols, axis=1)
    lam, eps, a = ld(hp.lam), ld(hs.epsilon), ld(hs.alpha)

    def dens(c):
        top = c.max(axis=1)
        phi = top + np.log(np.exp(lam * (c - top[:, None])).sum(axis=1)) / lam
        ramp = 3 * (1 - a) / 4 * (phi / eps - phi ** 3 / (3 * eps ** 3)) + (1 + a) / 2
        h = np.where(phi > eps, ld(1), np.where(phi < -eps, a, ramp))
        return h, h[mesh.elem_nodes].mean(axis=1)

    h_all, _ = dens(cols)
    _, rho = dens(cols[:, members])
    return h_all, rho


def fd_validate(setup, params, delta: float = 1e-8, floor: float = 1e-10, variables=None) -> FdReport:
    """Central differences of the scaled objective and the volume constraint.

    The active set (all components), the path members, the retained DOFs and
    the elements entering the stiffness matrix are frozen at the base design so both sides differentiate the same smooth
    function; gradients are compared before rounding. Densities at the
    perturbed designs are evaluated in extended precision, and the objective
    difference uses the exact identity
    ``f+ - f- = lam+^T (K- - K+) U-`` (``lam`` the adjoint of the output
    vector), so solver round-off does not swamp the small step.
    """
    from .driver import analyze
    from .fem import assemble, element_energy, solve

    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    prob, mesh = setup.problem, setup.mesh
    params = np.array(params, dtype=float)
    base = analyze(setup, params, prune=False, rounding=False)
    n_all = params.shape[0] + setup.nd_cols.shape[1]
    members = base.path.path if base.path.exists else np.arange(n_all)
    out = setup.F if setup.Fout is None else setup.Fout
    rhs = np.column_stack([setup.F, out])
    flat = params.ravel().astype(np.longdouble)
    idx = np.arange(flat.size) if variables is None else np.asarray(variables)
    d = np.longdouble(delta)
    fd_obj = np.empty(idx.size)
    fd_vol = np.empty(idx.size)
    for n, k in enumerate(idx):
        sides = []
        for sgn in (1, -1):
            x = flat.copy()
            x[k] += sgn * d
            h, rho = _forward_ld(setup, x.reshape(params.shape), members)
            rho_fe = rho.astype(float)
            if base.fe_mask is not None:
                rho_fe = np.where(base.fe_mask, rho_fe, 0.0)
            K = assemble(mesh, rho_fe, prob.E, setup.ke, setup.F, setup.free,
                         setup.springs, setup.diag_shift)
            sol = solve(K, base.retained, rhs, method=setup.solver, mesh=mesh)
            sides.append((h, rho, sol))
        (h_p, rho_p, sol_p), (h_m, rho_m, sol_m) = sides
        drho = (rho_p - rho_m).astype(float)
        if base.fe_mask is not None:
            drho[~base.fe_mask] = 0.0
        # adjoint of the output at d+, state at d-
        df = -prob.E * np.dot(drho, element_energy(sol_p[:, 1], setup.ke, mesh, sol_m[:, 0]))
        fd_obj[n] = df / (2 * delta) / prob.scl
        fd_vol[n] = float(np.dot(setup.W, h_p - h_m) / (2 * d) / mesh.domain_volume)
    return FdReport(base.df0dx[idx], fd_obj, base.dfdx[idx], fd_vol, floor)
