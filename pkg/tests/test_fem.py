import numpy as np
import pytest
import scipy.sparse as sp

from mmctop.fem import (SolverError, assemble, build_mesh, compliance, element_energy,
                        element_stiffness, export_matrix_market, hex8_stiffness,
                        nodal_strain_energy, quad4_stiffness, solve)


def _rigid_count(ke):
    ev = np.linalg.eigvalsh(ke)
    return int(np.sum(np.abs(ev) <= 1e-9 * ev.max())), int(np.sum(ev > 1e-9 * ev.max()))


def test_hex8_spectrum():
    ke = hex8_stiffness(1.0, 0.3, 1.0, 1.0, 1.0)
    assert np.allclose(ke, ke.T)
    assert _rigid_count(ke) == (6, 18)


def test_quad4_spectrum():
    ke = quad4_stiffness(1.0, 0.3, 1.0, 1.0, 1.0)
    assert np.allclose(ke, ke.T)
    assert _rigid_count(ke) == (3, 5)


def test_hex8_uniform_strain_energy():
    # u = eps * x gives energy (1/2) * eps^2 * C11 * V
    E, nu, eps = 1.0, 0.3, 1e-3
    ke = hex8_stiffness(E, nu, 2.0, 1.0, 0.5)
    corners = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float) * [2.0, 1.0, 0.5]
    u = np.zeros(24)
    u[0::3] = eps * corners[:, 0]
    c11 = E * (1 - nu) / ((1 + nu) * (1 - 2 * nu))
    assert 0.5 * u @ ke @ u == pytest.approx(0.5 * eps ** 2 * c11 * 1.0, rel=1e-12)


def test_quad4_uniform_strain_energy():
    E, nu, eps, t = 2.0, 0.25, 1e-3, 0.7
    ke = quad4_stiffness(E, nu, t, 1.5, 0.5)
    corners = np.array([[0, 0], [1.5, 0], [1.5, 0.5], [0, 0.5]])
    u = np.zeros(8)
    u[0::2] = eps * corners[:, 0]
    c11 = E / (1 - nu ** 2)
    assert 0.5 * u @ ke @ u == pytest.approx(0.5 * eps ** 2 * c11 * 1.5 * 0.5 * t, rel=1e-12)


def _bar(nel=(6, 2, 2), rho=None):
    mesh = build_mesh(*nel, 6.0, 2.0, 2.0)
    ke = element_stiffness(mesh)
    fixed_nodes = np.flatnonzero(mesh.node_coords[:, 0] == 0)
    free = np.setdiff1d(np.arange(mesh.n_dof), mesh.dofs_of_nodes(fixed_nodes))
    tip = np.flatnonzero(mesh.node_coords[:, 0] == 6.0)
    F = np.zeros(mesh.n_dof)
    F[mesh.dofs_of_nodes(tip, [2])] = -1.0 / tip.size
    rho = np.ones(mesh.n_ele) if rho is None else rho
    return mesh, ke, assemble(mesh, rho, 1.0, ke, F, free)


def test_assembly_symmetric_and_matches_element_loop(rng):
    mesh = build_mesh(2, 2, 1, 2.0, 2.0, 1.0)
    ke = element_stiffness(mesh)
    rho = rng.uniform(0.1, 1, mesh.n_ele)
    K = assemble(mesh, rho, 2.0, ke).K
    dense = np.zeros((mesh.n_dof, mesh.n_dof))
    for e in range(mesh.n_ele):
        d = mesh.edof[e]
        dense[np.ix_(d, d)] += 2.0 * rho[e] * ke
    assert abs(K - K.T).max() == 0
    assert np.allclose(K.toarray(), dense, atol=1e-14)


def test_solvers_agree():
    mesh, ke, sys_ = _bar()
    ref = solve(sys_, method="dense")
    for method in ("direct", "cg"):
        U = solve(sys_, method=method, rtol=1e-10)
        assert compliance(sys_.F, U) == pytest.approx(compliance(sys_.F, ref), rel=1e-7)
    pytest.importorskip("pyamg")
    U = solve(sys_, method="amg", rtol=1e-10, mesh=mesh)
    assert compliance(sys_.F, U) == pytest.approx(compliance(sys_.F, ref), rel=1e-7)


def test_solve_multiple_rhs_and_retained_subset():
    mesh, ke, sys_ = _bar()
    B = np.column_stack([sys_.F, 2 * sys_.F])
    U = solve(sys_, rhs=B)
    assert np.allclose(U[:, 1], 2 * U[:, 0])
    keep = sys_.free_dofs[: sys_.free_dofs.size // 2]
    Ur = solve(sys_, retained_dofs=keep)
    mask = np.ones(mesh.n_dof, dtype=bool)
    mask[keep] = False
    assert np.all(Ur[mask] == 0)


def test_unknown_method_and_singular_system():
    mesh, ke, sys_ = _bar()
    with pytest.raises(ValueError):
        solve(sys_, method="magic")
    # no supports and no shift: singular
    bad = assemble(mesh, np.ones(mesh.n_ele), 1.0, ke, sys_.F, None, diag_shift=0.0)
    with pytest.raises(SolverError):
        solve(bad, method="dense")


@pytest.mark.parametrize("alpha, rel", [(1e-3, 0.05), (1e-6, 1e-4), (1e-9, 1e-7)])
def test_void_dof_removal_preserves_compliance(alpha, rel):
    # removed DOFs are clamped, so the reduced model is never softer
    mesh = build_mesh(4, 4, 4, 2.0, 2.0, 2.0)
    ke = element_stiffness(mesh)
    centers = mesh.node_coords[mesh.elem_nodes].mean(axis=1)
    rho = np.where(centers[:, 2] < 1.0, 1.0, alpha)
    x, z = mesh.node_coords[:, 0], mesh.node_coords[:, 2]
    free = np.setdiff1d(np.arange(mesh.n_dof), mesh.dofs_of_nodes(np.flatnonzero(x == 0)))
    F = np.zeros(mesh.n_dof)
    F[mesh.dofs_of_nodes(np.flatnonzero((x == 2) & (z == 0)), [2])] = -1.0
    sys_ = assemble(mesh, rho, 1.0, ke, F, free)
    full = compliance(F, solve(sys_))
    keep = np.intersect1d(free, np.unique(mesh.edof[rho > 0.5]))
    reduced = compliance(F, solve(sys_, retained_dofs=keep))
    assert keep.size < free.size
    assert reduced <= full * (1 + 1e-12)
    assert reduced == pytest.approx(full, rel=rel)


def test_energy_forms(rng):
    mesh, ke, sys_ = _bar()
    sys_.diag_shift = 0.0
    U = solve(sys_)
    assert element_energy(U, ke, mesh).sum() == pytest.approx(compliance(sys_.F, U), rel=1e-8)
    assert nodal_strain_energy(U, ke, mesh).sum() == pytest.approx(compliance(sys_.F, U), rel=1e-8)
    V = rng.normal(size=U.size)
    assert np.allclose(element_energy(U, ke, mesh, V), element_energy(V, ke, mesh, U))


def test_springs_and_matrix_market(tmp_path):
    mesh = build_mesh(1, 1, 0, 1.0, 1.0)
    ke = element_stiffness(mesh)
    s = assemble(mesh, np.ones(1), 1.0, ke, springs={0: 5.0})
    base = assemble(mesh, np.ones(1), 1.0, ke)
    assert (s.K - base.K)[0, 0] == pytest.approx(5.0)
    path = export_matrix_market(s, tmp_path / "k.mtx")
    import scipy.io

    assert np.allclose(sp.csr_matrix(scipy.io.mmread(str(path))).toarray(), s.K.toarray())


def test_mesh_validation_and_indexing():
    with pytest.raises(ValueError):
        build_mesh(0, 1, 1, 1.0, 1.0, 1.0)
    mesh = build_mesh(3, 2, 4, 3.0, 2.0, 4.0)
    assert mesh.n_ele == 24 and mesh.n_nod == 4 * 3 * 5
    e = mesh.elem_id(2, 1, 3)
    assert np.allclose(mesh.node_coords[mesh.elem_nodes[e]].min(axis=0), [2, 1, 3])
    assert set(mesh.elems_of_nodes([mesh.node_id(0, 0, 0)])) == {0}
