"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured value.
"""
import math
import time

import numpy as np
import pytest

from acceptance_log import record
from oracles import coverage_is_connected, flood_fill_path_exists

from mmctop.driver import Setup, optimize
from mmctop.fem import build_mesh, hex8_stiffness, quad4_stiffness
from mmctop.geometry import Component3D, tdf_eval
from mmctop.loadpath import component_coverage, connectivity_graph, find_load_path
from mmctop.material import HeavisideParams, heaviside, heaviside_deriv
from mmctop.mma import ConvergenceState, MmaParams, MmaState, mma_update, update_convergence
from mmctop.problems import builtin
from mmctop.sensitivity import fd_validate


def test_c01_gradient_fidelity():
    setup = Setup.build(builtin("cantilever3d", mesh=(32, 8, 16)))
    t0 = time.perf_counter()
    rep = fd_validate(setup, setup.initial_params(), delta=1e-8, floor=1e-10)
    ok = rep.analytic_obj.size == 144 and rep.max_rel_obj <= 1e-4 and rep.max_rel_vol <= 1e-4
    record(1, "gradient fidelity", ok,
           f"{rep.analytic_obj.size} variables, max rel err objective {rep.max_rel_obj:.2e}, "
           f"volume {rep.max_rel_vol:.2e} (limit 1e-4), {time.perf_counter() - t0:.0f}s")
    assert ok


def test_c02_reduced_dof_equivalence():
    setup = Setup.build(builtin("cantilever3d", mesh_scale=4))
    res = optimize(setup, 40, 1e-4, MmaParams(), full_compare=True)
    recs = res.records
    picks = [r for r in recs if r.iteration in (10, 20, 30, 40)]
    gaps = [abs(r.obj - r.obj_full) / r.obj_full for r in picks]
    excluded = [r for r in recs if r.path_exists and r.path_size < r.n_active]
    reduced_ok = all(r.retained_fraction < 1.0 for r in excluded)
    every = max(abs(r.obj - r.obj_full) / r.obj_full for r in recs[4:])
    ok = len(picks) >= 3 and max(gaps) <= 5e-3 and reduced_ok
    record(2, "reduced-DOF equivalence", ok,
           f"gaps at iterations {[r.iteration for r in picks]}: "
           f"{', '.join(f'{g:.3%}' for g in gaps)} (limit 0.5%); max over iterations 5-40 "
           f"{every:.3%}; {len(excluded)} iterations with excluded components, retained "
           f"fraction < 1 in all: {reduced_ok}")
    assert ok


def _random_case(rng, mesh, eps):
    n = int(rng.integers(1, 11))
    cols = []
    for _ in range(n):
        c = Component3D(rng.uniform(0, 16), rng.uniform(0, 8), rng.uniform(0, 8),
                        rng.uniform(1.0, 8.0), rng.uniform(0.4, 3.0), rng.uniform(0.4, 3.0),
                        *rng.uniform(-math.pi, math.pi, 3))
        cols.append(tdf_eval(c, mesh.node_coords))
    return np.column_stack(cols)


def test_c03_load_path_oracle():
    mesh = build_mesh(16, 8, 8, 16.0, 8.0, 8.0)
    eps = 0.25
    x = mesh.node_coords
    fixed = mesh.elems_of_nodes(np.flatnonzero(x[:, 0] == 0))
    corner = int(np.flatnonzero((x[:, 0] == 16) & (x[:, 1] == 0) & (x[:, 2] == 0))[0])
    loading = mesh.elems_of_nodes([corner])
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    agree = explained = unexplained = found = 0
    for _ in range(200):
        cols = _random_case(rng, mesh, eps)
        covs = [component_coverage(cols[:, k], mesh, eps) for k in range(cols.shape[1])]
        res = find_load_path(connectivity_graph(covs, mesh.n_ele), covs, loading, fixed)
        ref = flood_fill_path_exists(mesh, cols, eps, loading, fixed)
        found += ref
        if res.exists == ref:
            agree += 1
        elif not all(coverage_is_connected(mesh, cols[:, k], eps) for k in range(cols.shape[1])):
            explained += 1
            print(f"discordant case explained by a disconnected coverage: bfs={res.exists} "
                  f"flood={ref}")
        else:
            unexplained += 1
    elapsed = time.perf_counter() - t0
    ok = unexplained == 0 and elapsed < 60
    record(3, "load-path oracle", ok,
           f"200 configs ({found} with a path), {agree} agree, {explained} discordant explained "
           f"by disconnected coverage, {unexplained} unexplained, {elapsed:.1f}s (limit 60s)")
    assert ok


@pytest.mark.slow
def test_c04_2d_reproduction():
    setup = Setup.build(builtin("cantilever2d"))
    t0 = time.perf_counter()
    res = optimize(setup, 500, 1e-4, MmaParams())
    last = res.records[-1]
    conv = last.obj_vr5 < 1e-4
    rel = abs(res.objective - 73.85) / 73.85
    ok = conv and len(res.records) <= 500 and rel <= 0.10 and res.volume_fraction <= 0.4 + 1e-3
    record(4, "2D reproduction", ok,
           f"converged={conv} at iteration {last.iteration}, compliance {res.objective:.3f} "
           f"({rel:.2%} from 73.85, limit 10%), volume fraction {res.volume_fraction:.5f} "
           f"(limit 0.401), {time.perf_counter() - t0:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def cantilever3d_run():
    setup = Setup.build(builtin("cantilever3d", mesh_scale=2))
    initial = None
    violations = []

    def cb(rec, analysis, params):
        violations.append(rec.ks_violations)

    t0 = time.perf_counter()
    # check_ks raises on the first node where the sandwich inequality fails
    res = optimize(setup, 500, 1e-4, MmaParams(), callback=cb, check_ks=True)
    initial = res.records[0].obj
    return res, initial, violations, time.perf_counter() - t0


@pytest.mark.slow
def test_c05_3d_end_to_end(cantilever3d_run):
    res, initial, _, elapsed = cantilever3d_run
    last = res.records[-1]
    conv = last.obj_vr5 < 1e-4
    ok = conv and res.volume_fraction <= 0.3 + 1e-3 and res.objective < initial
    record(5, "3D end-to-end", ok,
           f"converged={conv} at iteration {last.iteration} (objVr5 {last.obj_vr5:.2e}), "
           f"compliance {initial:.3f} -> {res.objective:.3f}, volume fraction "
           f"{res.volume_fraction:.5f} (limit 0.301), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_c06_ks_sandwich(cantilever3d_run):
    res, _, violations, _ = cantilever3d_run
    total = int(sum(violations))
    ok = total == 0 and len(violations) == len(res.records)
    record(6, "K-S sandwich", ok,
           f"{total} violations over {len(violations)} iterations of the criterion-5 run")
    assert ok


@pytest.mark.paper_scale
def test_c05_paper_mesh_compliance():
    # 128x16x64 hexes; the iterative solver keeps memory within a few GB
    setup = Setup.build(builtin("cantilever3d"), "amg")
    res = optimize(setup, 500, 1e-4, MmaParams())
    rel = abs(res.objective - 18.37) / 18.37
    ok = res.converged and rel <= 0.10
    record(5, "3D end-to-end at the published mesh (optional)", ok,
           f"converged={res.converged} at iteration {res.records[-1].iteration}, compliance "
           f"{res.objective:.3f} ({rel:.2%} from 18.37, limit 10%)")
    assert ok


def _spectrum(ke):
    ev = np.linalg.eigvalsh(ke)
    tol = 1e-9 * np.abs(ev).max()
    return int(np.sum(np.abs(ev) <= tol)), int(np.sum(ev > tol))


def test_c07_element_spectrum():
    hex_counts = _spectrum(hex8_stiffness(1.0, 0.3, 1.0, 1.0, 1.0))
    quad_counts = _spectrum(quad4_stiffness(1.0, 0.3, 1.0, 1.0, 1.0))
    ok = hex_counts == (6, 18) and quad_counts == (3, 5)
    record(7, "element stiffness spectrum", ok,
           f"hex8 (zero, positive) = {hex_counts}, quad4 = {quad_counts}")
    assert ok


def test_c08_heaviside_regularity():
    worst_c0 = worst_c1 = worst_fd = 0.0
    in_range = True
    for eps, alpha in ((0.25, 1e-3), (0.2, 1e-9), (0.5, 1e-3), (0.1, 0.05)):
        hp = HeavisideParams(eps, alpha)
        for edge in (-eps, eps):
            lo, hi = np.nextafter(edge, -np.inf), np.nextafter(edge, np.inf)
            worst_c0 = max(worst_c0, abs(heaviside(lo, hp) - heaviside(hi, hp)))
            worst_c1 = max(worst_c1, abs(heaviside_deriv(lo, hp) - heaviside_deriv(hi, hp)))
        x = np.linspace(-2 * eps, 2 * eps, 4001)
        h = heaviside(x, hp)
        in_range &= bool(np.all((h >= alpha) & (h <= 1)))
        x = x[np.abs(np.abs(x) - eps) > 1e-4]
        # central difference truncation is step**2 * 1.5 / eps**3 / 6, which at 1e-5
        # is already 2.5e-8 for eps = 0.1
        step = 1e-6
        fd = (heaviside(x + step, hp) - heaviside(x - step, hp)) / (2 * step)
        worst_fd = max(worst_fd, float(np.abs(fd - heaviside_deriv(x, hp)).max()))
    ok = worst_c0 <= 1e-12 and worst_c1 <= 1e-12 and in_range and worst_fd <= 1e-8
    record(8, "Heaviside regularity", ok,
           f"C0 jump {worst_c0:.1e}, C1 jump {worst_c1:.1e} (limit 1e-12), range ok {in_range}, "
           f"FD derivative error {worst_fd:.1e} (limit 1e-8)")
    assert ok


def test_c09_mma_qp():
    xmin, xmax = np.zeros(2), np.ones(2)
    state = MmaState.start(np.array([0.2, 0.2]), xmin, xmax)
    x, hit = state.xval, None
    for k in range(1, 51):
        x = mma_update(state, MmaParams(), xmin, xmax, x @ x, 2 * x, [1 - x.sum()],
                       [[-1.0, -1.0]])
        if hit is None and np.abs(x - 0.5).max() <= 1e-3:
            hit = k
    ok = hit is not None and np.abs(x - 0.5).max() <= 1e-3
    record(9, "MMA sanity", ok,
           f"from (0.2, 0.2) within 1e-3 of (0.5, 0.5) at iteration {hit} (limit 50); "
           f"x50 = ({x[0]:.6f}, {x[1]:.6f})")
    assert ok


def test_c10_convergence_metric():
    def feed(values, vols):
        s = ConvergenceState()
        for v, vol in zip(values, vols):
            s = update_convergence(s, v, vol, 1.0, 0.5)
        return s

    early = all(feed([3.0] * k, [0.5] * k).obj_vr5 == 1.0 for k in range(1, 5))
    s = feed([10, 10, 10, 10, 12], [0.5] * 5)
    computed = math.isclose(s.obj_vr5, 1.6 / 10.4, rel_tol=1e-12)
    frozen = update_convergence(s, 20.0, 0.5 * (1 + 2e-3), 1.0, 0.5)
    freeze = frozen.obj_vr5 == s.obj_vr5 and frozen.iteration == 6
    resumed = update_convergence(frozen, 12.0, 0.5 * (1 + 1e-4), 1.0, 0.5)
    window = [10, 10, 12, 20, 12]
    expected = abs(max(window) - np.mean(window)) / np.mean(window)
    resume = math.isclose(resumed.obj_vr5, expected, rel_tol=1e-12)
    ok = early and computed and freeze and resume
    record(10, "convergence metric", ok,
           f"k<5 gives 1.0: {early}; (10,10,10,10,12) -> {s.obj_vr5:.5f}: {computed}; "
           f"freeze while Ver > 1e-4: {freeze}; recompute at Ver = 1e-4: {resume}")
    assert ok


@pytest.mark.slow
def test_c11_timing_sanity():
    setup = Setup.build(builtin("mbb3d", mesh_scale=2))
    res = optimize(setup, 60, 1e-4, MmaParams())
    ratios = np.array([r.srch_ratio for r in res.records])
    ok = ratios.mean() <= 0.10
    record(11, "timing sanity", ok,
           f"mean t_srch/(t_srch+t_FEr) = {ratios.mean():.2%} over {ratios.size} iterations "
           f"(max {ratios.max():.2%}, limit 10%)")
    assert ok
