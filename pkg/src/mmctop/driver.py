"""Design evaluation and the optimization loop.

One iteration: component TDFs and their gradients, K-S aggregate and
densities, load path search with reduced or full FEA, sensitivities, then an
MMA step on the variables of active components.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fem import assemble, element_stiffness, nodal_strain_energy, solid_diag_max, solve
from .geometry import TdfHyperParams, component_from_params, ks_aggregate, prune_components
from .loadpath import (LoadPathResult, component_coverage, connectivity_graph, find_load_path,
                       reduced_model, stiffness_mask, void_threshold)
from .material import HeavisideParams, element_density, heaviside, heaviside_deriv, nodal_weights
from .mma import (ConvergenceState, MmaParams, MmaState, converged, mma_update,
                  update_convergence, variable_bounds)
from .problems import ProblemDefinition
from .sensitivity import (chain_weights, compliance_gradient, round_significant, volume_gradient)

log = logging.getLogger(__name__)


class KsSandwichError(AssertionError):
    pass


@dataclass
class Setup:
    """Everything about a problem that stays fixed during a run."""

    problem: ProblemDefinition
    mesh: object
    ke: np.ndarray
    F: np.ndarray
    Fout: np.ndarray | None
    free: np.ndarray
    springs: dict
    W: np.ndarray
    nd_cols: np.ndarray
    hp: TdfHyperParams
    hs: HeavisideParams
    diag_shift: float
    solver: str = "auto"
    void_thr: float = 0.0

    @classmethod
    def build(cls, problem: ProblemDefinition, solver: str = "auto", void_mode: str = "strict"):
        mesh = problem.mesh
        ke = element_stiffness(mesh, 1.0, problem.nu, problem.thickness)
        hs = HeavisideParams(problem.epsilon, problem.alpha)
        out = problem.dummy_vector(mesh.n_dof) if problem.objective == "output_displacement" else None
        return cls(
            problem=problem, mesh=mesh, ke=ke,
            F=problem.load_vector(mesh.n_dof), Fout=out,
            free=problem.free_dofs(mesh.n_dof),
            springs={int(d): float(k) for d, k in problem.springs},
            W=nodal_weights(mesh),
            nd_cols=problem.non_design_columns(mesh.n_nod),
            hp=TdfHyperParams(problem.p, problem.lam),
            hs=hs,
            diag_shift=1e-8 * solid_diag_max(mesh, problem.E, ke),
            solver=solver,
            void_thr=void_threshold(hs, void_mode),
        )

    @property
    def kind(self) -> str:
        return self.problem.components[0].kind

    @property
    def nvars(self) -> int:
        return self.problem.components[0].nvars

    def initial_params(self) -> np.ndarray:
        return np.array([c.params for c in self.problem.components])


@dataclass
class Analysis:
    active: np.ndarray
    phi_s: np.ndarray
    den: np.ndarray
    volume: float
    f: float
    f0val: float
    fval: float
    path: LoadPathResult
    retained: np.ndarray
    U: np.ndarray
    fe_mask: np.ndarray | None = None
    df0dx: np.ndarray | None = None
    dfdx: np.ndarray | None = None
    f_full: float = math.nan
    ks_violations: int = 0
    timings: dict = field(default_factory=dict)


def _kernel(setup):
    return kernels.tdf3d if setup.kind == "cuboid3d" else kernels.tdf2d


def analyze(setup: Setup, params, active=None, *, prune: bool = True, sensitivities: bool = True,
            rounding: bool = True, freeze: Analysis | None = None,
            full_compare: bool = False) -> Analysis:
    """Evaluate objective, volume constraint and (optionally) their gradients.

    ``params`` is (nComp, nvars). With ``freeze`` the active set, the path
    members and the retained DOFs are taken from an earlier analysis.
    Gradients cover the variables of active components only, component-major.
    """
    prob, mesh, hp, hs = setup.problem, setup.mesh, setup.hp, setup.hs
    params = np.asarray(params, dtype=float)
    n_comp, nv = params.shape
    kernel = _kernel(setup)
    coords = mesh.node_coords
    t = {}

    t0 = time.perf_counter()
    if freeze is not None:
        active = freeze.active.copy()
    elif active is None:
        active = np.ones(n_comp, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool).copy()
    idx = np.flatnonzero(active)
    cols = np.empty((mesh.n_nod, idx.size))
    for c, i in enumerate(idx):
        cols[:, c] = kernel(params[i], coords, hp.p, False)[0]
    if prune and freeze is None:
        comps = [component_from_params(setup.kind, params[i]) for i in idx]
        keep = prune_components(comps, cols, mesh.min_size, hs.epsilon)
        if not keep.all():
            active[idx[~keep]] = False
            idx, cols = idx[keep], cols[:, keep]
    m_act = idx.size
    allcols = np.hstack([cols, setup.nd_cols]) if setup.nd_cols.shape[1] else cols
    phi_s, w = ks_aggregate(allcols, hp.lam, hp.exp_floor)
    top = allcols.max(axis=1)
    viol = int(np.count_nonzero(phi_s < top)
               + np.count_nonzero(phi_s > top + math.log(allcols.shape[1]) / hp.lam))
    band = np.flatnonzero(np.abs(phi_s) <= hs.epsilon) if sensitivities else None
    if sensitivities:
        grads = np.empty((band.size, m_act * nv))
        pts = np.ascontiguousarray(coords[band])
        for c, i in enumerate(idx):
            grads[:, c * nv:(c + 1) * nv] = kernel(params[i], pts, hp.p, True)[1]
    t["t_TDF"] = time.perf_counter() - t0

    H = heaviside(phi_s, hs)
    den = element_density(H, mesh)
    volume = float(setup.W @ H)
    fval = volume / mesh.domain_volume - prob.volfrac

    t0 = time.perf_counter()
    if freeze is not None:
        path = LoadPathResult(freeze.path.exists, freeze.path.path)
    else:
        covs = [component_coverage(allcols[:, c], mesh, hs.epsilon) for c in range(allcols.shape[1])]
        graph = connectivity_graph(covs, mesh.n_ele)
        path = find_load_path(graph, covs, prob.loading_elements, prob.fixed_elements)
    fe_mask = None
    if path.exists:
        den_sld, retained = reduced_model(allcols[:, path.path], hp.lam, hs, mesh, setup.free,
                                          setup.void_thr, hp.exp_floor)
        fe_mask = stiffness_mask(den_sld, setup.void_thr)
    else:
        den_sld, retained = den, setup.free
    if freeze is not None:
        retained, fe_mask = freeze.retained, freeze.fe_mask
    path.den_sld, path.retained_dofs = den_sld, retained
    t["t_srch"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    den_fe = den_sld if fe_mask is None else np.where(fe_mask, den_sld, 0.0)
    sys_ = assemble(mesh, den_fe, prob.E, setup.ke, setup.F, setup.free, setup.springs,
                    setup.diag_shift)
    rhs = setup.F if setup.Fout is None else np.column_stack([setup.F, setup.Fout])
    sol = solve(sys_, retained, rhs, method=setup.solver, mesh=mesh)
    U, Uadj = (sol, sol) if setup.Fout is None else (sol[:, 0], sol[:, 1])
    f = float((setup.F if setup.Fout is None else setup.Fout) @ U)
    t["t_FEr"] = time.perf_counter() - t0

    f_full = math.nan
    if full_compare:
        t0 = time.perf_counter()
        sys_full = assemble(mesh, den, prob.E, setup.ke, setup.F, setup.free, setup.springs,
                            setup.diag_shift)
        out = setup.F if setup.Fout is None else setup.Fout
        f_full = float(out @ solve(sys_full, None, setup.F, method=setup.solver, mesh=mesh))
        t["t_FE"] = time.perf_counter() - t0

    res = Analysis(active=active, phi_s=phi_s, den=den, volume=volume, f=f, f0val=f / prob.scl,
                   fval=fval, path=path, retained=retained, U=U, fe_mask=fe_mask, f_full=f_full,
                   ks_violations=viol, timings=t)
    if not sensitivities:
        return res

    t0 = time.perf_counter()
    chain = chain_weights(heaviside_deriv(phi_s[band], hs), w[band, :m_act], grads, nv)
    engy = nodal_strain_energy(U, setup.ke, mesh, 1.0, V=Uadj, mask=fe_mask)[band]
    df0dx = compliance_gradient(engy, prob.E, chain, prob.scl)
    dfdx = volume_gradient(setup.W[band], chain, mesh.domain_volume)
    if rounding:
        df0dx = round_significant(df0dx, prob.dgt0)
        dfdx = round_significant(dfdx, prob.dgt0)
    res.df0dx, res.dfdx = df0dx, dfdx
    t["t_sens"] = time.perf_counter() - t0
    return res


@dataclass
class IterationRecord:
    iteration: int
    obj: float
    f0val: float
    volfrac: float
    obj_vr5: float
    ver: float
    n_active: int
    path_exists: bool
    path_size: int
    retained_fraction: float
    t_TDF: float
    t_srch: float
    t_FEr: float
    t_FE: float
    t_sens: float
    t_updt: float
    obj_full: float
    ks_violations: int

    @property
    def srch_ratio(self) -> float:
        denom = self.t_srch + self.t_FEr
        return self.t_srch / denom if denom > 0 else math.nan


@dataclass
class RunResult:
    params: np.ndarray
    active: np.ndarray
    records: list
    analysis: Analysis
    converged: bool
    setup: Setup

    @property
    def objective(self) -> float:
        return self.analysis.f

    @property
    def volume_fraction(self) -> float:
        return self.analysis.volume / self.setup.mesh.domain_volume


def optimize(setup: Setup, max_iter: int = 500, tol: float = 1e-4,
             mma: MmaParams | None = None, full_compare: bool = False,
             callback=None, check_ks: bool = True) -> RunResult:
    """Run the loop until the five-iteration variation drops below ``tol``.

    ``callback(record, analysis, params)`` is called after every iteration.
    The returned design is the last analyzed one.
    """
    if max_iter < 1 or not tol > 0:
        raise ValueError("need max_iter >= 1 and tol > 0")
    prob, mesh = setup.problem, setup.mesh
    mma = mma or MmaParams()
    params = setup.initial_params()
    n_comp, nv = params.shape
    lo, hi = variable_bounds(setup.kind, prob.domain, prob.bounds)
    xmin, xmax = np.tile(lo, n_comp), np.tile(hi, n_comp)
    state = MmaState.start(np.clip(params.ravel(), xmin, xmax), xmin, xmax)
    params = state.xval.reshape(n_comp, nv).copy()
    active = np.ones(n_comp, dtype=bool)
    conv = ConvergenceState()
    records = []
    done = False
    while not done:
        analyzed = params.copy()
        a = analyze(setup, analyzed, active, full_compare=full_compare)
        if check_ks and a.ks_violations:
            raise KsSandwichError(f"K-S bounds violated at {a.ks_violations} nodes "
                                  f"in iteration {conv.iteration + 1}")
        active = a.active
        conv = update_convergence(conv, a.f, a.volume, mesh.domain_volume, prob.volfrac)
        done = converged(conv, tol, max_iter)
        t0 = time.perf_counter()
        if not done:
            vmask = np.repeat(active, nv)
            sub = state.subset(vmask)
            mma_update(sub, mma, xmin[vmask], xmax[vmask], a.f0val, a.df0dx, [a.fval], a.dfdx[None, :])
            for name in ("xval", "xold1", "xold2", "low", "upp"):
                getattr(state, name)[vmask] = getattr(sub, name)
            state.iteration = sub.iteration
            params = state.xval.reshape(n_comp, nv).copy()
        t_updt = time.perf_counter() - t0
        rec = IterationRecord(
            iteration=conv.iteration, obj=a.f, f0val=a.f0val,
            volfrac=a.volume / mesh.domain_volume, obj_vr5=conv.obj_vr5, ver=conv.vol_err,
            n_active=int(active.sum()), path_exists=bool(a.path.exists),
            path_size=int(a.path.path.size), retained_fraction=a.retained.size / setup.free.size,
            t_TDF=a.timings["t_TDF"], t_srch=a.timings["t_srch"], t_FEr=a.timings["t_FEr"],
            t_FE=a.timings.get("t_FE", math.nan), t_sens=a.timings["t_sens"], t_updt=t_updt,
            obj_full=a.f_full, ks_violations=a.ks_violations)
        records.append(rec)
        log.info("it %4d  obj %.6g  vol %.4f  vr5 %.3e  active %d  path %s  dofs %.3f",
                 rec.iteration, rec.obj, rec.volfrac, rec.obj_vr5, rec.n_active,
                 rec.path_exists, rec.retained_fraction)
        if callback is not None:
            callback(rec, a, analyzed)
    return RunResult(params=analyzed, active=active, records=records, analysis=a,
                     converged=conv.obj_vr5 < tol, setup=setup)
