"""Method of Moving Asymptotes (Svanberg's 2007 formulation) and the
five-iteration convergence metric.

The subproblem is solved with a primal-dual interior point method on the
relaxed problem with artificial variables ``y`` and ``z``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class MmaError(RuntimeError):
    pass


@dataclass(frozen=True)
class MmaParams:
    epsimin: float = 1e-9
    raa0: float = 0.01
    albefa: float = 0.8
    asyinit: float = 0.05
    asyincr: float = 1.0
    asydecr: float = 0.8
    move: float = 1.0
    a0: float = 1.0
    c: float = 1000.0
    d: float = 1.0

    def __post_init__(self):
        if not 0 < self.albefa < 1:
            raise ValueError("albefa must lie in (0, 1)")
        if not 0 < self.asydecr < 1 <= self.asyincr:
            raise ValueError("need 0 < asydecr < 1 <= asyincr")
        if self.epsimin <= 0 or self.asyinit <= 0 or self.raa0 <= 0:
            raise ValueError("epsimin, asyinit and raa0 must be positive")


@dataclass
class MmaState:
    xval: np.ndarray
    xold1: np.ndarray
    xold2: np.ndarray
    low: np.ndarray
    upp: np.ndarray
    iteration: int = 0

    @classmethod
    def start(cls, x0, xmin, xmax) -> "MmaState":
        x = np.asarray(x0, dtype=float).copy()
        return cls(x, x.copy(), x.copy(), np.asarray(xmin, float).copy(),
                   np.asarray(xmax, float).copy(), 0)

    def subset(self, keep) -> "MmaState":
        """State restricted to the variables selected by ``keep``."""
        return MmaState(self.xval[keep].copy(), self.xold1[keep].copy(), self.xold2[keep].copy(),
                        self.low[keep].copy(), self.upp[keep].copy(), self.iteration)


def _asymptotes(state: MmaState, prm: MmaParams, xmin, xmax):
    x = state.xval
    rng = xmax - xmin
    k = state.iteration + 1
    if k <= 2:
        low = x - prm.asyinit * rng
        upp = x + prm.asyinit * rng
    else:
        sign = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones_like(x)
        factor[sign > 0] = prm.asyincr
        factor[sign < 0] = prm.asydecr
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10.0 * rng, x - 0.01 * rng)
        upp = np.clip(upp, x + 0.01 * rng, x + 10.0 * rng)
    return low, upp


def mma_update(state: MmaState, prm: MmaParams, xmin, xmax, f0val, df0dx, fval, dfdx):
    """One MMA step. ``fval`` (m,) and ``dfdx`` (m, n) describe ``f_i <= 0``.

    Returns the new design; ``state`` is advanced in place.
    """
    xmin = np.asarray(xmin, dtype=float)
    xmax = np.asarray(xmax, dtype=float)
    df0dx = np.asarray(df0dx, dtype=float).ravel()
    fval = np.atleast_1d(np.asarray(fval, dtype=float))
    dfdx = np.atleast_2d(np.asarray(dfdx, dtype=float))
    n, m = state.xval.size, fval.size
    if df0dx.size != n or dfdx.shape != (m, n):
        raise ValueError("gradient shapes do not match the design vector")
    x = state.xval
    rng = xmax - xmin
    low, upp = _asymptotes(state, prm, xmin, xmax)

    alfa = np.maximum.reduce([low + prm.albefa * (x - low), x - prm.move * rng, xmin])
    beta = np.minimum.reduce([upp - prm.albefa * (upp - x), x + prm.move * rng, xmax])

    xmami = np.maximum(rng, 1e-5)
    ux1, xl1 = upp - x, x - low
    ux2, xl2 = ux1 ** 2, xl1 ** 2
    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + prm.raa0 / xmami
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + prm.raa0 / xmami[None, :]
    P = (P + PQ) * ux2[None, :]
    Q = (Q + PQ) * xl2[None, :]
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

    a = np.zeros(m)
    c = np.full(m, prm.c)
    d = np.full(m, prm.d)
    xnew = subsolv(m, n, prm.epsimin, low, upp, alfa, beta, p0, q0, P, Q, prm.a0, a, b, c, d)[0]

    state.xold2 = state.xold1.copy()
    state.xold1 = x.copy()
    state.xval = xnew
    state.low, state.upp = low, upp
    state.iteration += 1
    return xnew


def subsolv(m, n, epsimin, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d):
    """Primal-dual Newton solve of the MMA subproblem (KKT residual <= epsimin)."""
    een, eem = np.ones(n), np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    xsi = np.maximum(1.0 / (x - alfa), een)
    eta = np.maximum(1.0 / (beta - x), een)
    mu = np.maximum(eem, 0.5 * c)
    zet = 1.0
    s = eem.copy()

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1, xl1 = upp - x, x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        dpsidx = plam / ux1 ** 2 - qlam / xl1 ** 2
        return np.concatenate([
            dpsidx - xsi + eta,
            c + d * y - mu - lam,
            [a0 - zet - a @ lam],
            gvec - a * z - y + s - b,
            xsi * (x - alfa) - epsi,
            eta * (beta - x) - epsi,
            mu * y - epsi,
            [zet * z - epsi],
            lam * s - epsi,
        ])

    while epsi > epsimin:
        res = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        resnorm = np.linalg.norm(res)
        resmax = np.abs(res).max()
        it = 0
        while resmax > 0.9 * epsi and it < 200:
            it += 1
            ux1, xl1 = upp - x, x - low
            ux2, xl2 = ux1 ** 2, xl1 ** 2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
            GG = P / ux2[None, :] - Q / xl2[None, :]
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2.0 * (plam / (ux1 * ux2) + qlam / (xl1 * xl2)) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                AA = np.zeros((m + 1, m + 1))
                AA[:m, :m] = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA[:m, m] = a
                AA[m, :m] = a
                AA[m, m] = -zet / z
                sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam, dz = sol[:m], sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                diaglamyiinv = 1.0 / diaglamyi
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG.T * diaglamyiinv[None, :]) @ GG
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                AA = np.zeros((n + 1, n + 1))
                AA[:n, :n] = Axx
                AA[:n, n] = axz
                AA[n, :n] = axz
                AA[n, n] = azz
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx, dz = sol[:n], sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - xsi * dx / (x - alfa)
            deta = -eta + epsi / (beta - x) + eta * dx / (beta - x)
            dmu = -mu + epsi / y - mu * dy / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - s * dlam / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - alfa))
            stmbeta = np.max(1.01 * dx / (beta - x))
            steg = 1.0 / max(stmxx, stmalfa, stmbeta, 1.0)

            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            step = (dx, dy, dz, dlam, dxsi, deta, dmu, dzet, ds)
            newnorm = 2.0 * resnorm
            tries = 0
            while newnorm > resnorm and tries < 50:
                tries += 1
                x, y, z, lam, xsi, eta, mu, zet, s = (o + steg * dv for o, dv in zip(old, step))
                res = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                newnorm = np.linalg.norm(res)
                steg /= 2.0
            resnorm = newnorm
            resmax = np.abs(res).max()
        epsi *= 0.1
    if not np.all(np.isfinite(x)):
        raise MmaError("MMA subproblem diverged (non-finite iterate)")
    return x, y, z, lam, xsi, eta, mu, zet, s


@dataclass
class ConvergenceState:
    obj_history: list = field(default_factory=list)
    obj_vr5: float = 1.0
    vol_err: float = math.inf

    @property
    def iteration(self) -> int:
        return len(self.obj_history)


def update_convergence(state: ConvergenceState, new_obj: float, volume: float,
                       domain_volume: float, v_bound: float) -> ConvergenceState:
    """Append ``new_obj`` and recompute the five-iteration variation.

    The variation is 1 for fewer than five iterations and keeps its previous
    value while the relative volume excess is above 1e-4.
    """
    hist = state.obj_history + [float(new_obj)]
    ver = (volume / domain_volume - v_bound) / v_bound
    k = len(hist)
    vr5 = state.obj_vr5
    if k < 5:
        vr5 = 1.0
    elif ver <= 1e-4:
        last = np.asarray(hist[-5:])
        mean = last.mean()
        if mean == 0:
            log.warning("mean of the last five objective values is zero; treating as converged")
            vr5 = 0.0
        else:
            vr5 = float(abs(last.max() - mean) / abs(mean))
    return ConvergenceState(hist, vr5, ver)


def converged(state: ConvergenceState, tol: float = 1e-4, max_iter: int = 500) -> bool:
    return state.obj_vr5 < tol or state.iteration >= max_iter


def variable_bounds(kind: str, domain, overrides: dict | None = None):
    """Per-variable ``(xmin, xmax)`` for one component of ``kind``.

    ``domain`` is ``(DL, DW)`` or ``(DL, DW, DH)``. Centers stay in the box,
    half-sizes lie in ``[0.02*min edge, max edge]`` and angles in ``[-pi, pi]``.
    ``overrides`` maps variable names to ``[lo, hi]``.
    """
    from .geometry import VARS_2D, VARS_3D

    edges = [float(v) for v in domain if v > 0]
    lo_len, hi_len = 0.02 * min(edges), max(edges)
    if kind == "cuboid3d":
        names = VARS_3D
        lo = [0.0, 0.0, 0.0] + [lo_len] * 3 + [-math.pi] * 3
        hi = list(edges[:3]) + [hi_len] * 3 + [math.pi] * 3
    elif kind == "trapezoid2d":
        names = VARS_2D
        lo = [0.0, 0.0] + [lo_len] * 3 + [-math.pi]
        hi = list(edges[:2]) + [hi_len] * 3 + [math.pi]
    else:
        raise ValueError(f"unknown component kind {kind!r}")
    for key, (a, b) in (overrides or {}).items():
        if key not in names:
            raise ValueError(f"unknown variable {key!r} for {kind}")
        if not a < b:
            raise ValueError(f"bound for {key!r} must satisfy lo < hi")
        i = names.index(key)
        lo[i], hi[i] = float(a), float(b)
    return np.array(lo), np.array(hi)
