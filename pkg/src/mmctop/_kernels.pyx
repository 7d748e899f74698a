# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled TDF kernels: fused value + partial-derivative loops over nodes."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, pow

cnp.import_array()


cdef inline double ipow(double x, int n) nogil:
    cdef double r = 1.0
    cdef int k
    for k in range(n):
        r *= x
    return r


def tdf3d(params, double[:, ::1] coords, int p, bint with_grad=True):
    cdef double x0 = params[0], y0 = params[1], z0 = params[2]
    cdef double l1 = params[3], l2 = params[4], l3 = params[5]
    cdef double a = params[6], b = params[7], g = params[8]
    cdef double ca = cos(a), sa = sin(a), cb = cos(b), sb = sin(b)
    cdef double cg = cos(g), sg = sin(g)
    cdef double r[3][3]
    cdef double ra[3][3]
    cdef double rb[3][3]
    cdef double rg[3][3]
    r[0][0] = cb * cg; r[0][1] = cb * sg; r[0][2] = -sb
    r[1][0] = sa * sb * cg - ca * sg; r[1][1] = sa * sb * sg + ca * cg; r[1][2] = sa * cb
    r[2][0] = ca * sb * cg + sa * sg; r[2][1] = ca * sb * sg - sa * cg; r[2][2] = ca * cb
    ra[0][0] = 0.0; ra[0][1] = 0.0; ra[0][2] = 0.0
    ra[1][0] = ca * sb * cg + sa * sg; ra[1][1] = ca * sb * sg - sa * cg; ra[1][2] = ca * cb
    ra[2][0] = -sa * sb * cg + ca * sg; ra[2][1] = -sa * sb * sg - ca * cg; ra[2][2] = -sa * cb
    rb[0][0] = -sb * cg; rb[0][1] = -sb * sg; rb[0][2] = -cb
    rb[1][0] = sa * cb * cg; rb[1][1] = sa * cb * sg; rb[1][2] = -sa * sb
    rb[2][0] = ca * cb * cg; rb[2][1] = ca * cb * sg; rb[2][2] = -ca * sb
    rg[0][0] = -cb * sg; rg[0][1] = cb * cg; rg[0][2] = 0.0
    rg[1][0] = -sa * sb * sg - ca * cg; rg[1][1] = sa * sb * cg - ca * sg; rg[1][2] = 0.0
    rg[2][0] = -ca * sb * sg + sa * cg; rg[2][1] = ca * sb * cg + sa * sg; rg[2][2] = 0.0

    cdef Py_ssize_t n = coords.shape[0], i
    phi_arr = np.empty(n)
    cdef double[::1] phi = phi_arr
    cdef double[:, ::1] grad
    grad_arr = None
    if with_grad:
        grad_arr = np.empty((n, 9))
        grad = grad_arr
    cdef double inv_p = 1.0 / p, wexp = (1.0 - p) / <double>p
    cdef double dx, dy, dz, xt, yt, zt, xp, yp, zp, w, wf, gx, gy, gz
    cdef double ex, ey, ez
    with nogil:
        for i in range(n):
            dx = coords[i, 0] - x0
            dy = coords[i, 1] - y0
            dz = coords[i, 2] - z0
            xt = (r[0][0] * dx + r[0][1] * dy + r[0][2] * dz) / l1
            yt = (r[1][0] * dx + r[1][1] * dy + r[1][2] * dz) / l2
            zt = (r[2][0] * dx + r[2][1] * dy + r[2][2] * dz) / l3
            gx = ipow(xt, p - 1)
            gy = ipow(yt, p - 1)
            gz = ipow(zt, p - 1)
            xp = gx * xt
            yp = gy * yt
            zp = gz * zt
            w = xp + yp + zp
            phi[i] = 1.0 - pow(w, inv_p)
            if not with_grad:
                continue
            if w == 0.0:
                wf = 0.0
            else:
                wf = pow(w, wexp)
            gx = gx / l1
            gy = gy / l2
            gz = gz / l3
            grad[i, 0] = wf * (gx * r[0][0] + gy * r[1][0] + gz * r[2][0])
            grad[i, 1] = wf * (gx * r[0][1] + gy * r[1][1] + gz * r[2][1])
            grad[i, 2] = wf * (gx * r[0][2] + gy * r[1][2] + gz * r[2][2])
            grad[i, 3] = wf * xp / l1
            grad[i, 4] = wf * yp / l2
            grad[i, 5] = wf * zp / l3
            ex = ra[0][0] * dx + ra[0][1] * dy + ra[0][2] * dz
            ey = ra[1][0] * dx + ra[1][1] * dy + ra[1][2] * dz
            ez = ra[2][0] * dx + ra[2][1] * dy + ra[2][2] * dz
            grad[i, 6] = -wf * (gx * ex + gy * ey + gz * ez)
            ex = rb[0][0] * dx + rb[0][1] * dy + rb[0][2] * dz
            ey = rb[1][0] * dx + rb[1][1] * dy + rb[1][2] * dz
            ez = rb[2][0] * dx + rb[2][1] * dy + rb[2][2] * dz
            grad[i, 7] = -wf * (gx * ex + gy * ey + gz * ez)
            ex = rg[0][0] * dx + rg[0][1] * dy
            ey = rg[1][0] * dx + rg[1][1] * dy
            ez = rg[2][0] * dx + rg[2][1] * dy
            grad[i, 8] = -wf * (gx * ex + gy * ey + gz * ez)
    return phi_arr, grad_arr


def tdf2d(params, double[:, ::1] coords, int p, bint with_grad=True):
    cdef double x0 = params[0], y0 = params[1], length = params[2]
    cdef double t1 = params[3], t2 = params[4], theta = params[5]
    cdef double c = cos(theta), s = sin(theta)
    cdef double slope = (t2 - t1) / (2.0 * length)
    cdef double lmin = 1e-6 * (t1 + t2)
    cdef Py_ssize_t n = coords.shape[0], i
    phi_arr = np.empty(n)
    cdef double[::1] phi = phi_arr
    cdef double[:, ::1] grad
    grad_arr = None
    if with_grad:
        grad_arr = np.empty((n, 6))
        grad = grad_arr
    cdef double inv_p = 1.0 / p, wexp = (1.0 - p) / <double>p
    cdef double dx, dy, xl, yl, width, live, xt, yt, ax, ay, w, wf
    with nogil:
        for i in range(n):
            dx = coords[i, 0] - x0
            dy = coords[i, 1] - y0
            xl = c * dx + s * dy
            yl = -s * dx + c * dy
            width = 0.5 * (t1 + t2) + slope * xl
            live = 1.0
            if width < lmin:
                width = lmin
                live = 0.0
            xt = xl / length
            yt = yl / width
            ax = ipow(xt, p - 1)
            ay = ipow(yt, p - 1)
            w = ax * xt + ay * yt
            phi[i] = 1.0 - pow(w, inv_p)
            if not with_grad:
                continue
            if w == 0.0:
                wf = 0.0
            else:
                wf = pow(w, wexp)
            grad[i, 0] = -wf * (ax * (-c / length) + ay * (s - yt * live * slope * -c) / width)
            grad[i, 1] = -wf * (ax * (-s / length) + ay * (-c - yt * live * slope * -s) / width)
            grad[i, 2] = -wf * (ax * (-xt / length)
                                + ay * (-yt * live * (-(t2 - t1) / (2.0 * length * length) * xl)) / width)
            grad[i, 3] = -wf * ay * (-yt * live * (0.5 - xl / (2.0 * length))) / width
            grad[i, 4] = -wf * ay * (-yt * live * (0.5 + xl / (2.0 * length))) / width
            grad[i, 5] = -wf * (ax * yl / length + ay * (-xl - yt * live * slope * yl) / width)
    return phi_arr, grad_arr
