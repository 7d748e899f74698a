"""Pure-numpy TDF kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled path is tested against.
"""
import numpy as np


def rotation_3d(alpha, beta, gamma):
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.array([
        [cb * cg, cb * sg, -sb],
        [sa * sb * cg - ca * sg, sa * sb * sg + ca * cg, sa * cb],
        [ca * sb * cg + sa * sg, ca * sb * sg - sa * cg, ca * cb],
    ])


def rotation_derivs_3d(alpha, beta, gamma):
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    r_alpha = np.array([
        [0.0, 0.0, 0.0],
        [ca * sb * cg + sa * sg, ca * sb * sg - sa * cg, ca * cb],
        [-sa * sb * cg + ca * sg, -sa * sb * sg - ca * cg, -sa * cb],
    ])
    r_beta = np.array([
        [-sb * cg, -sb * sg, -cb],
        [sa * cb * cg, sa * cb * sg, -sa * sb],
        [ca * cb * cg, ca * cb * sg, -ca * sb],
    ])
    r_gamma = np.array([
        [-cb * sg, cb * cg, 0.0],
        [-sa * sb * sg - ca * cg, sa * sb * cg - ca * sg, 0.0],
        [-ca * sb * sg + sa * cg, ca * sb * cg + sa * sg, 0.0],
    ])
    return r_alpha, r_beta, r_gamma


def tdf3d(params, coords, p, with_grad=True):
    """Cuboid TDF (and its 9 partials) at ``coords`` of shape (n, 3)."""
    x0, y0, z0, l1, l2, l3, alpha, beta, gamma = (float(v) for v in params)
    rot = rotation_3d(alpha, beta, gamma)
    rel = coords - np.array([x0, y0, z0])
    local = rel @ rot.T
    xt = local[:, 0] / l1
    yt = local[:, 1] / l2
    zt = local[:, 2] / l3
    xp, yp, zp = xt ** p, yt ** p, zt ** p
    w = xp + yp + zp
    phi = 1.0 - w ** (1.0 / p)
    if not with_grad:
        return phi, None

    center = w == 0.0
    wf = np.where(center, 1.0, w) ** ((1.0 - p) / p)
    wf[center] = 0.0
    gx = xt ** (p - 1) / l1
    gy = yt ** (p - 1) / l2
    gz = zt ** (p - 1) / l3
    g = np.stack([gx, gy, gz], axis=1)

    grad = np.empty((coords.shape[0], 9))
    # d(local)/d(center) = -R
    grad[:, 0:3] = wf[:, None] * (g @ rot)
    grad[:, 3] = wf * xp / l1
    grad[:, 4] = wf * yp / l2
    grad[:, 5] = wf * zp / l3
    for k, r_z in enumerate(rotation_derivs_3d(alpha, beta, gamma)):
        dlocal = rel @ r_z.T
        grad[:, 6 + k] = -wf * np.einsum("ij,ij->i", g, dlocal)
    return phi, grad


def tdf2d(params, coords, p, with_grad=True):
    """Trapezoid TDF (and its 6 partials) at ``coords`` of shape (n, 2)."""
    x0, y0, length, t1, t2, theta = (float(v) for v in params)
    c, s = np.cos(theta), np.sin(theta)
    dx = coords[:, 0] - x0
    dy = coords[:, 1] - y0
    xl = c * dx + s * dy
    yl = -s * dx + c * dy
    slope = (t2 - t1) / (2.0 * length)
    width = 0.5 * (t1 + t2) + slope * xl
    lmin = 1e-6 * (t1 + t2)
    clamped = width < lmin
    width = np.where(clamped, lmin, width)
    xt = xl / length
    yt = yl / width
    xp, yp = xt ** p, yt ** p
    w = xp + yp
    phi = 1.0 - w ** (1.0 / p)
    if not with_grad:
        return phi, None

    center = w == 0.0
    wf = np.where(center, 1.0, w) ** ((1.0 - p) / p)
    wf[center] = 0.0
    ax = xt ** (p - 1)
    ay = yt ** (p - 1)
    live = np.where(clamped, 0.0, 1.0)

    # partials of (x', y') and of the local width, per variable
    dxl = [-c, -s, 0.0, 0.0, 0.0, yl]
    dyl = [s, -c, 0.0, 0.0, 0.0, -xl]
    dw = [
        slope * -c,
        slope * -s,
        -(t2 - t1) / (2.0 * length ** 2) * xl,
        0.5 - xl / (2.0 * length),
        0.5 + xl / (2.0 * length),
        slope * yl,
    ]
    grad = np.empty((coords.shape[0], 6))
    for j in range(6):
        dxt = dxl[j] / length - (xt / length if j == 2 else 0.0)
        dyt = (dyl[j] - yt * live * dw[j]) / width
        grad[:, j] = -wf * (ax * dxt + ay * dyt)
    return phi, grad
