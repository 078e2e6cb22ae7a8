"""Compiled explicit stepping loops for the catalogued Hamiltonians."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

QUADRATIC, RELATIVISTIC, POWER, QUAD_QUARTIC = 0, 1, 2, 3
KIND_CODES = {"quadratic": QUADRATIC, "relativistic": RELATIVISTIC,
              "power": POWER, "quad_quartic": QUAD_QUARTIC}


@njit(cache=True)
def _h2(kind, A, alpha, c, px, py):
    if kind == QUADRATIC:
        return 0.5 * (A[0, 0] * px * px + 2.0 * A[0, 1] * px * py + A[1, 1] * py * py)
    r2 = px * px + py * py
    if kind == RELATIVISTIC:
        return math.sqrt(1.0 + r2)
    if kind == POWER:
        return r2 ** (0.5 * alpha) / alpha
    return 0.5 * r2 + 0.25 * c * r2 * r2


@njit(cache=True)
def _g2(kind, A, alpha, c, px, py):
    if kind == QUADRATIC:
        return A[0, 0] * px + A[0, 1] * py, A[1, 0] * px + A[1, 1] * py
    r2 = px * px + py * py
    if kind == RELATIVISTIC:
        s = 1.0 / math.sqrt(1.0 + r2)
    elif kind == POWER:
        s = r2 ** (0.5 * alpha - 1.0) if r2 > 0 else 0.0
    else:
        s = 1.0 + c * r2
    return s * px, s * py


@njit(cache=True)
def step_1d(u, nsteps, dt, dx, mu, kind, A, alpha, c):
    n = u.shape[0]
    g = np.empty(n + 2)
    new = np.empty(n)
    z = np.zeros((2, 2))
    z[0, 0] = A[0, 0]
    z[1, 1] = 1.0
    for _ in range(nsteps):
        g[1:n + 1] = u
        g[0] = 2.0 * u[0] - u[1]
        g[n + 1] = 2.0 * u[n - 1] - u[n - 2]
        for i in range(n):
            pm = (g[i + 1] - g[i]) / dx
            pp = (g[i + 2] - g[i + 1]) / dx
            ham = _h2(kind, z, alpha, c, 0.5 * (pm + pp), 0.0)
            am = abs(_g2(kind, z, alpha, c, pm, 0.0)[0])
            ap = abs(_g2(kind, z, alpha, c, pp, 0.0)[0])
            a = am if am > ap else ap
            ham -= 0.5 * a * (pp - pm)
            new[i] = u[i] + dt * (-ham + mu * (pp - pm) / dx)
        u[:] = new
    return u


@njit(cache=True)
def step_2d(u, nsteps, dt, dx, mu, kind, A, alpha, c):
    nx, ny = u.shape
    g = np.empty((nx + 2, ny + 2))
    new = np.empty((nx, ny))
    for _ in range(nsteps):
        g[1:nx + 1, 1:ny + 1] = u
        for j in range(ny):
            g[0, j + 1] = 2.0 * u[0, j] - u[1, j]
            g[nx + 1, j + 1] = 2.0 * u[nx - 1, j] - u[nx - 2, j]
        for i in range(nx + 2):
            g[i, 0] = 2.0 * g[i, 1] - g[i, 2]
            g[i, ny + 1] = 2.0 * g[i, ny] - g[i, ny - 1]
        for i in range(nx):
            for j in range(ny):
                cc = g[i + 1, j + 1]
                pxm = (cc - g[i, j + 1]) / dx
                pxp = (g[i + 2, j + 1] - cc) / dx
                pym = (cc - g[i + 1, j]) / dx
                pyp = (g[i + 1, j + 2] - cc) / dx
                ham = _h2(kind, A, alpha, c, 0.5 * (pxm + pxp), 0.5 * (pym + pyp))
                ax = 0.0
                ay = 0.0
                for qx in (pxm, pxp):
                    for qy in (pym, pyp):
                        vx, vy = _g2(kind, A, alpha, c, qx, qy)
                        if abs(vx) > ax:
                            ax = abs(vx)
                        if abs(vy) > ay:
                            ay = abs(vy)
                ham -= 0.5 * ax * (pxp - pxm) + 0.5 * ay * (pyp - pym)
                lap = (pxp - pxm + pyp - pym) / dx
                new[i, j] = cc + dt * (-ham + mu * lap)
        u[:, :] = new
    return u
