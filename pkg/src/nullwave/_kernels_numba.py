"""Fused stencil kernels compiled with numba; parallel over x-slabs."""
import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _eval_terms(ti, tc, uv, du, out):
    for m in range(out.shape[0]):
        out[m] = 0.0
    for t in range(ti.shape[0]):
        kind = ti[t, 0]
        j = ti[t, 1]
        k = ti[t, 2]
        a = ti[t, 3]
        l = ti[t, 4]
        c = ti[t, 5]
        if kind == 0:
            val = uv[k] * uv[l]
        elif kind == 1:
            val = uv[k] * du[l, c]
        else:
            val = du[k, a] * du[l, c]
        out[j] += tc[t] * val


@njit(parallel=True, cache=True)
def leapfrog_step(um1, u0, out, ti, tc, h, dt, L, rcut2, slab_peak, slab_out):
    N = u0.shape[0]
    n = u0.shape[1]
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    dt2 = dt * dt
    have_terms = ti.shape[0] > 0
    for i in prange(1, n - 1):
        uv = np.empty(N)
        du = np.empty((N, 4))
        lap = np.empty(N)
        fv = np.empty(N)
        ustar = np.empty(N)
        pk = 0.0
        po = 0.0
        x = -L + i * h
        for jj in range(1, n - 1):
            y = -L + jj * h
            for kk in range(1, n - 1):
                z = -L + kk * h
                for m in range(N):
                    c0 = u0[m, i, jj, kk]
                    uv[m] = c0
                    xp = u0[m, i + 1, jj, kk]
                    xm = u0[m, i - 1, jj, kk]
                    yp = u0[m, i, jj + 1, kk]
                    ym = u0[m, i, jj - 1, kk]
                    zp = u0[m, i, jj, kk + 1]
                    zm = u0[m, i, jj, kk - 1]
                    lap[m] = (xp + xm + yp + ym + zp + zm - 6.0 * c0) * invh2
                    du[m, 1] = (xp - xm) * inv2h
                    du[m, 2] = (yp - ym) * inv2h
                    du[m, 3] = (zp - zm) * inv2h
                    du[m, 0] = (c0 - um1[m, i, jj, kk]) / dt
                if have_terms:
                    _eval_terms(ti, tc, uv, du, fv)
                    for m in range(N):
                        prev = um1[m, i, jj, kk]
                        ustar[m] = 2.0 * uv[m] - prev + dt2 * (lap[m] + fv[m])
                        du[m, 0] = (ustar[m] - prev) / (2.0 * dt)
                    _eval_terms(ti, tc, uv, du, fv)
                else:
                    for m in range(N):
                        fv[m] = 0.0
                r2 = x * x + y * y + z * z
                for m in range(N):
                    v = 2.0 * uv[m] - um1[m, i, jj, kk] + dt2 * (lap[m] + fv[m])
                    out[m, i, jj, kk] = v
                    av = abs(v)
                    if not (av <= pk):
                        pk = av
                    if r2 > rcut2 and not (av <= po):
                        po = av
        slab_peak[i] = pk
        slab_out[i] = po


@njit(parallel=True, cache=True)
def taylor_start(f, g, out, ti, tc, h, dt, sign):
    N = f.shape[0]
    n = f.shape[1]
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for i in prange(1, n - 1):
        uv = np.empty(N)
        du = np.empty((N, 4))
        fv = np.empty(N)
        for jj in range(1, n - 1):
            for kk in range(1, n - 1):
                for m in range(N):
                    uv[m] = f[m, i, jj, kk]
                    du[m, 0] = g[m, i, jj, kk]
                    du[m, 1] = (f[m, i + 1, jj, kk] - f[m, i - 1, jj, kk]) * inv2h
                    du[m, 2] = (f[m, i, jj + 1, kk] - f[m, i, jj - 1, kk]) * inv2h
                    du[m, 3] = (f[m, i, jj, kk + 1] - f[m, i, jj, kk - 1]) * inv2h
                _eval_terms(ti, tc, uv, du, fv)
                for m in range(N):
                    c0 = f[m, i, jj, kk]
                    lap = (f[m, i + 1, jj, kk] + f[m, i - 1, jj, kk] + f[m, i, jj + 1, kk]
                           + f[m, i, jj - 1, kk] + f[m, i, jj, kk + 1] + f[m, i, jj, kk - 1]
                           - 6.0 * c0) * invh2
                    out[m, i, jj, kk] = c0 + sign * dt * g[m, i, jj, kk] + 0.5 * dt * dt * (lap + fv[m])


@njit(parallel=True, cache=True)
def energy_slabs(up, u0, um, dt, h, out):
    """out[m, i] = slab i sum of (d_t u_m)^2 (centered in time) + squared edge differences / h^2.

    Edge differences are the gradient consistent with the 7-point Laplacian;
    x-edges (i, i+1) are attributed to slab i.
    """
    N = u0.shape[0]
    n = u0.shape[1]
    invh = 1.0 / h
    inv2dt = 0.5 / dt
    for i in prange(n):
        for m in range(N):
            acc = 0.0
            for jj in range(n):
                for kk in range(n):
                    c0 = u0[m, i, jj, kk]
                    ut = (up[m, i, jj, kk] - um[m, i, jj, kk]) * inv2dt
                    acc += ut * ut
                    if i + 1 < n:
                        d = (u0[m, i + 1, jj, kk] - c0) * invh
                        acc += d * d
                    if jj + 1 < n:
                        d = (u0[m, i, jj + 1, kk] - c0) * invh
                        acc += d * d
                    if kk + 1 < n:
                        d = (u0[m, i, jj, kk + 1] - c0) * invh
                        acc += d * d
            out[m, i] = acc
