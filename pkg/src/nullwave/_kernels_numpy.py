"""Pure-numpy versions of the stencil kernels, processed in x-slab chunks."""
import numpy as np

CHUNK = 16


def _eval_terms(ti, tc, uv, du, N):
    out = [np.zeros(uv.shape[1:]) for _ in range(N)]
    for (kind, j, k, a, l, c), coef in zip(ti, tc):
        if kind == 0:
            val = uv[k] * uv[l]
        elif kind == 1:
            val = uv[k] * du[l][c]
        else:
            val = du[k][a] * du[l][c]
        out[j] += coef * val
    return np.stack(out)


def _spatial(u, i0, i1, h):
    """Laplacian and centered gradient on interior slabs i0..i1-1 (all interior j, k)."""
    c = u[:, i0:i1, 1:-1, 1:-1]
    xp, xm = u[:, i0 + 1:i1 + 1, 1:-1, 1:-1], u[:, i0 - 1:i1 - 1, 1:-1, 1:-1]
    yp, ym = u[:, i0:i1, 2:, 1:-1], u[:, i0:i1, :-2, 1:-1]
    zp, zm = u[:, i0:i1, 1:-1, 2:], u[:, i0:i1, 1:-1, :-2]
    lap = (xp + xm + yp + ym + zp + zm - 6.0 * c) / (h * h)
    grad = [(xp - xm) / (2 * h), (yp - ym) / (2 * h), (zp - zm) / (2 * h)]
    return c, lap, grad


def leapfrog_step(um1, u0, out, ti, tc, h, dt, L, rcut2, slab_peak, slab_out):
    N, n = u0.shape[0], u0.shape[1]
    coords = -L + h * np.arange(n)
    yz2 = coords[1:-1, None] ** 2 + coords[None, 1:-1] ** 2
    for i0 in range(1, n - 1, CHUNK):
        i1 = min(i0 + CHUNK, n - 1)
        c, lap, grad = _spatial(u0, i0, i1, h)
        prev = um1[:, i0:i1, 1:-1, 1:-1]
        if len(ti):
            du = [[(c[m] - prev[m]) / dt, grad[0][m], grad[1][m], grad[2][m]] for m in range(N)]
            fv = _eval_terms(ti, tc, c, du, N)
            ustar = 2.0 * c - prev + dt * dt * (lap + fv)
            for m in range(N):
                du[m][0] = (ustar[m] - prev[m]) / (2 * dt)
            fv = _eval_terms(ti, tc, c, du, N)
        else:
            fv = 0.0
        new = 2.0 * c - prev + dt * dt * (lap + fv)
        out[:, i0:i1, 1:-1, 1:-1] = new
        absn = np.abs(new).max(axis=0)
        r2 = coords[i0:i1, None, None] ** 2 + yz2[None]
        slab_peak[i0:i1] = absn.max(axis=(1, 2))
        slab_out[i0:i1] = np.where(r2 > rcut2, absn, 0.0).max(axis=(1, 2))


def taylor_start(f, g, out, ti, tc, h, dt, sign):
    N, n = f.shape[0], f.shape[1]
    for i0 in range(1, n - 1, CHUNK):
        i1 = min(i0 + CHUNK, n - 1)
        c, lap, grad = _spatial(f, i0, i1, h)
        gg = g[:, i0:i1, 1:-1, 1:-1]
        du = [[gg[m], grad[0][m], grad[1][m], grad[2][m]] for m in range(N)]
        fv = _eval_terms(ti, tc, c, du, N) if len(ti) else 0.0
        out[:, i0:i1, 1:-1, 1:-1] = c + sign * dt * gg + 0.5 * dt * dt * (lap + fv)


def energy_slabs(up, u0, um, dt, h, out):
    ut2 = (((up - um) / (2 * dt)) ** 2).sum(axis=(2, 3))
    dx = ((np.diff(u0, axis=1) / h) ** 2).sum(axis=(2, 3))
    dy = ((np.diff(u0, axis=2) / h) ** 2).sum(axis=(2, 3))
    dz = ((np.diff(u0, axis=3) / h) ** 2).sum(axis=(2, 3))
    out[:] = ut2 + dy + dz
    out[:, :-1] += dx
