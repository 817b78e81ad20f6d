"""Second-order finite-difference solver for box u = F(u, du) on a cube.

Leapfrog in time with a 7-point Laplacian. The nonlinearity is handled by a
predictor (backward d_t) followed by a corrector (centered d_t), which keeps
the scheme second order. Hot loops live in ``_kernels_numba`` with a numpy
fallback selected by ``NULLWAVE_DISABLE_NUMBA``.
"""
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .algebra import QuadraticNonlinearity
from .radiation import InitialData

SQRT3 = math.sqrt(3.0)


class BlowupError(FloatingPointError):
    """Non-finite values appeared; ``t`` is the first time level affected."""

    def __init__(self, t: float):
        super().__init__(f"solution became non-finite at t = {t:.6g}")
        self.t = t


class ContainmentError(AssertionError):
    """The field leaked outside the expected light cone or reached the boundary."""


def get_kernels(backend: str | None = None):
    backend = backend or _accel.default_backend()
    if backend == "numba":
        if not _accel.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        from . import _kernels_numba as k
    elif backend == "numpy":
        from . import _kernels_numpy as k
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return k


def grid_size(L: float, h: float) -> int:
    n = 2.0 * L / h
    if abs(n - round(n)) > 1e-9 or n < 4:
        raise ValueError("2L/h must be an integer >= 4")
    return int(round(n)) + 1


def max_stable_dt(h: float) -> float:
    """Time step bound dt <= h / (2 sqrt 3) enforced by the solver."""
    return 0.5 * h / SQRT3


@dataclass
class WaveState:
    """Three time levels (older, middle, newest) of N fields on [-L, L]^3.

    ``t`` is the time of the newest level; derived quantities (energy, ray
    samples) refer to the middle level at ``t - dt``.
    """

    L: float
    h: float
    n: int
    dt: float
    levels: list
    t: float
    eps: float
    R: float
    terms: tuple
    backend: str
    step_count: int = 0
    last_peak: float = 0.0
    last_outside: float = 0.0
    max_leak_ratio: float = 0.0

    @property
    def N(self) -> int:
        return self.levels[0].shape[0]

    @property
    def t_mid(self) -> float:
        return self.t - self.dt

    @property
    def coords(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    def cone_radius(self, t: float | None = None) -> float:
        return (self.t if t is None else t) + self.R + 2.0 * self.h


def _sample_on_grid(data_list, L, h, n):
    N = len(data_list)
    f = np.zeros((N, n, n, n))
    g = np.zeros((N, n, n, n))
    x = -L + h * np.arange(n)
    Y, Z = np.meshgrid(x, x, indexing="ij")
    for i in range(n):
        pts = np.stack([np.full_like(Y, x[i]), Y, Z], axis=-1)
        for m, d in enumerate(data_list):
            if d.is_zero:
                continue
            phi, psi = d.sample(pts)
            f[m, i] = phi
            g[m, i] = psi
    for arr in (f, g):
        arr[:, [0, -1]] = 0.0
        arr[:, :, [0, -1]] = 0.0
        arr[:, :, :, [0, -1]] = 0.0
    return f, g


def init(F: QuadraticNonlinearity, data_list, L: float = 32.0, h: float = 0.25, dt: float = 0.0625,
         eps: float | None = None, backend: str | None = None) -> WaveState:
    """Sample eps*(phi, psi) and build levels at t = -dt, 0, dt by second-order Taylor expansion."""
    data_list = list(data_list)
    if len(data_list) != F.n_total:
        raise ValueError(f"need {F.n_total} initial data entries, got {len(data_list)}")
    n = grid_size(L, h)
    if dt <= 0 or dt > max_stable_dt(h) * (1 + 1e-12):
        raise ValueError(f"dt = {dt} violates dt <= h/(2 sqrt 3) = {max_stable_dt(h):.6g}")
    if eps is not None:
        data_list = [dataclasses.replace(d, eps=eps) for d in data_list]
    R = max((d.support_radius + float(np.linalg.norm(d.center)) for d in data_list
             if d.kind == "radial_closed_form"), default=0.0)
    if any(d.kind == "grid_sampled" for d in data_list):
        R = max(R, L)
    if R + 2 * h >= L:
        raise ValueError("data support plus margin does not fit in the cube")
    k = get_kernels(backend)
    ti, tc = F.sparse_terms()
    f, g = _sample_on_grid(data_list, L, h, n)
    older = np.zeros_like(f)
    newest = np.zeros_like(f)
    k.taylor_start(f, g, older, ti, tc, h, dt, -1.0)
    k.taylor_start(f, g, newest, ti, tc, h, dt, 1.0)
    del g
    used_eps = eps if eps is not None else max((d.eps for d in data_list), default=0.0)
    return WaveState(L, h, n, dt, [older, f, newest], dt, used_eps, R, (ti, tc),
                     backend or _accel.default_backend())


def step(state: WaveState) -> WaveState:
    """Advance one time step in place (the oldest buffer is overwritten)."""
    k = get_kernels(state.backend)
    older, middle, newest = state.levels
    t_new = state.t + state.dt
    rcut = state.cone_radius(t_new)
    if rcut >= state.L:
        raise ContainmentError(f"t + R + 2h = {rcut:.4g} reached the cube half-width L = {state.L}")
    peak = np.zeros(state.n)
    outside = np.zeros(state.n)
    ti, tc = state.terms
    k.leapfrog_step(middle, newest, older, ti, tc, state.h, state.dt, state.L, rcut * rcut, peak, outside)
    state.levels = [middle, newest, older]
    state.t = t_new
    state.step_count += 1
    pk = float(np.max(peak))
    if not np.isfinite(pk):
        raise BlowupError(t_new)
    state.last_peak = pk
    state.last_outside = float(np.max(outside))
    if pk > 0:
        state.max_leak_ratio = max(state.max_leak_ratio, state.last_outside / pk)
    return state


def energy(state: WaveState, comps=None) -> float:
    """(1/2 sum ((d_t u)^2 + |grad u|^2) h^3)^(1/2) at the middle level, summed over ``comps``.

    d_t is the centered difference of the outer levels; the gradient uses
    edge differences, which is the form the leapfrog scheme nearly conserves.
    """
    return float(np.sqrt(np.sum(energy_components(state)[_comp_index(state, comps)] ** 2)))


def energy_components(state: WaveState) -> np.ndarray:
    """Energy of each component separately."""
    k = get_kernels(state.backend)
    older, middle, newest = state.levels
    out = np.zeros((state.N, state.n))
    k.energy_slabs(newest, middle, older, state.dt, state.h, out)
    # pairwise summation over slabs keeps the result independent of thread count
    return np.sqrt(0.5 * state.h ** 3 * np.sum(out, axis=1))


def _comp_index(state, comps):
    if comps is None:
        return np.arange(state.N)
    return np.asarray(list(comps), dtype=int)


def sample_rays(state: WaveState, sigmas, omegas) -> np.ndarray:
    """r*u and r*d_a u (a = 0..3) at x = (t_mid + sigma) omega, trilinear interpolation.

    Returns an array (n_rays, N, 5) with columns (ru, rd0u, rd1u, rd2u, rd3u).
    """
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    r = state.t_mid + sigmas
    if np.any(r <= 0):
        raise ValueError("ray point must lie at positive radius")
    x = r[:, None] * omegas
    older, middle, newest = state.levels
    h, n = state.h, state.n
    idx = (x + state.L) / h
    i0 = np.floor(idx).astype(int)
    if np.any(i0 < 1) or np.any(i0 + 2 > n - 1):
        raise ValueError("ray point outside the cube interior (one-cell margin required)")
    frac = idx - i0
    off = np.arange(-1, 3)
    I = i0[:, 0, None] + off
    J = i0[:, 1, None] + off
    K = i0[:, 2, None] + off
    blk = middle[:, I[:, :, None, None], J[:, None, :, None], K[:, None, None, :]]  # (N, rays, 4,4,4)
    blk = np.moveaxis(blk, 0, 1)
    core = (slice(None), slice(None), slice(1, 3), slice(1, 3), slice(1, 3))
    Ic, Jc, Kc = I[:, 1:3], J[:, 1:3], K[:, 1:3]
    sel = (slice(None), Ic[:, :, None, None], Jc[:, None, :, None], Kc[:, None, None, :])
    ut = np.moveaxis((newest[sel] - older[sel]) / (2 * state.dt), 0, 1)
    vals = [blk[core], ut,
            (blk[:, :, 2:4, 1:3, 1:3] - blk[:, :, 0:2, 1:3, 1:3]) / (2 * h),
            (blk[:, :, 1:3, 2:4, 1:3] - blk[:, :, 1:3, 0:2, 1:3]) / (2 * h),
            (blk[:, :, 1:3, 1:3, 2:4] - blk[:, :, 1:3, 1:3, 0:2]) / (2 * h)]
    wx = np.stack([1 - frac[:, 0], frac[:, 0]], -1)
    wy = np.stack([1 - frac[:, 1], frac[:, 1]], -1)
    wz = np.stack([1 - frac[:, 2], frac[:, 2]], -1)
    out = np.stack([np.einsum("rnabc,ra,rb,rc->rn", v, wx, wy, wz) for v in vals], axis=-1)
    return out * r[:, None, None]


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(state: WaveState, path_prefix: str) -> tuple[str, str]:
    """Raw little-endian float64 (u then d_t u at the middle level) plus a JSON sidecar."""
    older, middle, newest = state.levels
    raw = path_prefix + ".bin"
    with open(raw, "wb") as fh:
        middle.astype("<f8").tofile(fh)
        ((newest - older) / (2 * state.dt)).astype("<f8").tofile(fh)
    meta = {"L": state.L, "h": state.h, "n": state.n, "N": state.N, "t": state.t_mid,
            "dt": state.dt, "eps": state.eps, "R": state.R, "fields": ["u", "ut"], "dtype": "<f8",
            "shape": [state.N, state.n, state.n, state.n]}
    side = path_prefix + ".json"
    with open(side, "w") as fh:
        json.dump(meta, fh, indent=2)
    return raw, side


@dataclass
class Snapshot:
    t: float
    L: float
    h: float
    u: np.ndarray
    ut: np.ndarray
    eps: float = 0.0

    @property
    def n(self):
        return self.u.shape[1]


def read_snapshot(sidecar: str) -> Snapshot:
    with open(sidecar) as fh:
        meta = json.load(fh)
    raw = os.path.splitext(sidecar)[0] + ".bin"
    shape = tuple(meta["shape"])
    data = np.fromfile(raw, dtype="<f8")
    size = int(np.prod(shape))
    if data.size != 2 * size:
        raise ValueError(f"snapshot {raw} has the wrong size")
    return Snapshot(meta["t"], meta["L"], meta["h"], data[:size].reshape(shape), data[size:].reshape(shape),
                    meta.get("eps", 0.0))


def snapshot_from_state(state: WaveState) -> Snapshot:
    older, middle, newest = state.levels
    return Snapshot(state.t_mid, state.L, state.h, middle.copy(), (newest - older) / (2 * state.dt), state.eps)


# ---------------------------------------------------------------------------
# driver


@dataclass
class SimulationResult:
    times: np.ndarray
    energies: np.ndarray            # (n_records, N)
    ray_times: np.ndarray
    rays: np.ndarray                # (n_ray_records, n_rays, N, 5)
    ray_sigmas: np.ndarray
    ray_omegas: np.ndarray
    max_leak_ratio: float
    blowup_t: float | None = None
    snapshots: list = field(default_factory=list)


def run(F: QuadraticNonlinearity, data_list, L: float = 32.0, h: float = 0.25, dt: float = 0.0625,
        t_max: float = 24.0, eps: float | None = None, ray_sigmas=(), ray_omegas=(), ray_t_min: float = 2.0,
        ray_every: int = 1, energy_every: int = 1, snapshot_times=(), snapshot_prefix: str | None = None,
        keep_snapshots: bool = False, abort_leak: float = 0.1, backend: str | None = None,
        progress=None) -> SimulationResult:
    """Integrate to t_max, recording energies, ray samples and optional snapshots at the middle level.

    ``ray_sigmas`` and ``ray_omegas`` are paired (one entry per ray).
    The ratio max|u| outside B(t + R + 2h) over the peak is tracked in
    ``max_leak_ratio``. The leapfrog dispersion tail always puts a small
    precursor ahead of the front, so the run is aborted with
    ContainmentError only when the ratio exceeds ``abort_leak``.
    """
    reach = max((d.support_radius + float(np.linalg.norm(d.center)) for d in data_list), default=0.0)
    if t_max + 2 * h + reach >= L:
        raise ValueError("t_max + R + 2h must stay below L")
    state = init(F, data_list, L, h, dt, eps, backend)
    sig = np.asarray(ray_sigmas, dtype=float).reshape(-1)
    om = np.asarray(ray_omegas, dtype=float).reshape(-1, 3)
    if sig.size != om.shape[0]:
        raise ValueError("ray sigmas and directions must pair up")
    snap_steps = {int(round(ts / dt)): ts for ts in snapshot_times}
    times, ens, rtimes, rvals, snaps = [], [], [], [], []
    blow = None
    n_steps = int(round(t_max / dt))

    def record(s):
        k = int(round(s.t_mid / dt))
        if k % energy_every == 0:
            times.append(s.t_mid)
            ens.append(energy_components(s))
        if sig.size and k % ray_every == 0 and s.t_mid >= ray_t_min:
            rtimes.append(s.t_mid)
            rvals.append(sample_rays(s, sig, om))
        if k in snap_steps:
            if snapshot_prefix:
                write_snapshot(s, f"{snapshot_prefix}_t{snap_steps[k]:g}")
            if keep_snapshots:
                snaps.append(snapshot_from_state(s))

    record(state)
    try:
        for it in range(n_steps):
            step(state)
            if state.last_peak > 0 and state.last_outside > abort_leak * state.last_peak:
                raise ContainmentError(
                    f"field outside B(t+R+2h) at t = {state.t:.4g}: ratio "
                    f"{state.last_outside / state.last_peak:.3g} exceeds {abort_leak:g}")
            record(state)
            if progress is not None:
                progress(state)
    except BlowupError as exc:
        blow = exc.t
    return SimulationResult(np.array(times), np.array(ens).reshape(len(times), -1), np.array(rtimes),
                            np.array(rvals).reshape((len(rtimes), sig.size, state.N, 5)), sig, om,
                            state.max_leak_ratio, blow, snaps)
