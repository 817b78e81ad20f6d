"""Post-processing of simulations: asymptotic profiles from ray samples,
modified (rotated/sheared) profile estimates, energy-growth fits and
shell-energy comparisons against predicted profiles."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .algebra import omega4
from .linalg import matrix_exp
from .profiles import MatrixFieldA, theta_factor
from .quadrature import direction_set
from .radiation import ProfileGrid


@dataclass
class ResidualModel:
    """Decay model |residual| ~ C t^rate with the exponents (lambda, rho) it is judged against."""

    lambda_: float = 0.04
    rho: float = 0.7
    fitted_rate: float = float("nan")
    fitted_constant: float = float("nan")

    def __post_init__(self):
        if not 0.0 < self.lambda_ < 0.05:
            raise ValueError("lambda must lie in (0, 1/20)")
        if not 0.5 < self.rho <= 1.0 - 6.0 * self.lambda_ + 1e-15:
            raise ValueError("rho must lie in (1/2, 1 - 6 lambda]")


def fit_power_law(t, y) -> tuple[float, float]:
    """Least-squares fit y ~ C t^p in log-log coordinates; returns (p, C)."""
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    ok = (t > 0) & (y > 0) & np.isfinite(y)
    if np.sum(ok) < 2:
        return float("nan"), float("nan")
    p, c = np.polyfit(np.log(t[ok]), np.log(y[ok]), 1)
    return float(p), float(np.exp(c))


# ---------------------------------------------------------------------------
# ray bookkeeping


def ray_product(sigmas, omegas) -> tuple[np.ndarray, np.ndarray]:
    """All (sigma, omega) pairs, sigma-major."""
    sigmas = np.asarray(sigmas, dtype=float)
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    return np.repeat(sigmas, omegas.shape[0]), np.tile(omegas, (sigmas.size, 1))


def _as_grid(ray_sigmas, ray_omegas):
    """Recover the (sigma grid, direction set) product structure of a ray list."""
    sig = np.unique(np.round(ray_sigmas, 12))
    dirs = []
    for o in ray_omegas:
        if not any(np.allclose(o, d, atol=1e-12) for d in dirs):
            dirs.append(o)
    dirs = np.array(dirs)
    if sig.size * len(dirs) != len(ray_sigmas):
        raise ValueError("rays do not form a sigma x direction product")
    si = np.searchsorted(sig, np.round(ray_sigmas, 12))
    oi = np.array([int(np.argmin(np.linalg.norm(dirs - o, axis=1))) for o in ray_omegas])
    return sig, dirs, si, oi


def _late_window(times, fraction):
    tmax = times[-1]
    return times >= tmax * (1.0 - fraction)


def _check_span(times, fraction):
    if times.size < 4 or times[0] > times[-1] * (1.0 - fraction) or np.sum(_late_window(times, fraction)) < 2:
        raise ValueError("rays must cover the late window [(1 - f) t_max, t_max] with several samples")


@dataclass
class WExtraction:
    W: ProfileGrid
    times: np.ndarray
    residual: np.ndarray
    model: ResidualModel
    window: tuple


def extract_W(ray_times, rays, ray_sigmas, ray_omegas, comps, eps: float, reference: ProfileGrid | None = None,
              late_fraction: float = 0.5, model: ResidualModel | None = None) -> WExtraction:
    """W(sigma, omega) = late-window mean of r w / eps on the rays.

    ``rays`` has shape (n_times, n_rays, N, 5). The residual series is
    max over rays of |r w/eps - W_ref|, with W_ref the ``reference`` profile
    (e.g. the free radiation field) when given, else the late mean itself.
    """
    times = np.asarray(ray_times, dtype=float)
    _check_span(times, late_fraction)
    sig, dirs, si, oi = _as_grid(ray_sigmas, ray_omegas)
    comps = list(comps)
    vals = rays[:, :, comps, 0] / eps                              # (T, rays, n_w)
    late = _late_window(times, late_fraction)
    mean = vals[late].mean(axis=0)
    grid = np.zeros((len(comps), sig.size, dirs.shape[0]))
    grid[:, si, oi] = mean.T
    W = ProfileGrid(sig, direction_set(dirs), grid)
    if reference is not None:
        ref = reference.interpolate(np.asarray(ray_sigmas), np.asarray(ray_omegas))  # (n_w, rays)
        ref = ref.T
    else:
        ref = mean
    residual = np.max(np.abs(vals - ref[None]), axis=(1, 2))
    model = model or ResidualModel()
    rate, const = fit_power_law(times, residual)
    model.fitted_rate, model.fitted_constant = rate, const
    return WExtraction(W, times, residual, model, (float(times[late][0]), float(times[-1])))


@dataclass
class VExtraction:
    dV: ProfileGrid
    times: np.ndarray
    modified: np.ndarray       # (T, rays, n_v) estimates of d_sigma V
    unmodified: np.ndarray
    window: tuple
    fallback_rays: int = 0

    def late_variance(self, late_fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
        """Per-ray variance (summed over components) of the modified and unmodified estimates."""
        late = _late_window(self.times, late_fraction)
        vm = self.modified[late].var(axis=0).sum(axis=-1)
        vu = self.unmodified[late].var(axis=0).sum(axis=-1)
        return vm, vu


def _field_at_rays(A: MatrixFieldA, ray_sigmas, ray_omegas) -> np.ndarray:
    """A matrices at each ray: exact grid lookup when the grid matches, else interpolation."""
    n = A.n
    grid = ProfileGrid(A.sigma, A.sphere, np.moveaxis(A.matrices.reshape(A.sigma.size, A.sphere.size, n * n), -1, 0))
    vals = grid.interpolate(np.asarray(ray_sigmas), np.asarray(ray_omegas))
    return np.moveaxis(vals, 0, -1).reshape(-1, n, n)


def extract_modified_V(ray_times, rays, ray_sigmas, ray_omegas, comps, eps: float, A: MatrixFieldA | None,
                       late_fraction: float = 0.5) -> VExtraction:
    """Estimate d_sigma V from r d_a v = eps w_a exp(Theta) d_sigma V + o(1).

    At each sample the rotation exp(-Theta(t)) is undone and the four
    channels a = 0..3 are combined by least squares (weights w_a, w_0 = -1).
    """
    times = np.asarray(ray_times, dtype=float)
    _check_span(times, late_fraction)
    sig, dirs, si, oi = _as_grid(ray_sigmas, ray_omegas)
    comps = list(comps)
    y = rays[:, :, comps, 1:] / eps                        # (T, rays, n_v, 4)
    w = omega4(np.asarray(ray_omegas))                     # (rays, 4)
    norm2 = np.sum(w * w, axis=-1)
    fallback = norm2 < 1e-12
    raw = np.einsum("trka,ra->trk", y, w) / np.where(fallback, 1.0, norm2)[None, :, None]
    raw[:, fallback] = -y[:, fallback][..., 0]
    if A is None:
        mod = raw.copy()
    else:
        Ar = _field_at_rays(A, ray_sigmas, ray_omegas)     # (rays, n, n)
        mod = np.empty_like(raw)
        for it, t in enumerate(times):
            tau = float(theta_factor(A.eps, t))
            E = matrix_exp(-tau * Ar)
            mod[it] = np.einsum("rkl,rl->rk", E, raw[it])
    late = _late_window(times, late_fraction)
    mean = mod[late].mean(axis=0)
    grid = np.zeros((len(comps), sig.size, dirs.shape[0]))
    grid[:, si, oi] = mean.T
    return VExtraction(ProfileGrid(sig, direction_set(dirs), grid), times, mod, raw,
                       (float(times[late][0]), float(times[-1])), int(np.sum(fallback)))


# ---------------------------------------------------------------------------
# energy growth


@dataclass
class GrowthFit:
    fit_type: str
    params: dict
    r2: float
    window: tuple

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _r2(y, pred):
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    # a series constant up to roundoff has no variance to explain
    if ss_tot <= 1e-28 * float(np.sum(y ** 2)):
        return 1.0 if ss_res <= 1e-28 * float(np.sum(y ** 2)) else 0.0
    return 1.0 - ss_res / ss_tot


def fit_energy_growth(t, E, model: str) -> GrowthFit:
    """Fit E(t) by ``power_in_t`` (C (1+t)^p), ``log_linear`` (a + b log(1+t)) or ``constant``.

    R^2 is computed on the fitted quantity (log E for the power law, E otherwise).
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if t.size != E.size or t.size < 3:
        raise ValueError("need matching series of at least three points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must increase strictly")
    if t[0] <= 0 or t[-1] < 4.0 * t[0]:
        raise ValueError("fit window must span at least a factor of 4 in t")
    x = np.log1p(t)
    window = (float(t[0]), float(t[-1]))
    if model == "power_in_t":
        if np.any(E <= 0):
            raise ValueError("power-law fit needs positive energies")
        p, c = np.polyfit(x, np.log(E), 1)
        return GrowthFit(model, {"exponent": float(p), "prefactor": float(np.exp(c))},
                         _r2(np.log(E), c + p * x), window)
    if model == "log_linear":
        b, a = np.polyfit(x, E, 1)
        return GrowthFit(model, {"slope": float(b), "intercept": float(a)}, _r2(E, a + b * x), window)
    if model == "constant":
        m = float(np.mean(E))
        return GrowthFit(model, {"mean": m, "max_rel_deviation": float(np.max(np.abs(E - m)) / abs(m))},
                         _r2(E, np.full_like(E, m)), window)
    raise ValueError(f"unknown growth model {model!r}")


# ---------------------------------------------------------------------------
# shell comparison


@dataclass
class ShellComparison:
    times: np.ndarray
    residual: np.ndarray
    reference_norm: np.ndarray
    rate: float = float("nan")
    constant: float = float("nan")
    extra: dict = field(default_factory=dict)


def _interp_matrices(A: MatrixFieldA, sigma, omega):
    n = A.n
    grid = ProfileGrid(A.sigma, A.sphere,
                       np.moveaxis(A.matrices.reshape(A.sigma.size, A.sphere.size, n * n), -1, 0))
    vals = grid.interpolate(sigma, omega)
    return np.moveaxis(vals, 0, -1).reshape(sigma.shape + (n, n))


def shell_residual(snapshot, comps, dV: ProfileGrid, eps: float, A: MatrixFieldA | None = None,
                   chunk: int = 8) -> tuple[float, float]:
    """L^2 norm over the grid of d_a v - eps w_a r^{-1} exp(Theta) d_sigma V(r - t, omega), summed over a.

    Returns (residual, norm of the simulated d_a v).
    """
    comps = list(comps)
    t = snapshot.t
    h = snapshot.h
    n = snapshot.n
    x = -snapshot.L + h * np.arange(n)
    tau = float(theta_factor(A.eps, t)) if A is not None else 0.0
    res2 = 0.0
    ref2 = 0.0
    for i0 in range(1, n - 1, chunk):
        i1 = min(i0 + chunk, n - 1)
        sl = slice(i0, i1)
        X, Y, Z = np.meshgrid(x[sl], x[1:-1], x[1:-1], indexing="ij")
        pts = np.stack([X, Y, Z], -1)
        r = np.linalg.norm(pts, axis=-1)
        r_safe = np.where(r > 0, r, 1.0)
        om = pts / r_safe[..., None]
        sig = r - t
        u = snapshot.u[comps]
        dv = np.stack([snapshot.ut[comps][:, sl, 1:-1, 1:-1],
                       (u[:, i0 + 1:i1 + 1, 1:-1, 1:-1] - u[:, i0 - 1:i1 - 1, 1:-1, 1:-1]) / (2 * h),
                       (u[:, sl, 2:, 1:-1] - u[:, sl, :-2, 1:-1]) / (2 * h),
                       (u[:, sl, 1:-1, 2:] - u[:, sl, 1:-1, :-2]) / (2 * h)], axis=-1)  # (c, ..., 4)
        pred = np.zeros_like(dv)
        inside = (sig >= dV.sigma[0]) & (sig <= dV.sigma[-1]) & (r > 0)
        if np.any(inside):
            P = dV.interpolate(sig[inside], om[inside])                       # (c, m)
            if A is not None and tau != 0.0:
                Am = _interp_matrices(A, sig[inside], om[inside])             # (m, c, c)
                P = np.einsum("mkl,lm->km", matrix_exp(tau * Am), P)
            w = omega4(om[inside])
            pred[:, inside, :] = eps * P[..., None] * w[None] / r[inside][None, :, None]
        res2 += float(np.sum((dv - pred) ** 2))
        ref2 += float(np.sum(dv ** 2))
    return float(np.sqrt(res2 * h ** 3)), float(np.sqrt(ref2 * h ** 3))


def shell_energy_compare(snapshots, comps, dV: ProfileGrid, eps: float, A: MatrixFieldA | None = None,
                         t_list=None) -> ShellComparison:
    """Residual series over snapshots (optionally restricted to times in ``t_list``) with a power-law fit."""
    times, res, ref = [], [], []
    for s in snapshots:
        if t_list is not None and not np.any(np.isclose(s.t, t_list, atol=1e-9)):
            continue
        r, nrm = shell_residual(s, comps, dV, eps, A)
        times.append(s.t)
        res.append(r)
        ref.append(nrm)
    times = np.array(times)
    res = np.array(res)
    rate, const = fit_power_law(times, res) if times.size >= 2 else (float("nan"), float("nan"))
    return ShellComparison(times, res, np.array(ref), rate, const)
