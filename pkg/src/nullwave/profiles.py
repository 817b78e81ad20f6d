"""Asymptotic profile dynamics: the matrix field A[W], its exponentials,
the reduced ODE along the null cone, and the spectral classification."""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .algebra import (GCoefficients, QuadraticNonlinearity, build_B, normal_monomials, reduced_tensor,
                      sample_sphere_and_vectors)
from .linalg import cluster, eigenvalues, is_diagonalizable, matrix_exp
from .quadrature import SphereRule
from .radiation import ProfileGrid

REAL_TOL = 1e-8
NULL_TOL = 1e-10


# ---------------------------------------------------------------------------
# A[W] and its exponentials


def fd_weights(offsets, order: int = 1) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on integer ``offsets``."""
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    V = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(V, rhs)


def d_sigma(values, spacing: float, axis: int = 1) -> np.ndarray:
    """Fourth-order centered derivative; sixth-point one-sided stencils at the ends."""
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 6:
        raise ValueError("need at least 6 sigma points")
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * spacing)
    for i in (0, 1):
        w = fd_weights(np.arange(6) - i)
        out[i] = np.tensordot(w, f[:6], axes=(0, 0)) / spacing
        wr = fd_weights(np.arange(-5, 1) + i)
        out[n - 1 - i] = np.tensordot(wr, f[n - 6:], axes=(0, 0)) / spacing
    return np.moveaxis(out, 0, axis)


@dataclass
class MatrixFieldA:
    """A(sigma, omega) = B(omega, W, d_sigma W) on a profile grid: ``matrices[i_sigma, i_omega]``."""

    sigma: np.ndarray
    sphere: SphereRule
    matrices: np.ndarray
    eps: float = 1.0

    @property
    def n(self) -> int:
        return self.matrices.shape[-1]


def build_A_of_W(g: GCoefficients, W: ProfileGrid, eps: float = 1.0) -> MatrixFieldA:
    if W.n_comp != g.n_w:
        raise ValueError(f"W has {W.n_comp} components, coupling expects {g.n_w}")
    dW = d_sigma(W.values, W.d_sigma, axis=1)
    xi = np.moveaxis(W.values, 0, -1)      # (sigma, omega, n_w)
    eta = np.moveaxis(dW, 0, -1)
    omega = np.broadcast_to(W.sphere.nodes, xi.shape[:2] + (3,))
    return MatrixFieldA(W.sigma, W.sphere, build_B(g, omega, xi, eta), eps)


def theta_factor(eps: float, t) -> np.ndarray:
    """eps * log t for t >= 2, zero before."""
    t = np.asarray(t, dtype=float)
    return np.where(t >= 2.0, eps * np.log(np.maximum(t, 1.0)), 0.0)


def exp_theta(A: MatrixFieldA, t: float) -> np.ndarray:
    """exp((eps log t) A) node by node; identity for t < 2."""
    tau = float(theta_factor(A.eps, t))
    if tau == 0.0:
        return np.broadcast_to(np.eye(A.n), A.matrices.shape).copy()
    return matrix_exp(tau * A.matrices)


def rank_one_exp(p, q, tau: float, y) -> np.ndarray:
    """exp(tau q p^T) y without forming the matrix."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    pq = float(p @ q)
    py = float(p @ y)
    if pq == 0.0:
        return y + tau * py * q
    return y + py * np.expm1(pq * tau) / pq * q


def _expm1_ratio(x):
    """expm1(x)/x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, np.expm1(safe) / safe)


def exp_closed_form(example: str, tau, zeta, dzeta, omega) -> np.ndarray:
    """Closed-form exp(tau A) for the three model couplings.

    ``zeta`` is the scalar profile W and ``dzeta`` its sigma-derivative.
    """
    tau = np.asarray(tau, dtype=float)
    shape = np.broadcast(tau, zeta, dzeta, np.asarray(omega)[..., 0]).shape
    out = np.zeros(shape + (2, 2))
    if example == "simplestEx":
        w1 = np.asarray(omega)[..., 0]
        w2 = np.asarray(omega)[..., 1]
        x = -0.5 * tau * w1 * zeta
        out[..., 0, 0] = np.exp(x)
        out[..., 1, 0] = -0.5 * tau * zeta * w2 * _expm1_ratio(x)
        out[..., 1, 1] = 1.0
    elif example == "LogEx":
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 0, 1] = tau * dzeta
    elif example == "RotEx":
        th = tau * dzeta
        out[..., 0, 0] = np.cos(th)
        out[..., 0, 1] = np.sin(th)
        out[..., 1, 0] = -np.sin(th)
        out[..., 1, 1] = np.cos(th)
    else:
        raise ValueError(f"no closed form for {example!r}")
    return out


# ---------------------------------------------------------------------------
# reduced system along the cone


@dataclass
class ReducedResult:
    tau: float
    P: ProfileGrid
    U: ProfileGrid
    blowup_tau: float | None
    history_tau: np.ndarray
    history_max: np.ndarray
    steps: int


def _U_from_P(P: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """U(sigma) = -integral_sigma^{sigma_max} P, i.e. U vanishes at the right end."""
    rev = P[:, ::-1]
    cum = cumulative_trapezoid(rev, sigma[::-1], axis=1, initial=0.0)
    return cum[:, ::-1]


def integrate_reduced_system(F: QuadraticNonlinearity, P0: ProfileGrid, tau_end: float, dtau: float = 1e-3,
                             threshold: float = 1e8, record_every: int = 1) -> ReducedResult:
    """RK4 for d_tau P = -F_red(omega, U, P)/2 on every (sigma, omega) node.

    Step sizes shrink near a singularity so that the first time max|P|
    exceeds ``threshold`` is resolved to well under 1e-3 relative.
    """
    if P0.n_comp != F.n_total:
        raise ValueError("profile components do not match the system")
    if dtau <= 0 or tau_end < 0:
        raise ValueError("need dtau > 0 and tau_end >= 0")
    T = reduced_tensor(F)
    K = np.einsum("jvwm,om->ojvw", T, normal_monomials(P0.sphere.nodes))
    null = not np.any(T)
    uses_X = np.any(T[:, :F.n_total]) or np.any(T[:, :, :F.n_total])
    sigma = P0.sigma

    # K is sparse for the usual presets: keep only the (j, v, w) slots that occur
    terms = [(j, v, w, K[:, j, v, w]) for j, v, w in zip(*np.nonzero(np.any(K != 0, axis=0)))]

    def rhs(P):
        out = np.zeros_like(P)
        if null:
            return out
        X = _U_from_P(P, sigma) if uses_X else np.zeros_like(P)
        Z = np.concatenate([X, P], axis=0)
        for j, v, w, k in terms:
            out[j] += k * Z[v] * Z[w]
        return -0.5 * out

    P = P0.values.copy()
    tau = 0.0
    hist_t, hist_m = [0.0], [float(np.max(np.abs(P)))]
    blowup = None
    steps = 0
    while tau < tau_end - 1e-14 * max(1.0, tau_end):
        h = min(dtau, tau_end - tau)
        k1 = rhs(P)
        pmax = np.max(np.abs(P))
        rmax = np.max(np.abs(k1))
        if rmax > 0 and pmax > 0:
            h = min(h, 0.05 * pmax / rmax) if 0.05 * pmax / rmax < dtau else h
        while True:
            with np.errstate(over="ignore", invalid="ignore"):
                k2 = rhs(P + 0.5 * h * k1)
                k3 = rhs(P + 0.5 * h * k2)
                k4 = rhs(P + h * k3)
                Pn = P + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if np.all(np.isfinite(Pn)):
                break
            h *= 0.5
            if h < 1e-14:
                break
        P, tau = Pn, tau + h
        steps += 1
        m = float(np.max(np.abs(P))) if np.all(np.isfinite(P)) else np.inf
        if record_every and steps % record_every == 0:
            hist_t.append(tau)
            hist_m.append(m)
        if m > threshold:
            blowup = tau
            break
    U = _U_from_P(np.where(np.isfinite(P), P, 0.0), sigma)
    return ReducedResult(tau, ProfileGrid(sigma, P0.sphere, P), ProfileGrid(sigma, P0.sphere, U),
                         blowup, np.array(hist_t), np.array(hist_m), steps)


@dataclass
class CharacteristicResult:
    value: float
    tail_bound: float
    constant: float
    t_start: float


def characteristic_start(sigma: float) -> float:
    """Start time max(2, -2 sigma) of the backward-controlled characteristic integral."""
    return max(2.0, -2.0 * sigma)


def characteristic_integrate(h, sigma: float, phi_start: float, mu: float, t_end: float = 400.0,
                             n_panels: int = 200, t_start: float | None = None) -> CharacteristicResult:
    """Phi = phi(t_start) + integral_{t_start}^inf h(t) dt for |h| <~ C (1 + 2t + sigma)^-mu.

    The finite part uses Gauss-Legendre panels on a geometric partition; the
    tail beyond ``t_end`` is extrapolated with the local power law, and its
    bound C (1 + 2 t_end + sigma)^{1-mu} / (2 (mu - 1)) is returned.
    """
    if mu <= 1.0:
        raise ValueError("decay exponent mu must exceed 1")
    t0 = characteristic_start(sigma) if t_start is None else t_start
    if t_end <= t0:
        raise ValueError("t_end must exceed the start time")
    edges = t0 + (t_end - t0) * (np.geomspace(1.0, 1.0 + (t_end - t0), n_panels + 1) - 1.0) / (t_end - t0)
    x, w = np.polynomial.legendre.leggauss(8)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x
    weights = 0.5 * (b - a) * w
    vals = np.asarray(h(nodes), dtype=float)
    finite = float(np.sum(vals * weights))
    env = (1.0 + 2.0 * nodes + sigma) ** mu
    C = float(np.max(np.abs(vals) * env))
    base = 1.0 + 2.0 * t_end + sigma
    h_end = float(np.asarray(h(np.array([t_end])), dtype=float)[0])
    tail = h_end * base / (2.0 * (mu - 1.0))
    bound = C * base ** (1.0 - mu) / (2.0 * (mu - 1.0))
    return CharacteristicResult(phi_start + finite + tail, bound, C, t0)


# ---------------------------------------------------------------------------
# spectral classification


@dataclass
class ClassificationReport:
    verdict: str
    max_real_part: float
    b_norm_max: float
    counts: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    @property
    def asymptotically_free(self) -> bool:
        return self.verdict == "null"


def _projected(g: GCoefficients, beta) -> GCoefficients:
    """Replace the leading block rows by beta_j sum_m beta_m (row m), beta normalized."""

    def bhat(omega):
        b = np.asarray(beta(omega), dtype=float)
        nrm = np.linalg.norm(b, axis=-1, keepdims=True)
        return b / np.where(nrm > 0, nrm, 1.0)

    def cf(omega):
        b = bhat(omega)
        m = b.shape[-1]
        c = np.asarray(g.c(omega))[..., :m, :m, :, :]
        return np.einsum("...j,...m,...mkal->...jkal", b, b, c)

    def df(omega):
        b = bhat(omega)
        m = b.shape[-1]
        d = np.asarray(g.d(omega))[..., :m, :m, :, :, :]
        return np.einsum("...j,...m,...mkalb->...jkalb", b, b, d)

    probe = np.asarray(beta(np.array([0.0, 0.0, 1.0])))
    return GCoefficients(probe.shape[-1], g.n_w, cf, df)


def _sample_type(B, eigs):
    scale = float(np.linalg.norm(B, 2))
    if np.max(np.abs(eigs)) <= max(REAL_TOL, 1e-7 * scale):
        return "nilpotent"
    if is_diagonalizable(B, eigs):
        return "rotation"
    return "defective"


def classify(g: GCoefficients, beta=None, samples: int = 2048, seed: int = 0) -> ClassificationReport:
    """Sample B(omega, xi, eta) over the sphere and the unit balls and classify its spectrum.

    With ``beta`` the coupling is first projected onto beta (rank-one form).
    B(-xi, -eta) = -B(xi, eta), so any nonzero real part counts as positive.
    """
    if beta is not None:
        g = _projected(g, beta)
    if g.n_w == 0:
        return ClassificationReport("null", 0.0, 0.0, {"zero": samples})
    omega, box = sample_sphere_and_vectors(samples, 2 * g.n_w, seed)
    xi, eta = box[:, :g.n_w], box[:, g.n_w:]
    xi = xi / np.maximum(1.0, np.linalg.norm(xi, axis=1, keepdims=True))
    eta = eta / np.maximum(1.0, np.linalg.norm(eta, axis=1, keepdims=True))
    Bs = build_B(g, omega, xi, eta)
    norms = np.linalg.norm(Bs, ord=2, axis=(-2, -1))
    bmax = float(np.max(norms))
    if bmax < NULL_TOL:
        return ClassificationReport("null", 0.0, bmax, {"zero": samples})
    eigs = eigenvalues(Bs)
    re = np.abs(eigs.real).max(axis=-1)
    counts = {"zero": 0, "nilpotent": 0, "rotation": 0, "defective": 0, "real_part": 0}
    witnesses = []
    i_max = int(np.argmax(re))
    max_re = float(re[i_max])
    if max_re > REAL_TOL:
        counts["real_part"] = int(np.sum(re > REAL_TOL))
        witnesses.append({"type": "real_part", "omega": omega[i_max], "xi": xi[i_max], "eta": eta[i_max],
                          "eigenvalues": eigs[i_max]})
        return ClassificationReport("positive_real_part", max_re, bmax, counts, witnesses)
    seen = set()
    for i in range(samples):
        if norms[i] < NULL_TOL:
            counts["zero"] += 1
            continue
        kind = _sample_type(Bs[i], eigs[i])
        counts[kind] += 1
        if kind not in seen:
            seen.add(kind)
            witnesses.append({"type": kind, "omega": omega[i], "xi": xi[i], "eta": eta[i], "eigenvalues": eigs[i]})
    if counts["defective"] == 0 and counts["rotation"] == 0:
        verdict = "nilpotent_log_growth"
    elif counts["defective"] == 0 and counts["nilpotent"] == 0:
        verdict = "imaginary_rotation"
    else:
        verdict = "mixed"
    return ClassificationReport(verdict, max_re, bmax, counts, witnesses)


# ---------------------------------------------------------------------------
# convergent subspace


def z_membership(B, y, tol: float = 1e-8) -> tuple[bool, float]:
    """Whether exp(tau B) y converges as tau -> inf, i.e. y in ker B + stable generalized eigenspaces.

    Returns (member, normalized residual |B P y| / (|B P| |y|)) with
    P = prod over stable eigenvalues mu of (B - mu)^n.
    """
    B = np.asarray(B, dtype=float)
    y = np.asarray(y, dtype=float)
    n = B.shape[0]
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return True, 0.0
    scale = max(1.0, float(np.linalg.norm(B, 2)))
    eigs = eigenvalues(B)
    M = B.astype(complex)
    for mu, _ in cluster(eigs, 1e-6 * scale):
        if mu.real < -REAL_TOL:
            step = np.linalg.matrix_power(B - mu * np.eye(n), n)
            M = M @ (step / max(1.0, np.linalg.norm(step, 2)))
    normM = float(np.linalg.norm(M, 2))
    if normM < 1e-14 * scale:
        return True, 0.0
    res = float(np.linalg.norm(M @ y) / (normM * ny))
    return res < tol, res
