"""Quadratic nonlinearities F(u, du) for N-component wave systems.

Derivative index 0 is time, 1..3 are space. On the null cone the
derivative du_k is replaced by (-Y_k, w1 Y_k, w2 Y_k, w3 Y_k), i.e. the
time slot carries w0 = -1.
"""
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

# monomials w1^e1 w2^e2 w3^e3 of degree <= 2 with e3 <= 1 (a basis modulo |w|^2 = 1)
NORMAL_MONOMIALS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
                    (2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1)]
_MONO_INDEX = {m: i for i, m in enumerate(NORMAL_MONOMIALS)}


def omega4(omega: np.ndarray) -> np.ndarray:
    """(-1, w1, w2, w3) for unit vectors w of shape (..., 3)."""
    omega = np.asarray(omega, dtype=float)
    return np.concatenate([-np.ones(omega.shape[:-1] + (1,)), omega], axis=-1)


def _check_unit(omega, tol=1e-12):
    nrm = np.linalg.norm(np.asarray(omega, dtype=float), axis=-1)
    if np.any(np.abs(nrm - 1.0) > tol):
        raise ValueError("omega must lie on the unit sphere")


# ---------------------------------------------------------------------------
# quadratic nonlinearities


@dataclass
class QuadraticNonlinearity:
    """F_j = uu[j,k,l] u_k u_l + udu[j,k,l,a] u_k d_a u_l + dudu[j,k,b,l,c] d_b u_k d_c u_l.

    Components 0..n_v-1 are the v-block, n_v..n_total-1 the w-block.
    """

    n_total: int
    n_v: int
    uu: np.ndarray
    udu: np.ndarray
    dudu: np.ndarray

    @classmethod
    def zeros(cls, n_total: int, n_v: int | None = None) -> "QuadraticNonlinearity":
        n = n_total
        return cls(n, n if n_v is None else n_v, np.zeros((n, n, n)),
                   np.zeros((n, n, n, 4)), np.zeros((n, n, 4, n, 4)))

    def __post_init__(self):
        n = self.n_total
        self.uu = np.asarray(self.uu, dtype=float)
        self.udu = np.asarray(self.udu, dtype=float)
        self.dudu = np.asarray(self.dudu, dtype=float)
        if n < 1 or not (1 <= self.n_v <= n):
            raise ValueError("need n_total >= 1 and 1 <= n_v <= n_total")
        if (self.uu.shape != (n, n, n) or self.udu.shape != (n, n, n, 4)
                or self.dudu.shape != (n, n, 4, n, 4)):
            raise ValueError("coefficient tensors have the wrong shape")

    @property
    def n_w(self) -> int:
        return self.n_total - self.n_v

    @property
    def derivative_only(self) -> bool:
        return not np.any(self.uu) and not np.any(self.udu)

    def check_block_form(self):
        """When a w-block exists: v-equations contain only d v d v and w d v terms."""
        if self.n_w == 0:
            return
        nv = self.n_v
        if np.any(self.uu[:nv]):
            raise ValueError("v-equations may not contain undifferentiated products u_k u_l")
        bad = self.udu[:nv].copy()
        bad[:, nv:, :nv, :] = 0.0
        if np.any(bad):
            raise ValueError("v-equations may only contain u_k d_a u_l with u_k in w and u_l in v")
        q = self.dudu[:nv]
        if np.any(q[:, nv:, :, nv:, :]):
            raise ValueError("v-equations may not contain d w d w products")

    # builders (0-based component indices) ---------------------------------

    def add_Q0(self, j, k, l, coef=1.0):
        self.dudu[j, k, 0, l, 0] += coef
        for i in (1, 2, 3):
            self.dudu[j, k, i, l, i] -= coef
        return self

    def add_Qab(self, j, a, b, k, l, coef=1.0):
        self.dudu[j, k, a, l, b] += coef
        self.dudu[j, k, b, l, a] -= coef
        return self

    def copy(self):
        return QuadraticNonlinearity(self.n_total, self.n_v, self.uu.copy(), self.udu.copy(), self.dudu.copy())

    def sparse_terms(self):
        """Nonzero terms as parallel arrays (kind, j, k, a, l, c, coef); kind 0=uu, 1=udu, 2=dudu.

        For uu the derivative slots are unused, for udu ``c`` is the derivative on u_l.
        """
        rows = []
        for j, k, l in zip(*np.nonzero(self.uu)):
            rows.append((0, j, k, 0, l, 0, self.uu[j, k, l]))
        for j, k, l, a in zip(*np.nonzero(self.udu)):
            rows.append((1, j, k, 0, l, a, self.udu[j, k, l, a]))
        for j, k, b, l, c in zip(*np.nonzero(self.dudu)):
            rows.append((2, j, k, b, l, c, self.dudu[j, k, b, l, c]))
        ints = np.array([r[:6] for r in rows], dtype=np.int64).reshape(-1, 6)
        coef = np.array([r[6] for r in rows], dtype=float)
        return ints, coef


def eval_F(F: QuadraticNonlinearity, u, du) -> np.ndarray:
    """F(u, du) for u of shape (..., N) and du of shape (..., N, 4)."""
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    N = F.n_total
    if u.shape[-1:] != (N,) or du.shape[-2:] != (N, 4):
        raise ValueError(f"expected u (..., {N}) and du (..., {N}, 4), got {u.shape} and {du.shape}")
    return (np.einsum("jkl,...k,...l->...j", F.uu, u, u)
            + np.einsum("jkla,...k,...la->...j", F.udu, u, du)
            + np.einsum("jkblc,...kb,...lc->...j", F.dudu, du, du))


def eval_F_red(F: QuadraticNonlinearity, omega, X, Y) -> np.ndarray:
    """Reduced nonlinearity F(X, du) with du_k = (-Y_k, w Y_k)."""
    _check_unit(omega)
    du = np.asarray(Y, dtype=float)[..., :, None] * omega4(omega)[..., None, :]
    return eval_F(F, X, du)


# ---------------------------------------------------------------------------
# exact null condition


def _frac(x) -> Fraction:
    return Fraction(float(x))


def reduced_normal_form(F: QuadraticNonlinearity) -> list[dict]:
    """Exact normal form of F_red modulo |w|^2 = 1, one dict per equation.

    Keys are (v1, v2, e1, e2, e3) with variables X_k -> k, Y_k -> N + k and
    v1 <= v2; values are Fractions (floats converted exactly).
    """
    N = F.n_total
    out = []

    def add(poly, v1, v2, exps, coef):
        if v1 > v2:
            v1, v2 = v2, v1
        e = list(exps)
        terms = [(tuple(e), coef)]
        if e[2] >= 2:
            base = (e[0], e[1], e[2] - 2)
            terms = [(base, coef), ((base[0] + 2, base[1], base[2]), -coef),
                     ((base[0], base[1] + 2, base[2]), -coef)]
        for ex, cf in terms:
            key = (v1, v2) + ex
            poly[key] = poly.get(key, Fraction(0)) + cf

    def omega_factor(a):
        # (sign, exponent vector) of w_a with w_0 = -1
        if a == 0:
            return -1, (0, 0, 0)
        e = [0, 0, 0]
        e[a - 1] = 1
        return 1, tuple(e)

    for j in range(N):
        poly: dict = {}
        for k, l in zip(*np.nonzero(F.uu[j])):
            add(poly, k, l, (0, 0, 0), _frac(F.uu[j, k, l]))
        for k, l, a in zip(*np.nonzero(F.udu[j])):
            s, e = omega_factor(a)
            add(poly, k, N + l, e, s * _frac(F.udu[j, k, l, a]))
        for k, b, l, c in zip(*np.nonzero(F.dudu[j])):
            s1, e1 = omega_factor(b)
            s2, e2 = omega_factor(c)
            e = tuple(x + y for x, y in zip(e1, e2))
            add(poly, N + k, N + l, e, s1 * s2 * _frac(F.dudu[j, k, b, l, c]))
        out.append({k: v for k, v in poly.items() if v != 0})
    return out


@dataclass
class NullConditionResult:
    holds: bool
    witness: dict | None = None
    normal_form: list = field(default_factory=list)


def _witness_candidates(N, rng):
    axes = [np.eye(3)[i] * s for s in (1.0, -1.0) for i in range(3)]
    vecs = [np.ones(N)] + [np.eye(N)[k] for k in range(N)]
    for k, l in itertools.combinations(range(N), 2):
        vecs.append(np.eye(N)[k] + np.eye(N)[l])
        vecs.append(np.eye(N)[k] - np.eye(N)[l])
    xs = [np.zeros(N)] + vecs
    return axes, vecs, xs


def check_null_condition(F: QuadraticNonlinearity, seed: int = 0) -> NullConditionResult:
    """Decide exactly whether F_red vanishes identically on the sphere.

    When it does not, return the sample (omega, X, Y) of largest |F_red|
    among coordinate directions and simple integer vectors (falling back to
    pseudo-random samples if those all vanish).
    """
    nf = reduced_normal_form(F)
    if all(not p for p in nf):
        return NullConditionResult(True, None, nf)
    N = F.n_total
    rng = np.random.default_rng(seed)
    axes, vecs, xs = _witness_candidates(N, rng)
    best, arg = 0.0, None
    if len(vecs) * len(xs) <= 20000:
        for om in axes:
            for Y in vecs:
                for X in xs:
                    val = float(np.linalg.norm(eval_F_red(F, om, X, Y)))
                    if val > best + 1e-14:
                        best, arg = val, (om, X, Y)
    if arg is None:
        om = rng.normal(size=(4096, 3))
        om /= np.linalg.norm(om, axis=1, keepdims=True)
        X = rng.uniform(-1, 1, size=(4096, N))
        Y = rng.uniform(-1, 1, size=(4096, N))
        vals = np.linalg.norm(eval_F_red(F, om, X, Y), axis=-1)
        i = int(np.argmax(vals))
        arg = (om[i], X[i], Y[i])
    om, X, Y = arg
    val = eval_F_red(F, om, X, Y)
    witness = {"omega": np.asarray(om), "X": np.asarray(X), "Y": np.asarray(Y), "F_red": val}
    return NullConditionResult(False, witness, nf)


# ---------------------------------------------------------------------------
# null forms


def eval_null_form(kind, dphi, dpsi) -> np.ndarray:
    """Q0 (kind "Q0") or Q_ab (kind (a, b)) of gradients of shape (..., 4)."""
    dphi = np.asarray(dphi, dtype=float)
    dpsi = np.asarray(dpsi, dtype=float)
    if kind == "Q0":
        return dphi[..., 0] * dpsi[..., 0] - np.sum(dphi[..., 1:] * dpsi[..., 1:], axis=-1)
    a, b = kind
    if not (0 <= a < b <= 3):
        raise ValueError("null form indices need 0 <= a < b <= 3")
    return dphi[..., a] * dpsi[..., b] - dphi[..., b] * dpsi[..., a]


NULL_FORM_KINDS = ["Q0"] + [(a, b) for a in range(4) for b in range(a + 1, 4)]


@dataclass
class NullFormDecomposition:
    """F_j = sum_{k<=l} r0[j,k,l] Q0(u_k,u_l) + sum_{a<b, k<l} rab[j,a,b,k,l] Q_ab(u_k,u_l)."""

    r0: np.ndarray
    rab: np.ndarray

    def to_nonlinearity(self, n_v: int | None = None) -> QuadraticNonlinearity:
        N = self.r0.shape[0]
        F = QuadraticNonlinearity.zeros(N, n_v)
        for j, k, l in zip(*np.nonzero(self.r0)):
            F.add_Q0(j, k, l, self.r0[j, k, l])
        for j, a, b, k, l in zip(*np.nonzero(self.rab)):
            F.add_Qab(j, a, b, k, l, self.rab[j, a, b, k, l])
        return F


def _sym_quadratic(coeff_kbLc: np.ndarray) -> np.ndarray:
    """Symmetrize a quadratic form in the 4N variables d_b u_k."""
    n = coeff_kbLc.shape[0] * 4
    M = coeff_kbLc.reshape(n, n)
    return 0.5 * (M + M.T)


def decompose_null_forms(F: QuadraticNonlinearity) -> NullFormDecomposition | None:
    """Coefficients of F in the canonical null-form basis, or None when F is not null."""
    res = check_null_condition(F)
    if not res.holds:
        return None
    N = F.n_total
    basis = []
    for k in range(N):
        for l in range(k, N):
            basis.append(("Q0", k, l))
    for a, b in NULL_FORM_KINDS[1:]:
        for k in range(N):
            for l in range(k + 1, N):
                basis.append(((a, b), k, l))
    cols = []
    iu = np.triu_indices(4 * N)
    for kind, k, l in basis:
        G = QuadraticNonlinearity.zeros(N)
        if kind == "Q0":
            G.add_Q0(0, k, l)
        else:
            G.add_Qab(0, kind[0], kind[1], k, l)
        cols.append(_sym_quadratic(G.dudu[0])[iu])
    A = np.stack(cols, axis=1)
    r0 = np.zeros((N, N, N))
    rab = np.zeros((N, 4, 4, N, N))
    for j in range(N):
        rhs = _sym_quadratic(F.dudu[j])[iu]
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        resid = np.max(np.abs(A @ sol - rhs)) if rhs.size else 0.0
        if resid > 1e-10 * max(1.0, np.max(np.abs(rhs))):
            raise RuntimeError("null-form basis failed to reproduce a null nonlinearity")
        for (kind, k, l), s in zip(basis, sol):
            s = 0.0 if abs(s) < 1e-14 else s
            if kind == "Q0":
                r0[j, k, l] = s
            else:
                rab[j, kind[0], kind[1], k, l] = s
    return NullFormDecomposition(r0, rab)


# ---------------------------------------------------------------------------
# hidden structure


@dataclass
class AlinhacData:
    """Factorization data for a derivative-only F.

    m(omega) -> (..., N, N): M(omega, Y) = Y^T m Y.
    beta(omega) -> (..., N).
    g(omega) -> (..., N, N0, N): g_{jl}(omega, Y) = sum_k g[j, l, k] Y_k.
    h: (N0, N, 4) constant: h_l(omega, Y) = sum_{k,a} h[l, k, a] w_a Y_k.
    """

    n0: int
    m: Callable
    beta: Callable
    g: Callable
    h: np.ndarray

    def h_matrix(self, omega) -> np.ndarray:
        """H[l, k] = sum_a h[l, k, a] w_a, shape (..., N0, N)."""
        return np.einsum("lka,...a->...lk", self.h, omega4(omega))


@dataclass
class AlinhacReport:
    residual_factor: float
    residual_split: float
    residual_kernel: float
    degenerate_beta: int
    n_samples: int

    def passed(self, tol: float = 1e-9) -> bool:
        return max(self.residual_factor, self.residual_split, self.residual_kernel) < tol


def sample_sphere_and_vectors(n: int, dim: int, seed: int = 0):
    """Quasi-random unit vectors and points of [-1, 1]^dim (scrambled Sobol)."""
    from scipy.stats import qmc
    eng = qmc.Sobol(d=2 + dim, scramble=True, seed=seed)
    pts = eng.random_base2(max(0, int(np.ceil(np.log2(max(n, 1))))))[:n]
    z = 2.0 * pts[:, 0] - 1.0
    ph = 2.0 * np.pi * pts[:, 1]
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    omega = np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)
    omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    return omega, 2.0 * pts[:, 2:] - 1.0


def verify_alinhac(F: QuadraticNonlinearity, data: AlinhacData, samples: int = 10000, seed: int = 0) -> AlinhacReport:
    """Max residuals of F_red = M beta, F_red = sum g h, and H(omega) beta = 0."""
    if not F.derivative_only:
        raise ValueError("the factorization applies to derivative-only nonlinearities")
    N = F.n_total
    omega, Y = sample_sphere_and_vectors(samples, N, seed)
    Fr = eval_F_red(F, omega, np.zeros_like(Y), Y)
    beta = np.asarray(data.beta(omega), dtype=float)
    M = np.einsum("...k,...kl,...l->...", Y, data.m(omega), Y)
    r1 = np.max(np.abs(Fr - M[:, None] * beta))
    gvals = np.einsum("...jlk,...k->...jl", data.g(omega), Y)
    hvals = np.einsum("...lk,...k->...l", data.h_matrix(omega), Y)
    r2 = np.max(np.abs(Fr - np.einsum("...jl,...l->...j", gvals, hvals)))
    r3 = np.max(np.abs(np.einsum("...lk,...k->...l", data.h_matrix(omega), beta)))
    degenerate = int(np.sum(np.linalg.norm(beta, axis=-1) < 1e-12))
    return AlinhacReport(float(r1), float(r2), float(r3), degenerate, samples)


@dataclass
class GCoefficients:
    """c(omega) -> (..., n_v, n_v, 4, n_w) and d(omega) -> (..., n_v, n_v, 4, n_w, 4).

    G_j = sum (c[j,k,a,l] w_l + sum_b d[j,k,a,l,b] d_b w_l) d_a v_k.
    """

    n_v: int
    n_w: int
    c: Callable
    d: Callable

    @classmethod
    def constant(cls, c: np.ndarray, d: np.ndarray) -> "GCoefficients":
        c = np.asarray(c, dtype=float)
        d = np.asarray(d, dtype=float)
        n_v, n_w = c.shape[0], c.shape[3]
        if c.shape != (n_v, n_v, 4, n_w) or d.shape != (n_v, n_v, 4, n_w, 4):
            raise ValueError("inconsistent coupling coefficient shapes")

        def cf(omega):
            shape = np.shape(omega)[:-1]
            return np.broadcast_to(c, shape + c.shape)

        def df(omega):
            shape = np.shape(omega)[:-1]
            return np.broadcast_to(d, shape + d.shape)

        out = cls(n_v, n_w, cf, df)
        out.c_const, out.d_const = c, d
        return out

    @classmethod
    def zeros(cls, n_v: int, n_w: int) -> "GCoefficients":
        return cls.constant(np.zeros((n_v, n_v, 4, n_w)), np.zeros((n_v, n_v, 4, n_w, 4)))


def coupling_coefficients(F: QuadraticNonlinearity) -> GCoefficients:
    """Read the w-v coupling of the v-equations off a block-form nonlinearity."""
    F.check_block_form()
    nv, nw = F.n_v, F.n_w
    c = np.zeros((nv, nv, 4, nw))
    d = np.zeros((nv, nv, 4, nw, 4))
    for j in range(nv):
        for k in range(nv):
            for a in range(4):
                for l in range(nw):
                    c[j, k, a, l] = F.udu[j, nv + l, k, a]
                    for b in range(4):
                        d[j, k, a, l, b] = F.dudu[j, nv + l, b, k, a] + F.dudu[j, k, a, nv + l, b]
    return GCoefficients.constant(c, d)


def build_B(g: GCoefficients, omega, xi, eta) -> np.ndarray:
    """B_jk = -1/2 sum_a w_a sum_l (c[j,k,a,l] xi_l + sum_b d[j,k,a,l,b] w_b eta_l)."""
    _check_unit(omega)
    w = omega4(omega)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    cterm = np.einsum("...jkal,...a,...l->...jk", g.c(omega), w, xi)
    dterm = np.einsum("...jkalb,...a,...b,...l->...jk", g.d(omega), w, w, eta)
    return -0.5 * (cterm + dterm)


# ---------------------------------------------------------------------------
# extended system


@dataclass
class ExtendedSystem:
    """Closed system for (u, d_0 u, ..., d_3 u, w) with w_l = sum h[l,k,a] d_a u_k."""

    F: QuadraticNonlinearity
    g: GCoefficients
    n_base: int
    n0: int

    def component_index(self, k: int, a: int | None = None) -> int:
        """Index of u_k (a=None) or of d_a u_k in the extended vector."""
        return k if a is None else k + (a + 1) * self.n_base

    def w_index(self, l: int) -> int:
        return 5 * self.n_base + l


def build_extended_system(F: QuadraticNonlinearity, data: AlinhacData) -> ExtendedSystem:
    if not F.derivative_only:
        raise ValueError("extended system needs a derivative-only nonlinearity")
    N, N0 = F.n_total, data.n0
    if data.h.shape != (N0, N, 4):
        raise ValueError("h coefficients do not match the system size")
    Ns = 5 * N + N0
    q = F.dudu
    Q = np.zeros((Ns, Ns, 4, Ns, 4))
    Q[:N, :N, :, :N, :] = q
    for a in range(4):
        off = (a + 1) * N
        Q[off:off + N, :N, :, off:off + N, :] += q
        Q[off:off + N, off:off + N, :, :N, :] += q
    for l in range(N0):
        for k in range(N):
            for a in range(4):
                if data.h[l, k, a]:
                    Q[5 * N + l] += data.h[l, k, a] * Q[k + (a + 1) * N]
    Fs = QuadraticNonlinearity(Ns, 5 * N, np.zeros((Ns,) * 3), np.zeros((Ns,) * 3 + (4,)), Q)

    def cf(omega):
        gg = np.asarray(data.g(omega), dtype=float)  # (..., N, N0, N) as [j, l, k]
        shape = gg.shape[:-3]
        c = np.zeros(shape + (5 * N, 5 * N, 4, N0))
        gt = -np.swapaxes(gg, -1, -2)  # [j, k, l]
        c[..., :N, :N, 0, :] = gt
        for a in range(4):
            off = (a + 1) * N
            c[..., off:off + N, off:off + N, 0, :] = gt
        return c

    def df(omega):
        gg = np.asarray(data.g(omega), dtype=float)
        shape = gg.shape[:-3]
        d = np.zeros(shape + (5 * N, 5 * N, 4, N0, 4))
        gt = -np.swapaxes(gg, -1, -2)
        for a in range(4):
            off = (a + 1) * N
            d[..., off:off + N, :N, 0, :, a] = gt
        return d

    return ExtendedSystem(Fs, GCoefficients(5 * N, N0, cf, df), N, N0)


# ---------------------------------------------------------------------------
# presets


@dataclass
class Preset:
    name: str
    F: QuadraticNonlinearity
    g: GCoefficients | None = None
    alinhac: AlinhacData | None = None
    description: str = ""


def _simplest():
    F = QuadraticNonlinearity.zeros(2)
    # F1 = d1u1 (d1u2 - d2u1), F2 = d2u1 (d1u2 - d2u1)
    F.dudu[0, 0, 1, 1, 1] = 1.0
    F.dudu[0, 0, 1, 0, 2] = -1.0
    F.dudu[1, 0, 2, 1, 1] = 1.0
    F.dudu[1, 0, 2, 0, 2] = -1.0
    return F


def _simplest_alinhac():
    def m(omega):
        om = np.asarray(omega, dtype=float)
        out = np.zeros(om.shape[:-1] + (2, 2))
        out[..., 0, 0] = -om[..., 1]
        out[..., 0, 1] = om[..., 0]
        return out

    def beta(omega):
        return np.asarray(omega, dtype=float)[..., :2].copy()

    def g(omega):
        om = np.asarray(omega, dtype=float)
        out = np.zeros(om.shape[:-1] + (2, 1, 2))
        out[..., 0, 0, 0] = om[..., 0]
        out[..., 1, 0, 0] = om[..., 1]
        return out

    h = np.zeros((1, 2, 4))
    h[0, 1, 1] = 1.0
    h[0, 0, 2] = -1.0
    return AlinhacData(1, m, beta, g, h)


def _simplest_r():
    F = QuadraticNonlinearity.zeros(3, 2)
    F.udu[0, 2, 0, 1] = 1.0   # w d1 u1
    F.udu[1, 2, 0, 2] = 1.0   # w d2 u1
    F.add_Qab(2, 1, 2, 2, 0)  # Q12(w, u1)
    return F


def _log_ex():
    F = QuadraticNonlinearity.zeros(3, 2)
    F.dudu[0, 2, 0, 1, 0] = -2.0  # -2 dt w dt v2
    return F


def _rot_ex():
    F = QuadraticNonlinearity.zeros(3, 2)
    F.dudu[0, 2, 0, 1, 0] = -2.0  # -2 dt w dt v2
    F.dudu[1, 2, 0, 0, 0] = 2.0   # 2 dt w dt v1
    return F


def _null_demo():
    F = QuadraticNonlinearity.zeros(3, 2)
    F.add_Q0(0, 0, 1)
    F.add_Qab(1, 0, 1, 0, 1)
    F.add_Qab(2, 2, 3, 2, 0)
    return F


def _dtu_squared():
    F = QuadraticNonlinearity.zeros(1)
    F.dudu[0, 0, 0, 0, 0] = 1.0
    return F


def get_preset(name: str) -> Preset:
    if name == "simplestEx":
        return Preset(name, _simplest(), coupling_coefficients(_simplest_r()), _simplest_alinhac(),
                      "two components, weak null but not null; coupling taken from its block form")
    if name == "simplestExR":
        F = _simplest_r()
        return Preset(name, F, coupling_coefficients(F), None, "block form with w = d1u2 - d2u1")
    if name == "LogEx":
        F = _log_ex()
        return Preset(name, F, coupling_coefficients(F), None, "nilpotent coupling, logarithmic energy growth")
    if name == "RotEx":
        F = _rot_ex()
        return Preset(name, F, coupling_coefficients(F), None, "antisymmetric coupling, bounded energy")
    if name == "null_demo":
        F = _null_demo()
        return Preset(name, F, coupling_coefficients(F), None, "combination of null forms")
    if name == "dtu_squared":
        F = _dtu_squared()
        return Preset(name, F, GCoefficients.zeros(1, 0), None, "single equation with (d_t u)^2")
    raise KeyError(f"unknown preset {name!r}")


PRESET_NAMES = ["simplestEx", "simplestExR", "LogEx", "RotEx", "null_demo", "dtu_squared"]


# ---------------------------------------------------------------------------
# JSON


def _index(entry, key, n, one_based=True, what="component"):
    if key not in entry:
        raise ValueError(f"term {entry} is missing field {key!r}")
    v = entry[key]
    if not isinstance(v, int):
        raise ValueError(f"field {key!r} must be an integer")
    i = v - 1 if one_based else v
    if not 0 <= i < n:
        raise ValueError(f"{what} index {key}={v} out of range")
    return i


def nonlinearity_from_dict(d: dict) -> tuple[QuadraticNonlinearity, GCoefficients | None]:
    """Parse the sparse JSON form; component indices are 1-based, derivative indices 0..3."""
    try:
        n = int(d["n_total"])
    except (KeyError, TypeError, ValueError):
        raise ValueError("nonlinearity needs an integer field 'n_total'")
    nv = int(d.get("n_v", n))
    F = QuadraticNonlinearity.zeros(n, nv)
    for e in d.get("uu", []):
        F.uu[_index(e, "j", n), _index(e, "k", n), _index(e, "l", n)] += float(e["value"])
    for e in d.get("udu", []):
        F.udu[_index(e, "j", n), _index(e, "k", n), _index(e, "l", n),
              _index(e, "a", 4, False, "derivative")] += float(e["value"])
    for e in d.get("dudu", []):
        F.dudu[_index(e, "j", n), _index(e, "k", n), _index(e, "b", 4, False, "derivative"),
               _index(e, "l", n), _index(e, "c", 4, False, "derivative")] += float(e["value"])
    g = None
    if nv < n:
        F.check_block_form()
        g = coupling_coefficients(F)
    return F, g


def nonlinearity_to_dict(F: QuadraticNonlinearity) -> dict:
    out = {"n_total": F.n_total, "n_v": F.n_v, "uu": [], "udu": [], "dudu": []}
    for j, k, l in zip(*np.nonzero(F.uu)):
        out["uu"].append({"j": int(j) + 1, "k": int(k) + 1, "l": int(l) + 1, "value": float(F.uu[j, k, l])})
    for j, k, l, a in zip(*np.nonzero(F.udu)):
        out["udu"].append({"j": int(j) + 1, "k": int(k) + 1, "l": int(l) + 1, "a": int(a),
                           "value": float(F.udu[j, k, l, a])})
    for j, k, b, l, c in zip(*np.nonzero(F.dudu)):
        out["dudu"].append({"j": int(j) + 1, "k": int(k) + 1, "b": int(b), "l": int(l) + 1, "c": int(c),
                            "value": float(F.dudu[j, k, b, l, c])})
    return out


def load_nonlinearity(spec) -> Preset:
    """Preset name or path to a JSON file."""
    if isinstance(spec, str) and spec in PRESET_NAMES:
        return get_preset(spec)
    if isinstance(spec, dict):
        F, g = nonlinearity_from_dict(spec)
        return Preset("custom", F, g)
    if not isinstance(spec, str):
        raise ValueError("nonlinearity must be a preset name, a path or an object")
    try:
        with open(spec) as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"nonlinearity file {spec!r} not found")
    F, g = nonlinearity_from_dict(d)
    return Preset(spec, F, g)


# ---------------------------------------------------------------------------
# reduced evaluation in normal form


def reduced_tensor(F: QuadraticNonlinearity) -> np.ndarray:
    """T[j, v1, v2, m] with F_red_j = sum Z_v1 Z_v2 mono_m(w), Z = (X, Y).

    Built from the exact normal form, so null nonlinearities give T == 0.
    """
    N = F.n_total
    T = np.zeros((N, 2 * N, 2 * N, len(NORMAL_MONOMIALS)))
    for j, poly in enumerate(reduced_normal_form(F)):
        for (v1, v2, e1, e2, e3), cf in poly.items():
            T[j, v1, v2, _MONO_INDEX[(e1, e2, e3)]] += float(cf)
    return T


def normal_monomials(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return np.stack([np.prod(omega ** np.array(m), axis=-1) for m in NORMAL_MONOMIALS], axis=-1)
