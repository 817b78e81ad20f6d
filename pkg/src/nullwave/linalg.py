"""Small dense matrix functions: exponential and eigenvalues, batched over leading axes."""
import numpy as np

_THETA13 = 5.371920351148152
_PADE13 = np.array([64764752532480000., 32382376266240000., 7771770303897600.,
                    1187353796428800., 129060195264000., 10559470521600.,
                    670442572800., 33522128640., 1323241920., 40840800.,
                    960960., 16380., 182., 1.])


def _pade13(A):
    b = _PADE13
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=A.dtype), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * eye)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * eye
    return U, V


def matrix_exp(M) -> np.ndarray:
    """exp(M) by scaling and squaring with the degree-13 Pade approximant.

    Accepts a single matrix or a stack (..., n, n). Raises FloatingPointError
    on overflow.
    """
    M = np.asarray(M)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError("matrix_exp needs square matrices")
    dtype = np.result_type(M.dtype, np.float64)
    flat = M.reshape((-1,) + M.shape[-2:]).astype(dtype)
    norms = np.max(np.sum(np.abs(flat), axis=-2), axis=-1)
    if not np.all(np.isfinite(norms)):
        raise FloatingPointError("matrix_exp input is not finite")
    s = np.zeros(norms.shape, dtype=int)
    big = norms > _THETA13
    s[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)
    out = np.empty_like(flat)
    with np.errstate(over="ignore", invalid="ignore"):
        for sv in np.unique(s):
            idx = np.nonzero(s == sv)[0]
            A = flat[idx] / (2.0 ** sv)
            U, V = _pade13(A)
            R = np.linalg.solve(V - U, V + U)
            for _ in range(sv):
                R = R @ R
            out[idx] = R
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matrix exponential overflowed")
    return out.reshape(M.shape)


def taylor_exp(M, terms: int = 30) -> np.ndarray:
    """Truncated Taylor series of exp(M)."""
    M = np.asarray(M, dtype=float)
    out = np.broadcast_to(np.eye(M.shape[-1]), M.shape).copy()
    term = out.copy()
    for k in range(1, terms + 1):
        term = term @ M / k
        out = out + term
    return out


def _cubic_roots(c2, c1, c0):
    """Roots of x^3 + c2 x^2 + c1 x + c0 (complex, vectorized)."""
    c2 = np.asarray(c2, dtype=complex)
    c1 = np.asarray(c1, dtype=complex)
    c0 = np.asarray(c0, dtype=complex)
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2 ** 3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = np.sqrt(q * q / 4.0 + p ** 3 / 27.0)
    w1 = -q / 2.0 + disc
    w2 = -q / 2.0 - disc
    w = np.where(np.abs(w1) >= np.abs(w2), w1, w2)
    u = w ** (1.0 / 3.0)
    unity = np.exp(2j * np.pi * np.arange(3) / 3.0)
    uk = u[..., None] * unity
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(np.abs(uk) > 0, uk - p[..., None] / (3.0 * uk), 0.0)
    roots = x - shift[..., None]
    # one Newton polish where the derivative is not small
    for _ in range(2):
        f = ((roots + c2[..., None]) * roots + c1[..., None]) * roots + c0[..., None]
        df = (3.0 * roots + 2.0 * c2[..., None]) * roots + c1[..., None]
        scale = 1.0 + np.abs(c2[..., None]) + np.abs(c1[..., None]) ** 0.5 + np.abs(c0[..., None]) ** (1 / 3)
        ok = np.abs(df) > 1e-6 * scale ** 2
        step = np.where(ok, f / np.where(ok, df, 1.0), 0.0)
        roots = roots - step
    return roots


def eigenvalues(B) -> np.ndarray:
    """Eigenvalues of (..., n, n): closed forms for n <= 3, LAPACK otherwise."""
    B = np.asarray(B, dtype=float)
    n = B.shape[-1]
    if n == 1:
        return B[..., 0, :].astype(complex)
    if n == 2:
        a, b, c, d = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
        half = 0.5 * (a + d)
        r = np.sqrt((0.5 * (a - d)) ** 2 + b * c + 0j)
        return np.stack([half + r, half - r], axis=-1)
    if n == 3:
        tr = np.trace(B, axis1=-2, axis2=-1)
        minors = (B[..., 0, 0] * B[..., 1, 1] - B[..., 0, 1] * B[..., 1, 0]
                  + B[..., 0, 0] * B[..., 2, 2] - B[..., 0, 2] * B[..., 2, 0]
                  + B[..., 1, 1] * B[..., 2, 2] - B[..., 1, 2] * B[..., 2, 1])
        det = np.linalg.det(B)
        return _cubic_roots(-tr, minors, -det)
    return np.linalg.eigvals(B)


def cluster(values, tol: float) -> list[tuple[complex, int]]:
    """Group nearby complex numbers: list of (mean, multiplicity)."""
    groups: list[list[complex]] = []
    for v in values:
        for g in groups:
            if abs(np.mean(g) - v) <= tol:
                g.append(v)
                break
        else:
            groups.append([v])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def is_diagonalizable(B, eigs=None, tol: float = 1e-7) -> bool:
    """Geometric multiplicities (numerical rank) add up to n.

    Works on B / |B|; eigenvalues closer than 1e-4 (relative) are grouped, since
    a defective k-fold root scatters by about eps^(1/k).
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    scale = float(np.linalg.norm(B, 2))
    if scale == 0.0:
        return True
    eigs = eigenvalues(B) if eigs is None else np.asarray(eigs)
    Bn = B / scale
    total = 0
    for lam, mult in cluster(eigs / scale, 1e-4):
        sv = np.linalg.svd(Bn - lam * np.eye(n), compute_uv=False)
        geo = int(np.sum(sv <= tol))
        if geo < mult:
            return False
        total += geo
    return total >= n
