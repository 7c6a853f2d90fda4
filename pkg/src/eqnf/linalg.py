"""Dense real linear algebra: semisimple/nilpotent splittings and adapted products.

Everything here works on plain numpy arrays.  The two decompositions are the
additive one (A = S + N with S semisimple, N nilpotent, SN = NS) and the
multiplicative one (A = S * exp(L) with L = log(I + S^-1 N) nilpotent); both
are unique, commute with conjugation, and are computed by a Newton iteration
on the squarefree part of the characteristic polynomial.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotSemisimple, NotUnipotent, SingularInput

# Singular values below max(n,1)*eps*max(smax,1)*RANK_TOL_FACTOR count as
# zero.  The absolute floor of 1 keeps numerically-zero differences of
# O(1)-normalized operators (e.g. S0^q - I at a root of unity) rank zero.
RANK_TOL_FACTOR = 1e3
# Semisimplicity proxy: eigenvector-matrix condition number limit.
EIGVEC_COND_LIMIT = 1e8


def as_square(A, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def rank_tolerance(s, n: int, factor: float = RANK_TOL_FACTOR) -> float:
    smax = float(s[0]) if len(s) else 0.0
    return max(n, 1) * np.finfo(float).eps * max(smax, 1.0) * factor


def require_invertible(A, name: str = "matrix") -> np.ndarray:
    A = as_square(A, name)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= rank_tolerance(s, A.shape[0]):
        raise SingularInput(
            f"{name} is singular to working precision (smin={s[-1]:.3e}, smax={s[0]:.3e})"
        )
    return A


def kernel_basis(L, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of ker L for square L, by SVD."""
    L = as_square(L, "operator")
    _, s, vh = np.linalg.svd(L)
    if tol is None:
        tol = rank_tolerance(s, L.shape[0])
    rank = int(np.sum(s > tol))
    return vh[rank:].T.copy()


def image_basis(L, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of square L, by SVD."""
    L = as_square(L, "operator")
    u, s, _ = np.linalg.svd(L)
    if tol is None:
        tol = rank_tolerance(s, L.shape[0])
    rank = int(np.sum(s > tol))
    return u[:, :rank].copy()


def nullspace(M, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the right null space of a rectangular matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    if tol is None:
        tol = rank_tolerance(s, max(M.shape))
    rank = int(np.sum(s > tol))
    return vh[rank:].T.copy()


def matrix_exp(A) -> np.ndarray:
    """Matrix exponential (scaling and squaring)."""
    return scipy.linalg.expm(as_square(A))


def matrix_log_unipotent(U, tol: float = 1e-9) -> np.ndarray:
    """Log of a unipotent matrix via the finite Mercator series.

    Raises NotUnipotent when (U - I)^n is not negligible.
    """
    U = as_square(U)
    n = U.shape[0]
    M = U - np.eye(n)
    scale = max(1.0, np.linalg.norm(M)) ** n
    if np.linalg.norm(np.linalg.matrix_power(M, n)) > tol * scale:
        raise NotUnipotent(f"(U - I)^{n} not negligible; no unipotent logarithm")
    out = np.zeros_like(M)
    P = np.eye(n)
    for j in range(1, n):
        P = P @ M
        out += ((-1) ** (j + 1) / j) * P
    return out


def real_log(A, tol: float = 1e-9) -> np.ndarray:
    """Principal real logarithm of a matrix near the identity (or unipotent).

    Only the unipotent-compatible / near-identity case is supported; a
    complex-valued principal log raises NoRealLogarithm.
    """
    from .errors import NoRealLogarithm

    A = as_square(A)
    n = A.shape[0]
    M = A - np.eye(n)
    if np.linalg.norm(np.linalg.matrix_power(M, n)) <= 1e-13 * max(1.0, np.linalg.norm(M)) ** n:
        return matrix_log_unipotent(A, tol=1e-7)
    L = scipy.linalg.logm(A)
    if np.max(np.abs(np.imag(L))) > tol * max(1.0, np.max(np.abs(L))):
        raise NoRealLogarithm("principal logarithm has a non-negligible imaginary part")
    return np.real(L)


# ---------------------------------------------------------------------------
# semisimple + nilpotent decompositions

@dataclass(frozen=True)
class JCDecomposition:
    S: np.ndarray
    N: np.ndarray


@dataclass(frozen=True)
class SUDecomposition:
    S: np.ndarray
    nil_log: np.ndarray


def _cluster_means(values: np.ndarray, tol: float) -> list[complex]:
    """Cluster complex values by connectivity at distance tol; return means."""
    m = len(values)
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        for j in range(i + 1, m):
            if abs(values[i] - values[j]) <= tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[complex]] = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(values[i])
    return [np.mean(v) for v in groups.values()]


def _squarefree_from_means(means: list[complex], imag_tol: float) -> np.ndarray:
    """Real coefficients of prod (x - mu) over cluster means, conjugates paired."""
    roots: list[complex] = []
    for mu in means:
        if abs(mu.imag) <= imag_tol:
            roots.append(complex(mu.real, 0.0))
        elif mu.imag > 0:
            roots.append(mu)
            roots.append(np.conj(mu))
        # negative-imag means are covered by their conjugate partner
    coeffs = np.poly(roots)
    return np.real(coeffs)


def _polyval_matrix(coeffs: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = np.zeros_like(X)
    for c in coeffs:
        out = out @ X + c * np.eye(X.shape[0])
    return out


def _newton_squarefree(A: np.ndarray, means: list[complex], imag_tol: float,
                       max_iter: int = 60) -> np.ndarray:
    f = _squarefree_from_means(means, imag_tol)
    df = np.polyder(f)
    S = A.copy()
    scale = max(1.0, np.linalg.norm(A))
    for _ in range(max_iter):
        F = _polyval_matrix(f, S)
        dF = _polyval_matrix(df, S)
        try:
            step = np.linalg.solve(dF, F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"derivative of squarefree polynomial singular: {exc}")
        S = S - step
        if np.linalg.norm(step) <= 1e-15 * scale:
            break
    return S


def _validate_jc(A: np.ndarray, S: np.ndarray, tol: float) -> bool:
    n = A.shape[0]
    N = A - S
    scale = max(1.0, np.linalg.norm(A)) ** 2
    if np.linalg.norm(S @ N - N @ S) > tol * scale:
        return False
    npow = max(1.0, np.linalg.norm(N)) ** n
    if np.linalg.norm(np.linalg.matrix_power(N, n)) > tol * npow:
        return False
    # semisimplicity of S via eigenvector conditioning
    try:
        _, V = np.linalg.eig(S)
        if np.linalg.cond(V) > EIGVEC_COND_LIMIT:
            return False
    except np.linalg.LinAlgError:
        return False
    return True


def jordan_chevalley(A, tol: float = 1e-10,
                     cluster_factors=(1e-10, 1e-8, 1e-6, 1e-4, 1e-3)) -> JCDecomposition:
    """Split A = S + N with S semisimple, N nilpotent, SN = NS.

    Newton iteration on the squarefree part of the characteristic polynomial;
    the squarefree part is built from clustered eigenvalues, trying a ladder of
    clustering tolerances until the postconditions hold.  Falls back to a
    complex eigendecomposition before giving up.
    """
    A = require_invertible(A, "A")
    eigs = np.linalg.eigvals(A)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    for factor in cluster_factors:
        ctol = factor * scale
        means = _cluster_means(eigs, ctol)
        try:
            S = _newton_squarefree(A, means, imag_tol=ctol)
        except NoConvergence:
            continue
        if _validate_jc(A, S, tol):
            return JCDecomposition(S=S, N=A - S)
    # fallback: eigendecomposition with clustered eigenvalues replaced by means
    for factor in cluster_factors:
        ctol = factor * scale
        means = _cluster_means(eigs, ctol)
        w, V = np.linalg.eig(A)
        mapped = np.array([min(means, key=lambda m: abs(m - wi)) for wi in w])
        try:
            S = np.real(V @ np.diag(mapped) @ np.linalg.inv(V))
        except np.linalg.LinAlgError:
            continue
        if _validate_jc(A, S, tol):
            return JCDecomposition(S=S, N=A - S)
    raise NoConvergence("jordan_chevalley: no clustering tolerance produced a valid splitting")


def su_decomposition(A, tol: float = 1e-10) -> SUDecomposition:
    """Multiplicative splitting A = S exp(L), L = log(I + S^-1 N) nilpotent."""
    jc = jordan_chevalley(A, tol=tol)
    S = require_invertible(jc.S, "semisimple part")
    M = np.linalg.solve(S, jc.N)  # S^-1 N, nilpotent
    nil_log = matrix_log_unipotent(np.eye(A.shape[0]) + M, tol=1e-7)
    return SUDecomposition(S=S, nil_log=nil_log)


# ---------------------------------------------------------------------------
# adapted inner products

@dataclass
class AdaptedInnerProduct:
    """Inner product <x, y> = x^T gram y with gram symmetric positive definite."""

    gram: np.ndarray
    gram_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        G = as_square(self.gram, "gram")
        if np.linalg.norm(G - G.T) > 1e-10 * max(1.0, np.linalg.norm(G)):
            raise ValueError("gram matrix must be symmetric")
        if np.min(np.linalg.eigvalsh((G + G.T) / 2)) <= 0:
            raise ValueError("gram matrix must be positive definite")
        self.gram = G
        self.gram_inv = np.linalg.inv(G)

    @classmethod
    def standard(cls, n: int) -> "AdaptedInnerProduct":
        return cls(np.eye(n))

    def inner(self, x, y) -> float:
        return float(np.asarray(x) @ self.gram @ np.asarray(y))

    def adjoint(self, A) -> np.ndarray:
        """Adjoint A* with <Ax, y> = <x, A* y>: A* = gram^-1 A^T gram."""
        return self.gram_inv @ as_square(A).T @ self.gram


def adjoint_wrt(ip: AdaptedInnerProduct, A) -> np.ndarray:
    return ip.adjoint(A)
