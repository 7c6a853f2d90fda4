"""Truncated polynomial maps and the graded composition calculus.

Maps R^n -> R^n with zero constant term are stored degree by degree: layer d
is an (n, M_d) coefficient array over the monomials of total degree d, listed
in lexicographically descending exponent order (so the degree-1 monomials are
x_0, ..., x_{n-1} and layer 1 is the ordinary linear matrix).  Coefficient
vectors for a whole homogeneous layer use row-major flattening throughout, so
vec(A X B) = kron(A, B^T) vec(X).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import (CkSingular, DimensionMismatch, NonInvertibleLinearPart)
from .linalg import real_log


# ---------------------------------------------------------------------------
# monomial bookkeeping

@lru_cache(maxsize=None)
def monomials(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    """Exponent tuples of total degree d in n variables, lex-descending."""
    if n < 1:
        raise ValueError("need at least one variable")
    if d < 0:
        return ()
    if n == 1:
        return ((d,),)
    out = []
    for e in range(d, -1, -1):
        for rest in monomials(n - 1, d - e):
            out.append((e,) + rest)
    return tuple(out)


@lru_cache(maxsize=None)
def monomial_index(n: int, d: int) -> dict:
    return {al: i for i, al in enumerate(monomials(n, d))}


def num_monomials(n: int, d: int) -> int:
    return math.comb(n + d - 1, d)


def hk_dim(n: int, k: int) -> int:
    """Dimension of the space of homogeneous degree-k maps R^n -> R^n."""
    return n * num_monomials(n, k)


@lru_cache(maxsize=None)
def _exponent_matrix(n: int, d: int) -> np.ndarray:
    return np.array(monomials(n, d), dtype=np.int64)


@lru_cache(maxsize=None)
def _prod_table(n: int, d1: int, d2: int) -> np.ndarray:
    """T[i, j] = index of monomial i (degree d1) times monomial j (degree d2)."""
    idx = monomial_index(n, d1 + d2)
    A, B = monomials(n, d1), monomials(n, d2)
    T = np.empty((len(A), len(B)), dtype=np.intp)
    for i, al in enumerate(A):
        for j, be in enumerate(B):
            T[i, j] = idx[tuple(a + b for a, b in zip(al, be))]
    return T


@lru_cache(maxsize=None)
def _flat_layout(n: int, order: int):
    offs = {}
    pos = 0
    for d in range(1, order + 1):
        offs[d] = pos
        pos += num_monomials(n, d)
    return offs, pos


def _flat_mul(n: int, order: int, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Product of two flat coefficient vectors, truncated past `order`."""
    offs, size = _flat_layout(n, order)
    out = np.zeros(size)
    for d1 in range(1, order):
        o1, M1 = offs[d1], num_monomials(n, d1)
        pb = p[o1:o1 + M1]
        if not pb.any():
            continue
        for d2 in range(1, order - d1 + 1):
            o2, M2 = offs[d2], num_monomials(n, d2)
            qb = q[o2:o2 + M2]
            if not qb.any():
                continue
            np.add.at(out, offs[d1 + d2] + _prod_table(n, d1, d2), np.outer(pb, qb))
    return out


def _mono_values(x: np.ndarray, n: int, d: int) -> np.ndarray:
    """Monomial values at x; x is (n,) or (m, n), result (M_d,) or (m, M_d)."""
    E = _exponent_matrix(n, d)
    if x.ndim == 1:
        return np.prod(x[None, :] ** E, axis=1)
    return np.prod(x[:, None, :] ** E[None, :, :], axis=2)


# ---------------------------------------------------------------------------
# truncated maps

class TruncatedMap:
    """Polynomial map with zero constant term, truncated at a total degree."""

    __slots__ = ("n", "order", "layers")

    def __init__(self, n: int, order: int, layers):
        self.n = int(n)
        self.order = int(order)
        if self.order < 1:
            raise ValueError("order must be at least 1")
        if len(layers) != self.order:
            raise DimensionMismatch(f"expected {self.order} layers, got {len(layers)}")
        store = []
        for d, L in enumerate(layers, start=1):
            L = np.array(L, dtype=float)
            want = (self.n, num_monomials(self.n, d))
            if L.shape != want:
                raise DimensionMismatch(f"layer {d} has shape {L.shape}, expected {want}")
            store.append(L)
        self.layers = store

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, n: int, order: int) -> "TruncatedMap":
        return cls(n, order, [np.zeros((n, num_monomials(n, d)))
                              for d in range(1, order + 1)])

    @classmethod
    def from_linear(cls, A, order: int) -> "TruncatedMap":
        A = np.asarray(A, dtype=float)
        out = cls.zero(A.shape[0], order)
        out.layers[0] = A.copy()
        return out

    @classmethod
    def identity(cls, n: int, order: int) -> "TruncatedMap":
        return cls.from_linear(np.eye(n), order)

    @classmethod
    def from_flat(cls, n: int, order: int, flat: np.ndarray) -> "TruncatedMap":
        offs, size = _flat_layout(n, order)
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (n, size):
            raise DimensionMismatch(f"flat block has shape {flat.shape}, expected {(n, size)}")
        return cls(n, order, [flat[:, offs[d]:offs[d] + num_monomials(n, d)]
                              for d in range(1, order + 1)])

    @classmethod
    def from_terms(cls, n: int, order: int, terms) -> "TruncatedMap":
        """Build from records {component, exponents, coefficient}."""
        out = cls.zero(n, order)
        for t in terms:
            i = int(t["component"])
            al = tuple(int(e) for e in t["exponents"])
            d = sum(al)
            if len(al) != n:
                raise DimensionMismatch(f"exponent tuple {al} has wrong length")
            if not 1 <= d <= order:
                raise DimensionMismatch(f"term of degree {d} outside 1..{order}")
            out.layers[d - 1][i, monomial_index(n, d)[al]] += float(t["coefficient"])
        return out

    def to_terms(self, tol: float = 0.0) -> list[dict]:
        terms = []
        for d in range(1, self.order + 1):
            mons = monomials(self.n, d)
            L = self.layers[d - 1]
            for i in range(self.n):
                for j, al in enumerate(mons):
                    if abs(L[i, j]) > tol:
                        terms.append({"component": i, "exponents": list(al),
                                      "coefficient": float(L[i, j])})
        return terms

    # -- access -------------------------------------------------------------

    def layer(self, d: int) -> np.ndarray:
        if not 1 <= d <= self.order:
            raise DimensionMismatch(f"no layer of degree {d}")
        return self.layers[d - 1]

    def linear(self) -> np.ndarray:
        return self.layers[0]

    def with_layer(self, d: int, L) -> "TruncatedMap":
        out = self.copy()
        L = np.asarray(L, dtype=float)
        want = out.layers[d - 1].shape
        if L.shape != want:
            raise DimensionMismatch(f"layer {d} has shape {L.shape}, expected {want}")
        out.layers[d - 1] = L.copy()
        return out

    def copy(self) -> "TruncatedMap":
        return TruncatedMap(self.n, self.order, self.layers)

    def flat(self) -> np.ndarray:
        return np.hstack(self.layers)

    def truncated(self, order: int) -> "TruncatedMap":
        """Drop layers past `order`, or pad with zero layers up to it."""
        if order <= self.order:
            return TruncatedMap(self.n, order, self.layers[:order])
        pad = [np.zeros((self.n, num_monomials(self.n, d)))
               for d in range(self.order + 1, order + 1)]
        return TruncatedMap(self.n, order, self.layers + pad)

    # -- arithmetic ----------------------------------------------------------

    def _binary(self, other: "TruncatedMap", op) -> "TruncatedMap":
        if not isinstance(other, TruncatedMap):
            return NotImplemented
        if other.n != self.n or other.order != self.order:
            raise DimensionMismatch("maps of different shape")
        return TruncatedMap(self.n, self.order,
                            [op(a, b) for a, b in zip(self.layers, other.layers)])

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return TruncatedMap(self.n, self.order, [-L for L in self.layers])

    def __mul__(self, c):
        c = float(c)
        return TruncatedMap(self.n, self.order, [c * L for L in self.layers])

    __rmul__ = __mul__

    def linear_left(self, M) -> "TruncatedMap":
        """Left-compose with a square linear map: returns M o self."""
        M = np.asarray(M, dtype=float)
        if M.shape != (self.n, self.n):
            raise DimensionMismatch("linear factor has the wrong shape")
        return TruncatedMap(self.n, self.order, [M @ L for L in self.layers])

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = None
        for d in range(1, self.order + 1):
            vals = _mono_values(x, self.n, d)
            term = vals @ self.layers[d - 1].T
            out = term if out is None else out + term
        return out

    __call__ = evaluate

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.layers[0].copy()
        for d in range(2, self.order + 1):
            E = _exponent_matrix(self.n, d)
            dM = np.zeros((E.shape[0], self.n))
            for j in range(self.n):
                mask = E[:, j] > 0
                if not mask.any():
                    continue
                Ered = E[mask].copy()
                Ered[:, j] -= 1
                dM[mask, j] = E[mask, j] * np.prod(x[None, :] ** Ered, axis=1)
            J += self.layers[d - 1] @ dM
        return J

    # -- comparison ----------------------------------------------------------

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(L))) if L.size else 0.0) for L in self.layers)

    def allclose(self, other: "TruncatedMap", tol: float = 1e-10) -> bool:
        if other.n != self.n or other.order != self.order:
            return False
        return all(np.max(np.abs(a - b)) <= tol if a.size else True
                   for a, b in zip(self.layers, other.layers))

    def is_identity(self, tol: float = 1e-10) -> bool:
        return self.allclose(TruncatedMap.identity(self.n, self.order), tol)

    def __repr__(self):
        return f"TruncatedMap(n={self.n}, order={self.order})"


# ---------------------------------------------------------------------------
# composition and inversion

def _power_matrix(G: TruncatedMap) -> np.ndarray:
    """Row per monomial (graded order): flat coefficients of G^alpha."""
    n, order = G.n, G.order
    offs, size = _flat_layout(n, order)
    PW = np.zeros((size, size))
    Gf = G.flat()
    PW[offs[1]:offs[1] + n] = Gf
    for d in range(2, order + 1):
        idx_prev = monomial_index(n, d - 1)
        for j, al in enumerate(monomials(n, d)):
            i0 = next(i for i, e in enumerate(al) if e)
            al2 = list(al)
            al2[i0] -= 1
            prev = PW[offs[d - 1] + idx_prev[tuple(al2)]]
            PW[offs[d] + j] = _flat_mul(n, order, Gf[i0], prev)
    return PW


def compose(F: TruncatedMap, G: TruncatedMap, k: int | None = None) -> TruncatedMap:
    """Truncated composition F o G (both maps fix the origin)."""
    if F.n != G.n:
        raise DimensionMismatch("composition needs maps on the same space")
    order = min(F.order, G.order) if k is None else k
    F, G = F.truncated(order), G.truncated(order)
    return TruncatedMap.from_flat(F.n, order, F.flat() @ _power_matrix(G))


def ad_conjugate(T: TruncatedMap, F: TruncatedMap, k: int | None = None) -> TruncatedMap:
    """Conjugation by a truncated map: T o F o T^{-1}."""
    return compose(compose(T, F, k), inverse_truncated(T, k), k)


def inverse_truncated(F: TruncatedMap, k: int | None = None) -> TruncatedMap:
    """Compositional inverse, degree by degree."""
    if k is not None:
        F = F.truncated(k)
    A = F.linear()
    smin = np.linalg.svd(A, compute_uv=False)[-1]
    if smin <= 1e-12 * max(1.0, np.linalg.norm(A)):
        raise NonInvertibleLinearPart("linear part is singular; no local inverse")
    H = TruncatedMap.from_linear(np.linalg.inv(A), F.order)
    ident = TruncatedMap.identity(F.n, F.order)
    for d in range(2, F.order + 1):
        R = compose(F, H) - ident
        H.layers[d - 1] -= np.linalg.solve(A, R.layer(d))
    return H


def substitution_matrix(T, k: int) -> np.ndarray:
    """S[a, b] = coefficient of x^b in (T x)^a, both of degree k."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    if k < 1:
        raise ValueError("degree must be at least 1")
    S = T.copy()
    for d in range(2, k + 1):
        idx_prev = monomial_index(n, d - 1)
        Tab = _prod_table(n, 1, d - 1)
        Snew = np.zeros((num_monomials(n, d), num_monomials(n, d)))
        for r, al in enumerate(monomials(n, d)):
            i0 = next(i for i, e in enumerate(al) if e)
            al2 = list(al)
            al2[i0] -= 1
            np.add.at(Snew[r], Tab, np.outer(T[i0], S[idx_prev[tuple(al2)]]))
        S = Snew
    return S


def conjugate_linear(T, F: TruncatedMap) -> TruncatedMap:
    """T o F o T^{-1} for an invertible matrix T."""
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)
    return TruncatedMap(F.n, F.order,
                        [T @ F.layer(d) @ substitution_matrix(Tinv, d)
                         for d in range(1, F.order + 1)])


# ---------------------------------------------------------------------------
# graded operators on homogeneous layers (row-major vec convention)

def adk_operator(T, k: int) -> np.ndarray:
    """Conjugation on degree-k layers: vec(T Y_k T^{-1}) = adk_operator(T,k) vec(Y_k)."""
    T = np.asarray(T, dtype=float)
    return np.kron(T, substitution_matrix(np.linalg.inv(T), k).T)


def _derivation_scalar(X1: np.ndarray, k: int) -> np.ndarray:
    """Matrix of p -> Dp . (X1 x) on degree-k scalar coefficient vectors."""
    n = X1.shape[0]
    idx = monomial_index(n, k)
    mons = monomials(n, k)
    D = np.zeros((len(mons), len(mons)))
    for c, al in enumerate(mons):
        for j in range(n):
            if al[j] == 0:
                continue
            base = list(al)
            base[j] -= 1
            for l in range(n):
                if X1[j, l] == 0.0:
                    continue
                be = tuple(base[m] + (1 if m == l else 0) for m in range(n))
                D[idx[be], c] += al[j] * X1[j, l]
    return D


def adk_field(N, k: int) -> np.ndarray:
    """Bracket with the linear field N x on degree-k layers:
    vec([N x, Y_k]) = adk_field(N,k) vec(Y_k), [N x, Y] = DY.(Nx) - N Y."""
    N = np.asarray(N, dtype=float)
    M = num_monomials(N.shape[0], k)
    return (np.kron(np.eye(N.shape[0]), _derivation_scalar(N, k))
            - np.kron(N, np.eye(M)))


def ck_operator(X1, k: int) -> np.ndarray:
    """C_k(X1) = phi1(adk_field(X1, k)) with phi1(z) = (e^z - 1)/z.

    Governs composition with near-identity degree-k factors:
    exp(X1 + W_k) = exp(X1) o exp(C_k(X1) W_k) modulo degrees > k.
    """
    L = adk_field(X1, k)
    m = L.shape[0]
    B = np.zeros((2 * m, 2 * m))
    B[:m, :m] = L
    B[:m, m:] = np.eye(m)
    return scipy.linalg.expm(B)[:m, m:]


def ck_solve(C: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(C, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise CkSingular(
            f"composition operator is numerically singular (smin/smax = {s[-1] / s[0]:.2e})")
    return np.linalg.solve(C, rhs)


def ch_compose(X: TruncatedMap, Yk, k: int, side: str = "right") -> TruncatedMap:
    """Exponent of exp(X) o exp(Y_k) (side right) or exp(Y_k) o exp(X) (left).

    Y_k is a single degree-k layer; the result is exact modulo degrees > k.
    """
    Yk = np.asarray(Yk, dtype=float)
    X1 = X.linear()
    if side == "right":
        C = ck_operator(X1, k)
    elif side == "left":
        C = ck_operator(-X1, k)
    else:
        raise ValueError(f"unknown side {side!r}")
    z = ck_solve(C, Yk.reshape(-1))
    return X.with_layer(k, X.layer(k) + z.reshape(Yk.shape))


# ---------------------------------------------------------------------------
# exponentials and logarithms of vector fields (time-one flows)

def _mult_column(n: int, order: int, q: np.ndarray, d2: int, b: int) -> np.ndarray:
    """Flat coefficients of q(x) * x^beta, beta the b-th degree-d2 monomial."""
    offs, size = _flat_layout(n, order)
    out = np.zeros(size)
    for d1 in range(1, order - d2 + 1):
        o1, M1 = offs[d1], num_monomials(n, d1)
        qb = q[o1:o1 + M1]
        if not qb.any():
            continue
        out[offs[d1 + d2] + _prod_table(n, d1, d2)[:, b]] += qb
    return out


def _transport_operator(X: TruncatedMap) -> np.ndarray:
    """Matrix of p -> Dp . X on flat scalar coefficient vectors."""
    n, order = X.n, X.order
    offs, size = _flat_layout(n, order)
    Xf = X.flat()
    L = np.zeros((size, size))
    for i in range(n):
        L[:, offs[1] + i] += Xf[i]
    for d in range(2, order + 1):
        idx_prev = monomial_index(n, d - 1)
        for c, al in enumerate(monomials(n, d)):
            col = offs[d] + c
            for j in range(n):
                if al[j] == 0:
                    continue
                be = list(al)
                be[j] -= 1
                L[:, col] += al[j] * _mult_column(n, order, Xf[j],
                                                  d - 1, idx_prev[tuple(be)])
    return L


def exp_vf(X: TruncatedMap, k: int | None = None) -> TruncatedMap:
    """Time-one flow of the polynomial vector field X, as a truncated map.

    Computed as expm of the transport operator F -> DF.X on the truncated
    coefficient space, applied to the coordinate functions.
    """
    if k is not None:
        X = X.truncated(k)
    offs, _ = _flat_layout(X.n, X.order)
    E = scipy.linalg.expm(_transport_operator(X))
    return TruncatedMap.from_flat(X.n, X.order, E[:, offs[1]:offs[1] + X.n].T)


def log_map(F: TruncatedMap, k: int | None = None, tol: float = 1e-9) -> TruncatedMap:
    """Inverse of exp_vf: the field X with exp_vf(X) = F, degree by degree.

    The linear part of F must admit a real logarithm.
    """
    if k is not None:
        F = F.truncated(k)
    A = F.linear()
    X = TruncatedMap.from_linear(real_log(A), F.order)
    Ainv = np.linalg.inv(A)
    scale = max(1.0, F.max_abs())
    for _ in range(8):
        for d in range(2, F.order + 1):
            r = (F - exp_vf(X)).layer(d)
            w = ck_solve(ck_operator(X.linear(), d), (Ainv @ r).reshape(-1))
            X.layers[d - 1] += w.reshape(r.shape)
        if (F - exp_vf(X)).max_abs() <= tol * scale or F.order == 1:
            break
    return X


# ---------------------------------------------------------------------------
# graded inner products

def fischer_gram(n: int, k: int, gram=None) -> np.ndarray:
    """Gram matrix of the Fischer product on degree-k layers, adapted to an
    inner product on R^n (standard if gram is None).

    Under this product the adjoint of adk_field(N, k) is adk_field(N*, k)
    where N* is the gram-adjoint of N.
    """
    if gram is None:
        gram = np.eye(n)
    gram = np.asarray(gram, dtype=float)
    w, V = np.linalg.eigh(gram)
    if np.min(w) <= 0:
        raise ValueError("inner product matrix must be positive definite")
    Q = V @ np.diag(np.sqrt(w)) @ V.T
    fact = np.array([math.prod(math.factorial(e) for e in al)
                     for al in monomials(n, k)], dtype=float)
    Ad = np.kron(Q, substitution_matrix(np.linalg.inv(Q), k).T)
    return Ad.T @ np.kron(np.eye(n), np.diag(fact)) @ Ad


# ---------------------------------------------------------------------------
# parameter families

class MapFamily:
    """Family of truncated maps over a real parameter vector."""

    def __init__(self, fn, n: int, order: int, nparams: int = 1):
        self._fn = fn
        self.n = int(n)
        self.order = int(order)
        self.nparams = int(nparams)

    def _lam(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.nparams,):
            raise DimensionMismatch(
                f"parameter has shape {lam.shape}, expected ({self.nparams},)")
        return lam

    def at(self, lam) -> TruncatedMap:
        return self._fn(self._lam(lam))


class AffineMapFamily(MapFamily):
    """base + sum_i lam_i * slope_i, coefficientwise."""

    def __init__(self, base: TruncatedMap, slopes):
        self.base = base
        self.slopes = list(slopes)
        for s in self.slopes:
            if s.n != base.n or s.order != base.order:
                raise DimensionMismatch("slope map of different shape than base")

        def fn(lam):
            out = base
            for li, s in zip(lam, self.slopes):
                if li != 0.0:
                    out = out + li * s
            return out.copy()

        super().__init__(fn, base.n, base.order, nparams=len(self.slopes))
