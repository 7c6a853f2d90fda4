"""Normal forms of equivariant map families near a fixed point.

Pipeline: a linear normal form relative to the reference linearization A0,
then degree-by-degree removal of nonresonant terms.  Two targets are
supported: the semisimple form A0 e^{X} with X commuting with S0, and the
nilpotent form S0 e^{N0 + X} where X additionally satisfies the ad(N0*)
kernel constraint (N0* is the adjoint with respect to the adapted inner
product).  Every stage is a damped Newton iteration on projected residuals,
preconditioned with the exact Frechet derivative frozen at (A0, lambda=0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotEquivariant, SplitFailure
from .groups import (GroupData, _resolve_char, extended_group,
                     is_chi_equivariant_linear, tilde_character)
from .linalg import (AdaptedInnerProduct, nullspace, rank_tolerance,
                     real_log, require_invertible, su_decomposition)
from .polymap import (TruncatedMap, ad_conjugate, adk_field, adk_operator,
                      ck_operator, compose, conjugate_linear, exp_vf, hk_dim,
                      log_map, num_monomials)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


# ---------------------------------------------------------------------------
# subspace machinery

def _column_space(M, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis for the column space of a rectangular matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M)
    if tol is None:
        tol = rank_tolerance(s, max(M.shape))
    r = int(np.sum(s > tol))
    return u[:, :r].copy()


def _intersect(bases, dim: int) -> np.ndarray:
    """Orthonormal basis of the intersection of column spans."""
    rows = []
    for B in bases:
        if B.shape[1] == 0:
            return np.zeros((dim, 0))
        rows.append(np.eye(dim) - B @ B.T)
    if not rows:
        return np.eye(dim)
    return nullspace(np.vstack(rows))


def _constraint_space(kind: str, M, dim: int) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if kind == "im":
        return _column_space(M)
    if kind == "ker":
        return nullspace(M)
    raise ValueError(f"unknown constraint kind {kind!r} (use 'im' or 'ker')")


@dataclass
class SplitSubspaces:
    """A constrained subspace split into two complementary parts.

    part_a/part_b hold orthonormal bases as columns; the projectors act on
    the ambient coefficient space and sum to the identity on part_a + part_b.
    """

    ambient: str
    part_a: np.ndarray
    part_b: np.ndarray
    projector_a: np.ndarray
    projector_b: np.ndarray

    def coords(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float).reshape(-1)
        M = np.hstack([self.part_a, self.part_b])
        c, *_ = np.linalg.lstsq(M, x, rcond=None)
        ra = self.part_a.shape[1]
        return c[:ra], c[ra:]


def build_splitting(constraints, split_a, split_b, dim: int,
                    ambient: str = "") -> SplitSubspaces:
    """Split the subspace cut out by `constraints` along two conditions.

    Each constraint and each split condition is a pair ("im"|"ker", matrix).
    The two split parts must decompose the constrained subspace exactly;
    otherwise SplitFailure is raised.
    """
    spaces = [_constraint_space(kind, M, dim) for kind, M in constraints]
    V = _intersect(spaces, dim)
    A = _intersect([V, _constraint_space(*split_a, dim)], dim)
    B = _intersect([V, _constraint_space(*split_b, dim)], dim)
    if A.shape[1] + B.shape[1] != V.shape[1]:
        raise SplitFailure(
            f"split dimensions {A.shape[1]} + {B.shape[1]} != {V.shape[1]} "
            f"in {ambient or 'ambient space'}")
    M = np.hstack([A, B])
    if M.shape[1]:
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] <= 1e-10 * max(1.0, s[0]):
            raise SplitFailure(f"split parts nearly dependent (smin={s[-1]:.2e})")
    pinv = np.linalg.pinv(M)
    ra = A.shape[1]
    return SplitSubspaces(ambient=ambient, part_a=A, part_b=B,
                          projector_a=A @ pinv[:ra], projector_b=B @ pinv[ra:])


def hk_projection(gd: GroupData, k: int, char="chi") -> np.ndarray:
    """Matrix of the character-weighted group average on degree-k layers."""
    values = _resolve_char(gd, char)
    dim = hk_dim(gd.n, k)
    P = np.zeros((dim, dim))
    for i, g in enumerate(gd.elements):
        P += values[i] * adk_operator(g, k)
    return P / gd.order


def admissible_exponent_basis(A0, gd: GroupData, ip: AdaptedInnerProduct,
                              j: int, mode: str = "nilpotent") -> np.ndarray:
    """Basis of the degree-j exponent space that the normal form cannot remove.

    nilpotent mode: ker(Ad_j(S0)-I) and ker(ad_j(N0*)) and the chi-graded
    part under the group; semisimple mode: ker(Ad_j(S0)-I) and the
    tilde-chi-graded part under the extended group.
    """
    A0 = require_invertible(A0, "A0")
    su = su_decomposition(A0)
    S0, N0 = su.S, su.nil_log
    dim = hk_dim(A0.shape[0], j)
    K = adk_operator(S0, j) - np.eye(dim)
    pieces = [nullspace(K)]
    if mode == "nilpotent":
        Nstar = ip.adjoint(N0)
        pieces.append(nullspace(adk_field(Nstar, j)))
        pieces.append(_column_space(hk_projection(gd, j, "chi")))
    elif mode == "semisimple":
        ext = extended_group(gd, A0)
        tchi = tilde_character(gd, A0, "chi", ext)
        pieces.append(_column_space(hk_projection(ext, j, tchi)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _intersect(pieces, dim)


# ---------------------------------------------------------------------------
# per-degree data (lambda-independent, frozen at A0)

@dataclass
class _DegreeData:
    j: int
    dim: int
    n_im: int
    n_kerim: int
    blend_lu: tuple
    unknown: np.ndarray
    Jmat: np.ndarray
    jac_smin: float
    jac_smax: float

    def unwanted(self, vec: np.ndarray) -> np.ndarray:
        c = scipy.linalg.lu_solve(self.blend_lu, vec)
        return c[:self.n_im + self.n_kerim]


def _frozen_operator(S0, N0, A0, j: int, mode: str) -> np.ndarray:
    """Exact derivative at (A0, phi=0) of the degree-j exponent layer with
    respect to the degree-j transform generator."""
    dim = hk_dim(S0.shape[0], j)
    if mode == "semisimple":
        return adk_operator(np.linalg.inv(A0), j) - np.eye(dim)
    adN = adk_field(N0, j)
    M = adk_operator(np.linalg.inv(S0), j) - scipy.linalg.expm(-adN)
    return np.linalg.solve(ck_operator(-N0, j), M)


def _degree_data(j: int, S0, N0, Nstar, A0, gd: GroupData, mode: str) -> _DegreeData:
    n = S0.shape[0]
    dim = hk_dim(n, j)
    K = adk_operator(S0, j) - np.eye(dim)
    ker_b = nullspace(K)
    im_b = _column_space(K)
    if im_b.shape[1] + ker_b.shape[1] != dim:
        raise SplitFailure(
            f"degree {j}: ker/im of Ad(S0)-I do not decompose H_{j}")

    T_full = _column_space(hk_projection(gd, j, "trivial"))
    T_im = _intersect([T_full, im_b], dim)

    if mode == "nilpotent":
        adN = adk_field(N0, j)
        adNs = adk_field(Nstar, j)
        kerim_b = _column_space(adN @ ker_b)
        adm_b = ker_b @ nullspace(adNs @ ker_b)
        if kerim_b.shape[1] + adm_b.shape[1] != ker_b.shape[1]:
            raise SplitFailure(
                f"degree {j}: ad(N0)/ad(N0*) split of the resonant space failed")
        blend = np.hstack([im_b, kerim_b, adm_b])
        T_ker = _intersect([T_full, _column_space(adNs @ ker_b)], dim)
        unknown = np.hstack([T_im, T_ker])
        n_kerim = kerim_b.shape[1]
    else:
        blend = np.hstack([im_b, ker_b])
        unknown = T_im
        n_kerim = 0

    if blend.shape[1] != dim:
        raise SplitFailure(f"degree {j}: blended basis is not square")
    blend_lu = scipy.linalg.lu_factor(blend)

    M = _frozen_operator(S0, N0, A0, j, mode)
    n_res = im_b.shape[1] + n_kerim
    if unknown.shape[1]:
        coords = scipy.linalg.lu_solve(blend_lu, M @ unknown)
        Jmat = coords[:n_res]
        s = np.linalg.svd(Jmat, compute_uv=False) if Jmat.size else np.array([0.0])
        smin, smax = float(s[-1]), float(s[0])
    else:
        Jmat = np.zeros((n_res, 0))
        smin = smax = 0.0
    return _DegreeData(j=j, dim=dim, n_im=im_b.shape[1], n_kerim=n_kerim,
                       blend_lu=blend_lu, unknown=unknown, Jmat=Jmat,
                       jac_smin=smin, jac_smax=smax)


# ---------------------------------------------------------------------------
# linear stage

def _gl_stage_data(S0, N0, Nstar, A0, gd: GroupData, mode: str):
    return _degree_data(1, S0, N0, Nstar, A0, gd, mode)


def _linear_newton(A, A0, S0, target_shift, data: _DegreeData, base,
                   tol: float, max_iter: int):
    """Shared Newton for the linear normal forms.

    Drives the unwanted components of W(phi) = log(base^-1 e^phi A e^-phi)
    minus target_shift to zero over the admissible generator space.
    """
    n = A.shape[0]
    base_inv = np.linalg.inv(base)
    scale = max(1.0, float(np.linalg.norm(A)))

    def eval_at(u):
        phi = (data.unknown @ u).reshape(n, n) if data.unknown.shape[1] else np.zeros((n, n))
        E = scipy.linalg.expm(phi)
        W = real_log(base_inv @ E @ A @ np.linalg.inv(E))
        r = data.unwanted((W - target_shift).reshape(-1))
        return phi, W, r

    u = np.zeros(data.unknown.shape[1])
    phi, W, r = eval_at(u)
    for _ in range(max_iter):
        if not r.size or np.max(np.abs(r)) <= tol * scale:
            return phi, W, r
        du, *_ = np.linalg.lstsq(data.Jmat, r, rcond=None)
        step, accepted = 1.0, False
        while step >= 1.0 / 1024:
            cand = u - step * du
            phi_c, W_c, r_c = eval_at(cand)
            r_c_max = np.max(np.abs(r_c)) if r_c.size else 0.0
            if r_c_max <= tol * scale or r_c_max < np.max(np.abs(r)) * (1 - 1e-4 * step):
                u, phi, W, r = cand, phi_c, W_c, r_c
                accepted = True
                break
            step /= 2
        if not accepted:
            raise NoConvergence(
                f"linear stage stalled at residual {np.max(np.abs(r)):.3e}; "
                "input may be outside the Newton basin of A0")
    if r.size and np.max(np.abs(r)) > tol * scale:
        raise NoConvergence(
            f"linear stage: residual {np.max(np.abs(r)):.3e} after {max_iter} iterations")
    return phi, W, r


def linear_nf(A, A0, gd: GroupData, ip: AdaptedInnerProduct,
              tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER):
    """Conjugate A in GL^chi to A0 e^B with B commuting with S0.

    Returns (phi, B) with e^phi A e^-phi = A0 e^B, phi a group-commuting
    matrix in Im(Ad(S0^-1)-I), and B in ker(Ad(S0)-I).
    """
    A = require_invertible(A, "A")
    A0 = require_invertible(A0, "A0")
    if not is_chi_equivariant_linear(A, gd, tol=1e-8):
        raise NotEquivariant("A is not chi-equivariant for the given group")
    su = su_decomposition(A0)
    S0, N0 = su.S, su.nil_log
    Nstar = ip.adjoint(N0)
    data = _gl_stage_data(S0, N0, Nstar, A0, gd, "semisimple")
    phi, W, _ = _linear_newton(A, A0, S0, np.zeros_like(A), data, A0, tol, max_iter)
    return phi, W


def linear_nilpotent_nf(A, A0, gd: GroupData, ip: AdaptedInnerProduct,
                        tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER):
    """Conjugate A in GL^chi to S0 e^{N0 + C} with C in the triple kernel.

    Returns (phi, C) with e^phi A e^-phi = S0 e^{N0+C}; C commutes with S0
    in the Ad sense and lies in ker(ad(N0*)).
    """
    A = require_invertible(A, "A")
    A0 = require_invertible(A0, "A0")
    if not is_chi_equivariant_linear(A, gd, tol=1e-8):
        raise NotEquivariant("A is not chi-equivariant for the given group")
    su = su_decomposition(A0)
    S0, N0 = su.S, su.nil_log
    Nstar = ip.adjoint(N0)
    data = _gl_stage_data(S0, N0, Nstar, A0, gd, "nilpotent")
    phi, W, _ = _linear_newton(A, A0, S0, N0, data, S0, tol, max_iter)
    return phi, W - N0


# ---------------------------------------------------------------------------
# map normal form

@dataclass
class NormalFormResult:
    """Output of the per-family normal-form pipeline.

    One transform/exponent pair per parameter sample; nf_exponent holds the
    full exponent (X for the semisimple target A0 e^X, N0 + X for the
    nilpotent target S0 e^{N0+X}).
    """

    mode: str
    S0: np.ndarray
    N0: np.ndarray
    order: int
    lambdas: list
    transforms: list
    exponents: list
    residuals: list
    admissible: dict
    diagnostics: dict

    @property
    def residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0


def _newton_degree(psi: TruncatedMap, j: int, data: _DegreeData, base_inv,
                   k: int, tol: float, max_iter: int):
    """Degree-j Newton: returns (conjugated psi, transform factor, residual)."""
    n = psi.n
    Mj = num_monomials(n, j)
    scale = max(1.0, psi.max_abs())

    def eval_at(u):
        if data.unknown.shape[1]:
            layer = (data.unknown @ u).reshape(n, Mj)
            Phi = exp_vf(TruncatedMap.zero(n, k).with_layer(j, layer))
            psi_try = ad_conjugate(Phi, psi, k)
        else:
            Phi = TruncatedMap.identity(n, k)
            psi_try = psi
        W = log_map(psi_try.linear_left(base_inv), tol=1e-14)
        r = data.unwanted(W.layer(j).reshape(-1))
        return Phi, psi_try, r

    u = np.zeros(data.unknown.shape[1])
    Phi, cur, r = eval_at(u)
    for _ in range(max_iter):
        if not r.size or np.max(np.abs(r)) <= tol * scale:
            return cur, Phi, float(np.max(np.abs(r))) if r.size else 0.0
        du, *_ = np.linalg.lstsq(data.Jmat, r, rcond=None)
        step, accepted = 1.0, False
        while step >= 1.0 / 1024:
            cand = u - step * du
            Phi_c, psi_c, r_c = eval_at(cand)
            r_c_max = np.max(np.abs(r_c)) if r_c.size else 0.0
            if r_c_max <= tol * scale or r_c_max < np.max(np.abs(r)) * (1 - 1e-4 * step):
                u, Phi, cur, r = cand, Phi_c, psi_c, r_c
                accepted = True
                break
            step /= 2
        if not accepted:
            raise NoConvergence(
                f"degree {j}: Newton stalled at residual {np.max(np.abs(r)):.3e}")
    raise NoConvergence(
        f"degree {j}: residual {np.max(np.abs(r)):.3e} after {max_iter} iterations")


def _projection_space_gap(gd, ext, tchi, k: int) -> float:
    """Spectral-norm gap between the chi projection over the group and the
    tilde-chi projection over the extended group on degree-k layers."""
    P_chi = hk_projection(gd, k, "chi")
    P_til = hk_projection(ext, k, tchi)
    return float(np.linalg.norm(P_til - P_chi, 2))


def _fk_operator_gaps(psi: TruncatedMap, A0, k: int):
    """Compare the actual degree-2 conjugation derivative with two closed
    forms: the derived one and the transcription with the first C-factor
    left uninverted."""
    n = psi.n
    j = 2
    dim = hk_dim(n, j)
    if k < 2 or dim > 80:
        return None
    A0_inv = np.linalg.inv(A0)
    W1 = real_log(A0_inv @ psi.linear())
    Mj = num_monomials(n, j)

    base = log_map(psi.linear_left(A0_inv), tol=1e-14).layer(j).reshape(-1)
    T_true = np.zeros((dim, dim))
    for i in range(dim):
        layer = np.zeros(dim)
        layer[i] = 1.0
        Phi = exp_vf(TruncatedMap.zero(n, k).with_layer(j, layer.reshape(n, Mj)))
        W = log_map(ad_conjugate(Phi, psi, k).linear_left(A0_inv), tol=1e-14)
        T_true[:, i] = W.layer(j).reshape(-1) - base

    Cm = ck_operator(-W1, j)
    Cp = ck_operator(W1, j)
    AdA = adk_operator(A0_inv, j)
    L_derived = np.linalg.solve(Cm, AdA) - np.linalg.inv(Cp)
    L_uninverted = Cm @ AdA - np.linalg.inv(Cp)
    return {
        "derived": float(np.max(np.abs(L_derived - T_true))),
        "uninverted_variant": float(np.max(np.abs(L_uninverted - T_true))),
    }


def _nf_driver(family, A0, gd: GroupData, ip: AdaptedInnerProduct, k: int,
               lambdas, mode: str, tol: float, max_iter: int) -> NormalFormResult:
    A0 = require_invertible(A0, "A0")
    su = su_decomposition(A0)
    S0, N0 = su.S, su.nil_log
    Nstar = ip.adjoint(N0)
    n = A0.shape[0]
    base = A0 if mode == "semisimple" else S0
    base_inv = np.linalg.inv(base)

    degree_data = {j: _degree_data(j, S0, N0, Nstar, A0, gd, mode)
                   for j in range(2, k + 1)}
    gl_data = _gl_stage_data(S0, N0, Nstar, A0, gd, mode)

    lambdas = [np.atleast_1d(np.asarray(lam, dtype=float)) for lam in lambdas]
    transforms, exponents, residuals = [], [], []
    fk_gaps = None

    for idx, lam in enumerate(lambdas):
        psi = family.at(lam).truncated(k)
        A_lam = psi.linear()
        shift = np.zeros((n, n)) if mode == "semisimple" else N0
        try:
            phi_lin, _, _ = _linear_newton(A_lam, A0, S0, shift, gl_data,
                                           base, tol, max_iter)
        except NoConvergence as exc:
            raise NoConvergence(f"linear stage at sample {idx}: {exc}") from exc
        T1 = scipy.linalg.expm(phi_lin)
        psi = conjugate_linear(T1, psi)
        transform = TruncatedMap.from_linear(T1, k)

        per_deg = [0.0]
        if idx == 0 and mode == "semisimple":
            fk_gaps = _fk_operator_gaps(psi, A0, k)
        for j in range(2, k + 1):
            psi, Phi_j, rj = _newton_degree(psi, j, degree_data[j], base_inv,
                                            k, tol, max_iter)
            transform = compose(Phi_j, transform, k)
            per_deg.append(rj)

        W = log_map(psi.linear_left(base_inv), k, tol=1e-14)
        recon = exp_vf(W).linear_left(base)
        residual = max(max(per_deg), (psi - recon).max_abs())
        transforms.append(transform)
        exponents.append(W)
        residuals.append(float(residual))

    admissible = {j: admissible_exponent_basis(A0, gd, ip, j, mode)
                  for j in range(2, k + 1)}
    diagnostics = _nf_diagnostics(mode, S0, N0, Nstar, A0, gd, k, lambdas,
                                  transforms, exponents)
    if fk_gaps is not None:
        diagnostics["fk_operator_gap"] = fk_gaps
    diagnostics["homological_smin"] = {j: degree_data[j].jac_smin
                                       for j in range(2, k + 1)}
    diagnostics["homological_smax"] = {j: degree_data[j].jac_smax
                                       for j in range(2, k + 1)}
    return NormalFormResult(mode=mode, S0=S0, N0=N0, order=k, lambdas=lambdas,
                            transforms=transforms, exponents=exponents,
                            residuals=residuals, admissible=admissible,
                            diagnostics=diagnostics)


def _nf_diagnostics(mode, S0, N0, Nstar, A0, gd, k, lambdas, transforms,
                    exponents) -> dict:
    from .groups import project_map

    n = S0.shape[0]
    d: dict = {}

    equiv = 0.0
    for Phi in transforms:
        for g in gd.elements:
            equiv = max(equiv, (conjugate_linear(g, Phi) - Phi).max_abs())
    d["transform_equivariance_defect"] = equiv

    kernel_defect = 0.0
    ad_defect = 0.0
    chi_defect = 0.0
    for W in exponents:
        X = W.copy()
        if mode == "nilpotent":
            X.layers[0] = X.layers[0] - N0
        for j in range(1, k + 1):
            vec = X.layer(j).reshape(-1)
            K = adk_operator(S0, j) - np.eye(hk_dim(n, j))
            kernel_defect = max(kernel_defect, float(np.max(np.abs(K @ vec))))
            if mode == "nilpotent" and j >= 2:
                ad_defect = max(ad_defect,
                                float(np.max(np.abs(adk_field(Nstar, j) @ vec))))
        chi_defect = max(chi_defect, (W - project_map(W, gd, "chi")).max_abs())
    d["exponent_kernel_defect"] = kernel_defect
    if mode == "nilpotent":
        d["exponent_ad_defect"] = ad_defect
    d["exponent_chi_defect"] = chi_defect

    try:
        ext = extended_group(gd, A0)
        tchi = tilde_character(gd, A0, "chi", ext)
        d["projection_space_gap"] = {
            j: _projection_space_gap(gd, ext, tchi, j) for j in range(1, k + 1)}
        til_defect = 0.0
        for W in exponents:
            XW = W.copy()
            if mode == "nilpotent":
                XW.layers[0] = XW.layers[0] - N0
            til_defect = max(til_defect,
                             (XW - project_map(XW, ext, tchi)).max_abs())
        d["exponent_chitilde_defect"] = til_defect
    except NotEquivariant:
        d["projection_space_gap"] = None
    return d


def semisimple_nf(family, A0, gd: GroupData, ip: AdaptedInnerProduct, k: int,
                  lambdas=((0.0,),), tol: float = NEWTON_TOL,
                  max_iter: int = NEWTON_MAX_ITER) -> NormalFormResult:
    """Normalize a family to A0 e^{X} with X commuting with S0 in the Ad
    sense, degree by degree up to k."""
    return _nf_driver(family, A0, gd, ip, k, lambdas, "semisimple", tol, max_iter)


def nilpotent_nf(family, A0, gd: GroupData, ip: AdaptedInnerProduct, k: int,
                 lambdas=((0.0,),), tol: float = NEWTON_TOL,
                 max_iter: int = NEWTON_MAX_ITER) -> NormalFormResult:
    """Normalize a family to S0 e^{N0 + X} with X in ker(Ad(S0)-I) and
    ker(ad(N0*)), degree by degree up to k."""
    return _nf_driver(family, A0, gd, ip, k, lambdas, "nilpotent", tol, max_iter)
