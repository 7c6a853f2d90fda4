"""Truncated polynomial maps: composition, graded operators, flows."""
import numpy as np
import pytest
import scipy.integrate

from eqnf.errors import DimensionMismatch, NonInvertibleLinearPart
from eqnf.polymap import (AffineMapFamily, MapFamily, TruncatedMap,
                          ad_conjugate, adk_field, adk_operator, ch_compose,
                          ck_operator, compose, conjugate_linear, exp_vf,
                          fischer_gram, hk_dim, inverse_truncated, log_map,
                          monomials, num_monomials, substitution_matrix)


def _mono_eval(x, al):
    return float(np.prod(np.asarray(x, dtype=float) ** np.array(al)))


def test_monomial_order_frozen():
    # graded basis, lex-descending exponents within each degree
    assert monomials(2, 2) == ((2, 0), (1, 1), (0, 2))
    assert monomials(3, 2) == ((2, 0, 0), (1, 1, 0), (1, 0, 1),
                               (0, 2, 0), (0, 1, 1), (0, 0, 2))
    assert monomials(1, 4) == ((4,),)
    assert num_monomials(3, 2) == 6
    assert hk_dim(3, 2) == 18


def test_from_terms_evaluate_jacobian():
    F = TruncatedMap.from_terms(2, 2, [
        {"component": 0, "exponents": [1, 0], "coefficient": 1.0},
        {"component": 0, "exponents": [0, 2], "coefficient": 2.0},
        {"component": 1, "exponents": [1, 1], "coefficient": -1.0},
    ])
    x, y = 0.3, -0.7
    fx = F([x, y])
    assert abs(fx[0] - (x + 2 * y * y)) < 1e-14
    assert abs(fx[1] - (-x * y)) < 1e-14
    J = F.jacobian([x, y])
    J_hand = np.array([[1.0, 4 * y], [-y, -x]])
    assert np.max(np.abs(J - J_hand)) < 1e-14
    # batched evaluation
    pts = np.array([[0.3, -0.7], [0.1, 0.2]])
    vals = F(pts)
    assert vals.shape == (2, 2)
    assert np.max(np.abs(vals[0] - fx)) < 1e-14


def test_terms_roundtrip(rand_map):
    rng = np.random.default_rng(20)
    F = rand_map(rng, 3, 3)
    G = TruncatedMap.from_terms(3, 3, F.to_terms())
    assert G.allclose(F, 1e-14)


def test_compose_hand_oracle():
    # (x + x^2) o (x - x^3) = x + x^2 - x^3 modulo degree 4
    F = TruncatedMap(1, 3, [[[1.0]], [[1.0]], [[0.0]]])
    G = TruncatedMap(1, 3, [[[1.0]], [[0.0]], [[-1.0]]])
    H = compose(F, G)
    assert H.allclose(TruncatedMap(1, 3, [[[1.0]], [[1.0]], [[-1.0]]]), 1e-14)


def test_compose_with_linear_factors(rand_map):
    rng = np.random.default_rng(21)
    F = rand_map(rng, 2, 3)
    M = rng.standard_normal((2, 2)) + 2.0 * np.eye(2)
    L = TruncatedMap.from_linear(M, 3)
    assert compose(L, F).allclose(F.linear_left(M), 1e-12)
    x = 0.3 * rng.standard_normal(2)
    # right composition with a linear map is exact (no truncation loss)
    assert np.max(np.abs(compose(F, L)(x) - F(M @ x))) < 1e-12


def test_compose_truncation_scaling(rand_map):
    rng = np.random.default_rng(22)
    k = 3
    F = rand_map(rng, 2, k)
    G = rand_map(rng, 2, k)
    H = compose(F, G)
    u = rng.standard_normal(2)
    u /= np.linalg.norm(u)
    errs = []
    for s in (2e-2, 1e-2):
        x = s * u
        errs.append(np.max(np.abs(H(x) - F(G(x)))))
    # dropped terms start at degree k + 1
    ratio = errs[0] / errs[1]
    assert 0.7 * 2 ** (k + 1) < ratio < 1.4 * 2 ** (k + 1)


def test_inverse_truncated():
    a = 0.7
    F = TruncatedMap(1, 3, [[[1.0]], [[a]], [[0.0]]])
    H = inverse_truncated(F)
    expected = TruncatedMap(1, 3, [[[1.0]], [[-a]], [[2 * a * a]]])
    assert H.allclose(expected, 1e-13)
    rng = np.random.default_rng(23)
    G = TruncatedMap.zero(3, 4)
    G.layers[0] = rng.standard_normal((3, 3)) + 2.5 * np.eye(3)
    for d in range(2, 5):
        G.layers[d - 1] = 0.5 * rng.standard_normal((3, num_monomials(3, d)))
    Ginv = inverse_truncated(G)
    assert compose(G, Ginv).is_identity(1e-10)
    assert compose(Ginv, G).is_identity(1e-10)


def test_inverse_rejects_singular_linear_part():
    F = TruncatedMap(2, 2, [np.array([[1.0, 0.0], [0.0, 0.0]]),
                            np.zeros((2, 3))])
    with pytest.raises(NonInvertibleLinearPart):
        inverse_truncated(F)


def test_ad_conjugate_matches_explicit(rand_map):
    rng = np.random.default_rng(24)
    F = rand_map(rng, 2, 3)
    T = rand_map(rng, 2, 3, invertible=True)
    lhs = ad_conjugate(T, F)
    rhs = compose(compose(T, F), inverse_truncated(T))
    assert lhs.allclose(rhs, 1e-10)
    M = rng.standard_normal((2, 2)) + 2.0 * np.eye(2)
    assert ad_conjugate(TruncatedMap.from_linear(M, 3), F).allclose(
        conjugate_linear(M, F), 1e-10)


def test_substitution_matrix_pointwise():
    rng = np.random.default_rng(25)
    for n, d in ((2, 3), (3, 2)):
        T = rng.standard_normal((n, n))
        S = substitution_matrix(T, d)
        x = rng.standard_normal(n)
        mono = [_mono_eval(x, al) for al in monomials(n, d)]
        Tx = T @ x
        for r, al in enumerate(monomials(n, d)):
            assert abs(_mono_eval(Tx, al) - float(S[r] @ mono)) < 1e-10


def test_conjugate_linear_pointwise(rand_map):
    # regression: the conjugation must be M F(M^-1 x) for a non-symmetric M
    rng = np.random.default_rng(26)
    F = rand_map(rng, 3, 3)
    M = rng.standard_normal((3, 3)) + 2.0 * np.eye(3)
    C = conjugate_linear(M, F)
    Minv = np.linalg.inv(M)
    for _ in range(5):
        x = 0.4 * rng.standard_normal(3)
        assert np.max(np.abs(C(x) - M @ F(Minv @ x))) < 1e-11


def test_conjugate_linear_action_law(rand_map):
    rng = np.random.default_rng(27)
    F = rand_map(rng, 2, 4)
    M1 = rng.standard_normal((2, 2)) + 2.0 * np.eye(2)
    M2 = rng.standard_normal((2, 2)) + 2.0 * np.eye(2)
    lhs = conjugate_linear(M1 @ M2, F)
    rhs = conjugate_linear(M1, conjugate_linear(M2, F))
    assert lhs.allclose(rhs, 1e-10)


def test_adk_operator_matches_conjugation(rand_map):
    rng = np.random.default_rng(28)
    F = rand_map(rng, 2, 3)
    M = rng.standard_normal((2, 2)) + 2.0 * np.eye(2)
    C = conjugate_linear(M, F)
    for d in range(1, 4):
        lhs = adk_operator(M, d) @ F.layer(d).reshape(-1)
        assert np.max(np.abs(lhs - C.layer(d).reshape(-1))) < 1e-11


def test_adk_field_bracket_oracle():
    rng = np.random.default_rng(29)
    n, k = 3, 3
    N = rng.standard_normal((n, n))
    Y = TruncatedMap.zero(n, k)
    Y.layers[k - 1] = rng.standard_normal((n, num_monomials(n, k)))
    Z = (adk_field(N, k) @ Y.layer(k).reshape(-1)).reshape(n, -1)
    Zmap = TruncatedMap.zero(n, k)
    Zmap.layers[k - 1] = Z
    for _ in range(5):
        x = rng.standard_normal(n)
        bracket = Y.jacobian(x) @ (N @ x) - N @ Y(x)
        assert np.max(np.abs(Zmap(x) - bracket)) < 1e-10


def test_ck_operator_scalar_oracle():
    # n = 1: ad on x^k fields is multiplication by a(k-1)
    a, k = 0.6, 4
    C = ck_operator(np.array([[a]]), k)
    z = a * (k - 1)
    assert C.shape == (1, 1)
    assert abs(C[0, 0] - (np.exp(z) - 1.0) / z) < 1e-12
    assert np.max(np.abs(ck_operator(np.zeros((2, 2)), 3)
                         - np.eye(hk_dim(2, 3)))) < 1e-14


def test_ck_operator_quadrature_oracle():
    # C_k(X1) = integral over s in [0,1] of the conjugation action of e^{-s X1}
    rng = np.random.default_rng(30)
    n, k = 2, 3
    X1 = 0.7 * rng.standard_normal((n, n))
    nodes, weights = np.polynomial.legendre.leggauss(12)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    quad = sum(wi * adk_operator(scipy.linalg.expm(-si * X1), k)
               for si, wi in zip(s, w))
    assert np.max(np.abs(ck_operator(X1, k) - quad)) < 1e-12


def test_ch_compose_both_sides(rand_map):
    rng = np.random.default_rng(31)
    n, k = 2, 3
    X = rand_map(rng, n, k, amp=0.3)
    X.layers[0] = 0.4 * rng.standard_normal((n, n))
    Yk = 0.3 * rng.standard_normal((n, num_monomials(n, k)))
    Y = TruncatedMap.zero(n, k)
    Y.layers[k - 1] = Yk

    Zr = ch_compose(X, Yk, k, side="right")
    assert exp_vf(Zr, k).allclose(compose(exp_vf(X, k), exp_vf(Y, k)), 1e-10)
    Zl = ch_compose(X, Yk, k, side="left")
    assert exp_vf(Zl, k).allclose(compose(exp_vf(Y, k), exp_vf(X, k)), 1e-10)
    with pytest.raises(ValueError):
        ch_compose(X, Yk, k, side="middle")


def test_exp_vf_linear_is_expm():
    rng = np.random.default_rng(32)
    A = rng.standard_normal((3, 3))
    X = TruncatedMap.from_linear(A, 3)
    E = exp_vf(X)
    assert np.max(np.abs(E.linear() - scipy.linalg.expm(A))) < 1e-12
    assert np.max(np.abs(E.layer(2))) < 1e-13
    assert np.max(np.abs(E.layer(3))) < 1e-13


def test_exp_vf_flow_oracle(rand_map):
    rng = np.random.default_rng(33)
    X = rand_map(rng, 2, 4, amp=0.3)
    X.layers[0] = 0.3 * rng.standard_normal((2, 2))
    F = exp_vf(X)
    errs = []
    for s in (1.0, 0.5):
        x0 = s * np.array([0.02, -0.015])
        sol = scipy.integrate.solve_ivp(lambda t, x: X(x), (0.0, 1.0), x0,
                                        rtol=1e-12, atol=1e-14)
        errs.append(np.max(np.abs(F(x0) - sol.y[:, -1])))
    assert errs[0] < 1e-7
    # the defect is the degree-5 truncation error, so it scales as |x0|^5
    assert 20.0 < errs[0] / errs[1] < 48.0


def test_exp_vf_inverse_and_naturality(rand_map):
    rng = np.random.default_rng(34)
    X = rand_map(rng, 2, 3, amp=0.4)
    assert compose(exp_vf(X), exp_vf(-X)).is_identity(1e-11)
    M = rng.standard_normal((2, 2)) + 2.0 * np.eye(2)
    lhs = conjugate_linear(M, exp_vf(X))
    rhs = exp_vf(conjugate_linear(M, X))
    assert lhs.allclose(rhs, 1e-11)


def test_log_map_roundtrip(rand_map):
    rng = np.random.default_rng(35)
    X = rand_map(rng, 2, 4, amp=0.3)
    X.layers[0] = 0.4 * rng.standard_normal((2, 2))
    L = log_map(exp_vf(X), tol=1e-14)
    assert L.allclose(X, 1e-12)


def test_fischer_gram_adjointness():
    rng = np.random.default_rng(36)
    n, k = 2, 3
    M = rng.standard_normal((n, n))
    gram = M @ M.T + 3.0 * np.eye(n)
    from eqnf.linalg import AdaptedInnerProduct
    ip = AdaptedInnerProduct(gram)
    Gk = fischer_gram(n, k, gram)
    assert np.max(np.abs(Gk - Gk.T)) < 1e-10
    assert np.min(np.linalg.eigvalsh(Gk)) > 0
    N = rng.standard_normal((n, n))
    lhs = Gk @ adk_field(N, k)
    rhs = adk_field(ip.adjoint(N), k).T @ Gk
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_map_family_shapes(rand_map):
    rng = np.random.default_rng(37)
    base = rand_map(rng, 2, 3)
    slope = rand_map(rng, 2, 3)
    fam = AffineMapFamily(base, [slope])
    F = fam.at([0.25])
    assert F.allclose(base + slope * 0.25, 1e-14)
    assert fam.at(0.25).allclose(F, 1e-14)  # scalar promotes to length one
    with pytest.raises(DimensionMismatch):
        fam.at([0.1, 0.2])
    with pytest.raises(DimensionMismatch):
        AffineMapFamily(base, [rand_map(rng, 2, 2)])
