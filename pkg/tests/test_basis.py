import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from travelcvx.basis import (build_basis, composite_gauss, derivative_gram, gauss_lobatto,
                             load_basis, project_function, reconstruct_from_derivative,
                             save_basis, synthesize)
from travelcvx.errors import BasisError


def test_n1_is_normalized_exponential():
    b = build_basis(1)
    exact = np.exp(b.nodes) / np.sqrt((np.exp(2 * np.pi) - 1) / 2)
    assert np.allclose(b.phi[0], exact, rtol=1e-12)
    g = derivative_gram(b)
    assert abs(g.A[0, 0] - 1.0) < 1e-12


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("N", [2, 5, 10, 15])
def test_orthonormal_and_invertible(N, beta):
    b = build_basis(N, beta)
    assert b.summary()["orthonormality_error"] <= 1e-10
    g = derivative_gram(b)
    assert np.isfinite(g.cond)
    assert np.allclose(np.diag(g.A), 1.0, atol=1e-8)
    assert np.allclose(np.tril(g.A, -1), 0.0, atol=1e-8)
    assert np.allclose(g.A @ g.A_inv, np.eye(N), atol=1e-8 * g.cond)


def test_quadrature_exact_on_polynomials():
    x, w = composite_gauss(4)
    assert abs(np.sum(w * x**7) - np.pi**8 / 8) < 1e-10
    x, w = gauss_lobatto(9)
    assert x[0] == 0.0 and abs(x[-1] - np.pi) < 1e-15
    assert abs(np.sum(w * x**15) - np.pi**16 / 16) < 1e-8


def test_phi_equals_Y_psi():
    b = build_basis(6)
    a = np.linspace(0, np.pi, 11)
    phi, dphi = b.evaluate(a)
    rel = np.abs(b.Y @ b.psi(a) - phi).max() / np.abs(phi).max()
    assert rel < 1e-9


def test_evaluate_matches_table():
    b = build_basis(8)
    phi, dphi = b.evaluate(b.nodes)
    assert np.allclose(phi, b.phi, atol=1e-12)
    assert np.allclose(dphi, b.phi_prime, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_derivative_recovery_on_span(N, seed):
    b = build_basis(N)
    g = derivative_gram(b)
    z = np.random.default_rng(seed).standard_normal(N)
    f_prime = z @ b.phi_prime
    y = project_function(b, f_prime)
    assert np.abs(reconstruct_from_derivative(g, y) - z).max() <= 1e-7 * max(1, np.abs(z).max())


def test_synthesize_roundtrip():
    b = build_basis(5)
    z = np.arange(1.0, 6.0)
    assert np.allclose(project_function(b, synthesize(b, z)), z, atol=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        build_basis(0)
    with pytest.raises(ValueError):
        build_basis(3, beta=-1)
    with pytest.raises(BasisError, match="pair"):
        build_basis(15, quad_order=1)
    g = derivative_gram(build_basis(3))
    with pytest.raises(ValueError):
        reconstruct_from_derivative(g, [1.0, np.nan, 0.0])
    with pytest.raises(ValueError):
        project_function(build_basis(3), np.ones(7))


def test_save_load(tmp_path):
    b = build_basis(4, 0.5)
    g = derivative_gram(b)
    save_basis(tmp_path / "b.tcvx", b, g)
    b2, g2 = load_basis(tmp_path / "b.tcvx")
    assert np.array_equal(b2.phi, b.phi) and np.array_equal(g2.A_inv, g.A_inv)
    assert b2.beta == 0.5


def _exact_basis(N, a_points, dps=50):
    """phi_n and phi_n' from high-precision Gram-Schmidt on exact moments."""
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = dps
    M = [mp.quad(lambda a, k=k: a**k * mp.e ** (2 * a), [0, mp.pi]) for k in range(2 * N)]

    def ip(p, q):
        return mp.fsum(p[i] * q[j] * M[i + j] for i in range(len(p)) for j in range(len(q)))

    P = []
    for n in range(N):
        v = [mp.mpf(0)] * n + [mp.mpf(1)]
        for m in range(n):
            r = ip(v, P[m])
            v = [v[i] - r * (P[m][i] if i < len(P[m]) else 0) for i in range(len(v))]
        nrm = mp.sqrt(ip(v, v))
        P.append([c / nrm for c in v])
    phi = np.zeros((N, len(a_points)))
    dphi = np.zeros_like(phi)
    for j, a in enumerate(a_points):
        a = mp.mpf(float(a))
        e = mp.e**a
        for n, p in enumerate(P):
            val = mp.fsum(c * a**i for i, c in enumerate(p))
            der = mp.fsum(i * c * a ** (i - 1) for i, c in enumerate(p) if i)
            phi[n, j] = float(val * e)
            dphi[n, j] = float((val + der) * e)
    return phi, dphi


def test_against_extended_precision_oracle():
    N = 15
    b = build_basis(N)
    pts = np.linspace(0, np.pi, 9)
    phi, dphi = b.evaluate(pts)
    ex, exd = _exact_basis(N, pts)
    assert np.abs(phi - ex).max() < 1e-11
    assert (np.abs(dphi - exd).max(axis=1) / np.abs(exd).max(axis=1)).max() < 1e-11


def test_unit_coefficient_and_zero_examples():
    b = build_basis(5)
    g = derivative_gram(b)
    assert np.abs(project_function(b, b.phi[2]) - np.eye(5)[2]).max() < 1e-10
    assert np.all(project_function(b, np.zeros(b.nodes.size)) == 0)
    y = project_function(b, b.phi_prime[1])
    assert np.abs(reconstruct_from_derivative(g, y) - np.eye(5)[1]).max() < 1e-8
    assert np.all(reconstruct_from_derivative(g, np.zeros(5)) == 0)


def test_identity_function_against_adaptive_quadrature():
    from scipy.integrate import quad

    b = build_basis(6)
    coef = project_function(b, b.nodes)
    oracle = [quad(lambda a, m=m: a * b.evaluate(a)[0][m, 0], 0, np.pi, epsabs=1e-13, limit=200)[0]
              for m in range(6)]
    assert np.abs(coef - oracle).max() < 1e-9


def test_psi_positive_and_projection_does_not_commute_with_derivative():
    b = build_basis(6, beta=0.5)
    assert b.psi(b.nodes).min() > 0
    f = np.sin(3 * b.nodes)
    df = 3 * np.cos(3 * b.nodes)
    d_of_proj = project_function(b, f) @ b.phi_prime
    proj_of_d = project_function(b, df) @ b.phi
    assert np.sqrt(np.sum(b.weights * (d_of_proj - proj_of_d) ** 2)) > 0
