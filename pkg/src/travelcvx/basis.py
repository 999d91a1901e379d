"""Exponential-polynomial orthonormal basis on (0, pi) in the source parameter.

phi_0..phi_{N-1} is the orthonormalization in L2(0, pi) of
psi_j(a) = (a + beta)**j * exp(a), so phi_n = P_n(a) exp(a) with deg P_n = n.
Modified Gram-Schmidt (one re-orthogonalization pass) is run on the vectors
a * phi_{n-1} rather than on psi_n itself: both sequences span the same
nested spaces, so the phi_n agree, but the powers (a + beta)^n are nearly
dependent and cost about four digits per basis function at N = 15.  The
derivative Gram matrix turns the derivative data (f', phi_n) of a function
f in the span back into its coefficients, without any initial condition.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .containers import read_container, write_container
from .errors import BasisError

ORTHO_TOL = 1e-10
PANEL_DEGREE = 10


def composite_gauss(n_panels, lo=0.0, hi=np.pi, degree=PANEL_DEGREE):
    """Composite Gauss-Legendre nodes and weights on [lo, hi]."""
    x, w = np.polynomial.legendre.leggauss(degree)
    edges = np.linspace(lo, hi, n_panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * (x[None, :] + 1.0) * h[:, None]).ravel()
    weights = (0.5 * w[None, :] * h[:, None]).ravel()
    return nodes, weights


def gauss_lobatto(n, lo=0.0, hi=np.pi):
    """Gauss-Lobatto-Legendre nodes and weights on [lo, hi] (endpoints included)."""
    if n < 2:
        raise ValueError("Gauss-Lobatto rule needs at least 2 nodes")
    if n == 2:
        x = np.array([-1.0, 1.0])
    else:
        c = np.zeros(n)
        c[-1] = 1.0
        interior = np.polynomial.legendre.legroots(np.polynomial.legendre.legder(c))
        x = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    c = np.zeros(n)
    c[-1] = 1.0
    pn = np.polynomial.legendre.legval(x, c)
    w = 2.0 / (n * (n - 1) * pn**2)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _psi(a, beta, n):
    """Values and derivatives of psi_0..psi_{n-1} at points ``a``."""
    a = np.asarray(a, dtype=float)
    s = a + beta
    e = np.exp(a)
    powers = np.array([s**j for j in range(n)])
    psi = powers * e
    dpsi = psi.copy()
    for j in range(1, n):
        dpsi[j] += j * powers[j - 1] * e
    return psi, dpsi


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal basis phi_0..phi_{N-1} tabulated on quadrature nodes.

    ``proj`` and ``norms`` hold the Gram-Schmidt recurrence
    phi_n = (a phi_{n-1} - sum_m proj[n, m] phi_m) / norms[n] (phi_0 = psi_0 /
    norms[0]), which evaluates the basis at new points as stably as the
    construction itself.  ``Y`` is the explicit lower-triangular matrix with
    phi = Y psi.
    """

    N: int
    beta: float
    quad_order: int
    nodes: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    Y: np.ndarray
    proj: np.ndarray
    norms: np.ndarray

    def evaluate(self, a):
        """Return ``(phi, phi_prime)``, each of shape (N, len(a))."""
        return _recurrence(np.atleast_1d(np.asarray(a, dtype=float)), self.proj, self.norms)

    def psi(self, a):
        return _psi(np.atleast_1d(a), self.beta, self.N)[0]

    def gram(self):
        return (self.phi * self.weights) @ self.phi.T

    def summary(self):
        g = self.gram()
        return {
            "N": self.N,
            "beta": self.beta,
            "quad_order": self.quad_order,
            "n_nodes": int(self.nodes.size),
            "orthonormality_error": float(np.abs(g - np.eye(self.N)).max()),
            "max_abs_Y": float(np.abs(self.Y).max()),
        }


def _recurrence(a, proj, norms):
    """phi and phi' at points ``a`` from the stored Gram-Schmidt coefficients."""
    N = norms.size
    phi = np.empty((N, a.size))
    dphi = np.empty_like(phi)
    phi[0] = np.exp(a) / norms[0]
    dphi[0] = phi[0]
    for n in range(1, N):
        phi[n] = (a * phi[n - 1] - proj[n, :n] @ phi[:n]) / norms[n]
        dphi[n] = (phi[n - 1] + a * dphi[n - 1] - proj[n, :n] @ dphi[:n]) / norms[n]
    return phi, dphi


def build_basis(N, beta=1.0, quad_order=16):
    """Orthonormalize psi_j = (a + beta)^j e^a, j < N, in L2(0, pi).

    Raises
    ------
    BasisError
        If the resulting Gram matrix deviates from the identity by more than
        1e-10; the message names the first offending pair (i, j).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if quad_order < 1:
        raise ValueError("quad_order must be >= 1")
    nodes, weights = composite_gauss(quad_order)

    phi = np.zeros((N, nodes.size))
    proj = np.zeros((N, N))
    norms = np.zeros(N)
    Y = np.zeros((N, N))
    for n in range(N):
        if n == 0:
            v = np.exp(nodes)
            coef = np.zeros(N)
            coef[0] = 1.0
        else:
            # a psi_j = psi_{j+1} - beta psi_j
            v = nodes * phi[n - 1]
            coef = np.zeros(N)
            coef[1:] = Y[n - 1, :-1]
            coef -= beta * Y[n - 1]
        for _ in range(2):  # second sweep re-orthogonalizes
            for m in range(n):
                r = np.sum(weights * v * phi[m])
                v -= r * phi[m]
                proj[n, m] += r
                coef -= r * Y[m]
        nrm = np.sqrt(np.sum(weights * v * v))
        if not nrm > 0:
            raise BasisError(f"phi_{n} is numerically dependent on lower-order functions")
        norms[n] = nrm
        phi[n] = v / nrm
        Y[n] = coef / nrm

    gram = (phi * weights) @ phi.T
    bad = np.argwhere(np.abs(gram - np.eye(N)) > ORTHO_TOL)
    if bad.size:
        i, j = (int(k) for k in bad[0])
        raise BasisError(
            f"loss of orthogonality at pair ({i}, {j}): "
            f"|gram - delta| = {abs(gram[i, j] - (i == j)):.3e}; increase quad_order"
        )
    phi, dphi = _recurrence(nodes, proj, norms)
    return BasisSet(N, float(beta), int(quad_order), nodes, weights, phi, dphi, Y, proj, norms)


@dataclass(frozen=True)
class DerivativeGram:
    """Matrix A with A[n, m] = (phi'_m, phi_n), so that A z = y.

    Here z are the coefficients of f and y_n = (f', phi_n).  ``A`` is unit
    upper triangular: phi'_m - phi_m = P'_m e^a lies in span(phi_0..phi_{m-1}).
    """

    A: np.ndarray
    A_inv: np.ndarray
    cond: float
    lu: tuple

    def solve(self, y):
        return scipy.linalg.lu_solve(self.lu, y)


def derivative_gram(b):
    """Tabulate A_N for basis ``b`` and factor it with partial pivoting."""
    A = ((b.phi_prime * b.weights) @ b.phi.T).T
    lu, piv = scipy.linalg.lu_factor(A)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < 1e-14 * np.abs(A).max():
        raise BasisError(f"derivative Gram matrix numerically singular (min pivot {pivots.min():.3e})")
    A_inv = scipy.linalg.lu_solve((lu, piv), np.eye(b.N))
    return DerivativeGram(A, A_inv, float(np.linalg.cond(A)), (lu, piv))


def project_function(b, f):
    """Coefficients f_m = (f, phi_m) of samples ``f`` on ``b.nodes``."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != b.nodes.size:
        raise ValueError(f"expected {b.nodes.size} samples on the basis nodes, got {f.shape[-1]}")
    return (f * b.weights) @ b.phi.T


def synthesize(b, coeffs, a=None):
    """Evaluate sum_m coeffs[m] phi_m at ``a`` (default: the quadrature nodes)."""
    phi = b.phi if a is None else b.evaluate(a)[0]
    return np.asarray(coeffs) @ phi


def reconstruct_from_derivative(g, y):
    """Coefficients z of f from y_n = (f', phi_n); exact for f in the span."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("derivative data must be finite")
    return g.solve(y)


def save_basis(path, b, g=None):
    meta = {"N": b.N, "beta": b.beta, "quad_order": b.quad_order}
    arrays = {
        "nodes": b.nodes, "weights": b.weights, "phi": b.phi,
        "phi_prime": b.phi_prime, "Y": b.Y, "proj": b.proj, "norms": b.norms,
    }
    if g is not None:
        meta["cond"] = g.cond
        arrays.update(A=g.A, A_inv=g.A_inv)
    write_container(path, "basis", meta, arrays)


def load_basis(path):
    """Return ``(BasisSet, DerivativeGram or None)`` from a container file."""
    meta, arr = read_container(path, kind="basis")
    b = BasisSet(int(meta["N"]), float(meta["beta"]), int(meta["quad_order"]),
                 arr["nodes"], arr["weights"], arr["phi"], arr["phi_prime"],
                 arr["Y"], arr["proj"], arr["norms"])
    g = None
    if "A" in arr:
        lu = scipy.linalg.lu_factor(arr["A"])
        g = DerivativeGram(arr["A"], arr["A_inv"], float(meta["cond"]), lu)
    return b, g
