"""The nonlinear coefficient system and its feasibility constraints.

The unknown is the coefficient field Q = {w_{n,km}(z)}, shape (N, K, K, nz),
which synthesizes V(x, y, z, a) = sum w_{n,km}(z) phi_n(a) sin(kx) sin(my).
With v = v_foot + q + V and

    B_x(z) = p_x(B2) - int_z^B2 v_x / (2 sqrt v) ds     (same for y),

the eikonal equation reads c = v + B_x^2 + B_y^2, independent of a.
Projecting d/da of that identity onto phi_j sin(kx) sin(my) and solving with
the derivative Gram matrix gives the fixed-point system whose residual is

    R(Q) = Q + A^{-1} P[v_foot + q + B_x^2 + B_y^2],

where P samples d/da weakly at the sources and projects onto the sines.
"""
from dataclasses import dataclass

import numpy as np

from .containers import read_container, write_container
from .errors import InfeasibleError
from .transform import (build_q_extension, sine_tables, split_boundary_data, surface_v,
                        weak_derivative_matrix)


@dataclass(frozen=True)
class CoeffField:
    """Channel functions w_{n,km} on the z-levels of G, shape (N, K, K, nz)."""

    w: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if self.w.ndim != 4 or self.w.shape[1] != self.w.shape[2]:
            raise ValueError(f"expected shape (N, K, K, nz), got {self.w.shape}")
        if self.w.shape[-1] != self.z.size:
            raise ValueError("z-grid does not match the last axis of w")

    @property
    def N(self):
        return self.w.shape[0]

    @property
    def K(self):
        return self.w.shape[1]

    @classmethod
    def zeros(cls, N, K, z):
        return cls(np.zeros((N, K, K, len(z))), np.asarray(z, dtype=float))

    def with_w(self, w):
        return CoeffField(w, self.z)

    def boundary_ok(self, tol=0.0):
        return bool(np.abs(self.w[..., 0]).max() <= tol)


@dataclass(frozen=True)
class FeasibilityParams:
    """Radius R of the H1 ball and margin d of the pointwise bound q + V > -d."""

    R: float
    d: float
    v_floor: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not 0 < self.d < self.v_floor:
            raise ValueError(f"d must lie in (0, {self.v_floor:.6f})")

    @property
    def floor(self):
        """Lower bound of v on the feasible set."""
        return self.v_floor - self.d


# --- H1 geometry on the z-grid ------------------------------------------------

def trapezoid_z(nz, hz):
    w = np.full(nz, hz)
    w[0] = w[-1] = 0.5 * hz
    return w


def h1_inner(P, Q, hz):
    """Discrete H1(B1, B2) inner product summed over channels."""
    zeta = trapezoid_z(P.shape[-1], hz)
    mass = np.sum(P * Q * zeta)
    stiff = np.sum(np.diff(P, axis=-1) * np.diff(Q, axis=-1)) / hz
    return float(mass + stiff)


def h1_norm(P, hz):
    return np.sqrt(max(h1_inner(P, P, hz), 0.0))


def l2_norm(P, hz):
    return float(np.sqrt(np.sum(P * P * trapezoid_z(P.shape[-1], hz))))


# --- the problem object ---------------------------------------------------------

def _suffix_trapezoid(f, hz):
    """int_z^B2 f ds at every level by the trapezoid rule (last axis)."""
    seg = 0.5 * hz * (f[..., :-1] + f[..., 1:])
    tail = np.zeros_like(f)
    tail[..., :-1] = np.cumsum(seg[..., ::-1], axis=-1)[..., ::-1]
    return tail


def _suffix_trapezoid_adjoint(g, hz):
    """Transpose of ``_suffix_trapezoid``."""
    sbar = np.cumsum(g[..., :-1], axis=-1)
    out = np.zeros_like(g)
    out[..., :-1] += 0.5 * hz * sbar
    out[..., 1:] += 0.5 * hz * sbar
    return out


@dataclass
class Evaluation:
    """Intermediate fields of one residual evaluation (reused by the adjoint)."""

    Q: np.ndarray
    v: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    root: np.ndarray
    active: np.ndarray
    Bx: np.ndarray
    By: np.ndarray
    residual: np.ndarray


class InversionProblem:
    """Precomputed tables for the residual on one data set.

    Parameters
    ----------
    data : BoundaryData
    b, g : BasisSet, DerivativeGram
    K : sine truncation order
    d : margin of the pointwise constraint (sets the sqrt floor)
    """

    def __init__(self, data, b, g, K, d=0.07):
        s = data.spec
        if 2 * (min(s.nx, s.ny) - 1) < 4 * K:
            raise ValueError(f"K={K} too large for the transverse grid")
        self.spec = s
        self.data = data
        self.b = b
        self.g = g
        self.N = b.N
        self.K = K
        self.hz = s.hz
        self.z = s.z
        self.v_floor = s.v_floor
        self.d = float(d)
        self.floor = self.v_floor - self.d

        self.sv = surface_v(s, data.sources)
        self.walls = split_boundary_data(data)
        self.ext = build_q_extension(self.walls, s)
        self.phi_s, self.dphi_s = b.evaluate(data.sources)
        self.Wa = weak_derivative_matrix(b, data.sources, s.source_weights)
        self.Sx, self.Cx, self.Px = sine_tables(s.x, K)
        self.Sy, self.Cy, self.Py = sine_tables(s.y, K)
        self.base = self.sv.v + self.ext.q
        self.base_x = self.sv.vx + self.ext.qx
        self.base_y = self.sv.vy + self.ext.qy
        self.top_x = data.top_x[..., None]
        self.top_y = data.top_y[..., None]
        # -A^{-1} P[v_foot] and -A^{-1} P[q]: the known right-hand side
        self.v0_hat = -self.project(self.sv.v)
        self.q_hat = -self.project(self.ext.q)
        self.zeta = trapezoid_z(s.nz, self.hz)

    # linear maps between sample space (S, nx, ny, nz) and coefficient space
    def synth(self, w, tx=None, ty=None):
        tx = self.Sx if tx is None else tx
        ty = self.Sy if ty is None else ty
        return np.einsum("nkmz,ns,ki,ml->silz", w, self.phi_s, tx, ty, optimize=True)

    def synth_adjoint(self, f, tx=None, ty=None):
        tx = self.Sx if tx is None else tx
        ty = self.Sy if ty is None else ty
        return np.einsum("silz,ns,ki,ml->nkmz", f, self.phi_s, tx, ty, optimize=True)

    def project(self, f):
        """A^{-1} applied to the weak a-derivative sine projection of samples f."""
        y = np.einsum("js,ki,ml,silz->jkmz", self.Wa, self.Px, self.Py, f, optimize=True)
        return np.einsum("nj,jkmz->nkmz", self.g.A_inv, y)

    def project_adjoint(self, c):
        y = np.einsum("nj,nkmz->jkmz", self.g.A_inv, c)
        return np.einsum("js,ki,ml,jkmz->silz", self.Wa, self.Px, self.Py, y, optimize=True)

    def constraint_matrix(self):
        """Matrix M with synth(w)[..., l] = M @ w[..., l] flattened, rows (s, i, j).

        The same M serves every z level; it is built once and cached.
        """
        if getattr(self, "_cmat", None) is None:
            M = np.einsum("ns,ki,ml->silnkm", self.phi_s, self.Sx, self.Sy, optimize=True)
            self._cmat = M.reshape(-1, self.N * self.K * self.K)
        return self._cmat

    def zero(self):
        return CoeffField.zeros(self.N, self.K, self.z)

    def _w(self, Q):
        w = Q.w if isinstance(Q, CoeffField) else np.asarray(Q)
        if w.shape != (self.N, self.K, self.K, self.spec.nz):
            raise ValueError(f"coefficient shape {w.shape} does not match the problem")
        return w

    def synthesize_v(self, Q):
        """v = v_foot + q + V on the sources x G grid, shape (S, nx, ny, nz)."""
        return self.base + self.synth(self._w(Q))

    def evaluate(self, Q):
        w = self._w(Q)
        v = self.base + self.synth(w)
        vx = self.base_x + self.synth(w, self.Cx, self.Sy)
        vy = self.base_y + self.synth(w, self.Sx, self.Cy)
        active = v > self.floor
        root = np.sqrt(np.where(active, v, self.floor))
        Bx = self.top_x - _suffix_trapezoid(vx / (2 * root), self.hz)
        By = self.top_y - _suffix_trapezoid(vy / (2 * root), self.hz)
        res = w + self.project(self.base + Bx**2 + By**2)
        return Evaluation(w, v, vx, vy, root, active, Bx, By, res)

    def residual(self, Q, check=True):
        """R(Q), shape (N, K, K, nz); rejects Q with v below the floor."""
        ev = self.evaluate(Q)
        if check and not ev.active.all():
            idx = np.unravel_index(np.argmin(ev.v), ev.v.shape)
            raise InfeasibleError(f"v falls below the floor {self.floor:.4g} at (source, i, j, k)={idx}",
                                  index=idx, margin=float(ev.v[idx] - self.floor))
        return ev.residual

    def residual_adjoint(self, ev, rbar):
        """Gradient of <rbar, R(Q)> with respect to w (Euclidean)."""
        ebar = self.project_adjoint(rbar)
        bxbar = 2 * ev.Bx * ebar
        bybar = 2 * ev.By * ebar
        fxbar = -_suffix_trapezoid_adjoint(bxbar, self.hz)
        fybar = -_suffix_trapezoid_adjoint(bybar, self.hz)
        vxbar = fxbar / (2 * ev.root)
        vybar = fybar / (2 * ev.root)
        rootbar = -(fxbar * ev.vx + fybar * ev.vy) / (2 * ev.root**2)
        vbar = np.where(ev.active, rootbar / (2 * ev.root), 0.0)
        return (rbar + self.synth_adjoint(vbar)
                + self.synth_adjoint(vxbar, self.Cx, self.Sy)
                + self.synth_adjoint(vybar, self.Sx, self.Cy))

    # c-recovery ---------------------------------------------------------------
    def c_per_source(self, Q):
        """c(u, a) = v + B_x^2 + B_y^2 at every source, shape (S, nx, ny, nz)."""
        ev = self.evaluate(Q)
        return ev.v + ev.Bx**2 + ev.By**2


# --- feasibility ------------------------------------------------------------------

@dataclass(frozen=True)
class Feasibility:
    ok: bool
    margin: float
    h1: float
    worst_index: tuple
    reason: str = ""


def feasibility_check(Q, problem, f):
    """q + V > -d at every node, ||Q||_H1 < R and Q(B1) = 0."""
    w = problem._w(Q)
    sv = problem.ext.q + problem.synth(w)
    idx = np.unravel_index(np.argmin(sv), sv.shape)
    margin = float(sv[idx] + f.d)
    h1 = h1_norm(w, problem.hz)
    reasons = []
    if not margin > 0:
        reasons.append("pointwise bound")
    if not h1 < f.R:
        reasons.append("H1 ball")
    if np.any(w[..., 0] != 0):
        reasons.append("Q(B1) != 0")
    return Feasibility(not reasons, margin, h1, tuple(int(i) for i in idx), ", ".join(reasons))


def positivity_certificate(Q, problem, q_coeffs=None):
    """Sufficient test for q + V >= 0 through the psi expansion.

    With s_n(u) the phi_n-coefficient of q + V, q + V = sum_j (Y^T s)_j psi_j
    and every psi_j > 0, so non-negative Y^T s certifies q + V >= 0.
    ``q_coeffs`` are the phi-coefficients of q (S, nx, ny, nz -> N, nx, ny, nz);
    by default they are taken by Gauss-Lobatto quadrature over the sources.
    """
    w = problem._w(Q)
    Vn = np.einsum("nkmz,ki,ml->nilz", w, problem.Sx, problem.Sy, optimize=True)
    if q_coeffs is None:
        wts = problem.spec.source_weights
        q_coeffs = np.einsum("silz,ns,s->nilz", problem.ext.q, problem.phi_s, wts, optimize=True)
    r = np.einsum("nj,nilz->jilz", problem.b.Y, q_coeffs + Vn)
    return bool(np.all(r >= 0))


# --- ground truth in coefficient space -------------------------------------------

def truth_v(fields):
    """v = t_z^2 on G for each travel field, shape (S, nx, ny, nz)."""
    return np.array([f.tz_G() ** 2 for f in fields])


def project_truth(problem, fields, coarse_stride=1):
    """Coefficients Q* of V = t_z^2 - v_foot - q, and the relative truncation error.

    ``fields`` are travel fields on a grid nested in the problem grid; t_z is
    taken on that grid and subsampled.  The a-projection uses Gauss-Lobatto
    quadrature over the sources.
    """
    r = coarse_stride
    return project_truth_v(problem, truth_v(fields)[:, ::r, ::r, ::r])


def project_truth_v(problem, v):
    """``project_truth`` from sampled v = t_z^2 on the problem grid."""
    V = v - problem.base
    wts = problem.spec.source_weights
    w = np.einsum("silz,ns,s,ki,ml->nkmz", V, problem.phi_s, wts, problem.Px, problem.Py,
                  optimize=True)
    w[..., 0] = 0.0
    Vs = problem.synth(w)
    err = float(np.linalg.norm(Vs - V) / max(np.linalg.norm(V), 1e-300))
    return CoeffField(w, problem.z), err


# --- files -------------------------------------------------------------------------

def save_coeffs(path, Q, spec, extra_meta=None):
    meta = {"N": Q.N, "K": Q.K, "nz": int(Q.z.size), "B1": spec.B1, "B2": spec.B2}
    meta.update(extra_meta or {})
    write_container(path, "coeffs", meta, {"w": Q.w, "z": Q.z})


def load_coeffs(path):
    meta, arr = read_container(path, kind="coeffs")
    return CoeffField(arr["w"], arr["z"]), meta
