"""Carleman-weighted Tikhonov functional, gradient projection and c-recovery.

J(Q) = sum_l zeta_l exp(2 lam (z_l - B1)) |R(Q)(z_l)|^2 + alpha ||Q||_H1^2

with zeta the trapezoid weights on [B1, B2].  The gradient is the exact
derivative of this discrete J, mapped into H1_0 (zero at B1, natural at B2)
by the tridiagonal Riesz operator of the discrete H1 inner product.
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DivergenceError, InfeasibleError
from .operator import (CoeffField, FeasibilityParams, feasibility_check, h1_inner, h1_norm,
                       l2_norm, trapezoid_z)


@dataclass(frozen=True)
class SolverParams:
    lam: float = 3.0
    alpha: float = 1e-8
    kappa: float = 0.1
    R: float = 2.0
    max_iter: int = 2000
    grad_tol: float = 1e-7
    seed: int = 0
    max_increases: int = 20
    d: float = 0.07
    metric: str = "l2"
    projection: str = "qp"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.max_iter < 0 or self.grad_tol <= 0:
            raise ValueError("need max_iter >= 0 and grad_tol > 0")
        if self.metric not in ("h1", "l2"):
            raise ValueError("metric must be 'h1' or 'l2'")
        if self.projection not in ("qp", "segment"):
            raise ValueError("projection must be 'qp' or 'segment'")

    @classmethod
    def for_noise(cls, delta, **kw):
        """Parameters with alpha = delta^2 (1e-8 for clean data)."""
        return cls(alpha=delta**2 if delta > 0 else 1e-8, **kw)

    def feasibility(self, v_floor):
        return FeasibilityParams(self.R, self.d, v_floor)

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def carleman_weights(z, lam, B1):
    return np.exp(2.0 * lam * (z - B1))


def _weights(problem, lam):
    return trapezoid_z(problem.spec.nz, problem.hz) * carleman_weights(problem.z, lam, problem.spec.B1)


def evaluate_functional(Q, problem, p, check=True):
    w = problem._w(Q)
    R = problem.residual(w, check=check)
    data = float(np.sum(_weights(problem, p.lam) * R**2))
    return data + p.alpha * h1_inner(w, w, problem.hz)


def riesz_matrix(nz, hz):
    """Banded form (for solve_banded) of the H1 Gram matrix on levels 1..nz-1."""
    zeta = trapezoid_z(nz, hz)[1:]
    diag = zeta + 2.0 / hz
    diag[-1] = zeta[-1] + 1.0 / hz
    off = np.full(nz - 2, -1.0 / hz)
    ab = np.zeros((3, nz - 1))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def riesz_map(euclid, hz):
    """Solve M G = euclid per channel with G = 0 at B1."""
    nz = euclid.shape[-1]
    rhs = euclid[..., 1:].reshape(-1, nz - 1).T
    sol = scipy.linalg.solve_banded((1, 1), riesz_matrix(nz, hz), rhs)
    out = np.zeros_like(euclid)
    out[..., 1:] = sol.T.reshape(euclid.shape[:-1] + (nz - 1,))
    return out


def euclidean_gradient(Q, problem, p, check=True):
    """(J, dJ/dw) with dJ/dw the plain partial derivatives of the discrete J."""
    w = problem._w(Q)
    ev = problem.evaluate(w)
    if check and not ev.active.all():
        raise InfeasibleError("v falls below the floor; gradient undefined")
    wts = _weights(problem, p.lam)
    J = float(np.sum(wts * ev.residual**2)) + p.alpha * h1_inner(w, w, problem.hz)
    grad = problem.residual_adjoint(ev, 2.0 * wts * ev.residual)
    # alpha ||w||^2 = alpha (sum zeta w^2 + sum (dw)^2 / hz)
    zeta = trapezoid_z(w.shape[-1], problem.hz)
    dw = np.diff(w, axis=-1) / problem.hz
    stiff = np.zeros_like(w)
    stiff[..., :-1] -= dw
    stiff[..., 1:] += dw
    grad = grad + 2.0 * p.alpha * (zeta * w + stiff)
    return J, grad


def gradient(Q, problem, p, check=True):
    """H1_0 gradient G with [G, E]_H1 = dJ(Q)[E] for every E vanishing at B1."""
    J, g = euclidean_gradient(Q, problem, p, check)
    return J, riesz_map(g, problem.hz)


def l2_gradient(Q, problem, p, check=True):
    """L2 gradient (trapezoid mass), zero at B1."""
    J, g = euclidean_gradient(Q, problem, p, check)
    out = g / trapezoid_z(g.shape[-1], problem.hz)
    out[..., 0] = 0.0
    return J, out


def _norm(w, hz, metric):
    return h1_norm(w, hz) if metric == "h1" else l2_norm(w, hz)


def search_direction(Q, problem, p, check=True):
    """(J, G, |G|) in the metric chosen by ``p.metric``."""
    if p.metric == "h1":
        J, G = gradient(Q, problem, p, check)
        return J, G, h1_norm(G, problem.hz)
    J, G = l2_gradient(Q, problem, p, check)
    return J, G, _norm(G, problem.hz, p.metric)


# --- projection onto the feasible set ---------------------------------------------

def enforce_boundary(w, hz, taper=3):
    """Zero the level z = B1 by subtracting each channel offset with a linear taper."""
    off = w[..., :1]
    if not np.any(off):
        return w
    nz = w.shape[-1]
    n = min(taper, nz - 1)
    ramp = np.zeros(nz)
    ramp[: n + 1] = 1.0 - np.arange(n + 1) / n
    return w - off * ramp


def project_ball(w, R, hz):
    # the ball is open: land just inside the sphere
    nrm = h1_norm(w, hz)
    return w if nrm < R else w * (R * (1 - 1e-12) / nrm)


def least_distance(G, h):
    """min |y| subject to G y >= h, by the NNLS route of Lawson and Hanson.

    The nonnegative least-squares problem min |E u - f|, u >= 0, goes to the
    bounded-variable solver of ``scipy.optimize.lsq_linear``.  Returns None
    when the constraints are inconsistent.
    """
    n = G.shape[1]
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u = scipy.optimize.lsq_linear(E, f, bounds=(0.0, np.inf), method="bvls", tol=1e-14).x
    y = _ldp_point(E, f, u)
    if y is None or np.min(G @ y - h) < -1e-9 * max(1.0, np.abs(h).max()):
        return None
    return y


def _ldp_point(E, f, u):
    r = E @ u - f
    # inconsistent constraints leave a zero residual up to rounding in E u
    if abs(r[-1]) <= 1e-10 * max(1.0, np.abs(E).max() * u.sum()):
        return None
    return -r[:-1] / r[-1]


def project_pointwise(w, problem, d, eps=1e-8, max_rounds=30):
    """L2 projection of w onto {q + synth(w) >= -d + eps}, level by level.

    The constraint at level l reads M w_l >= -d + eps - q_l with one matrix M
    for all levels, so the projection splits into small least-distance
    problems.  A working set of rows grows until no row is violated.
    Returns None if some level cannot be made feasible.
    """
    M = problem.constraint_matrix()
    q = problem.ext.q.reshape(-1, problem.spec.nz)
    out = problem._w(w).copy()
    flat = out.reshape(-1, problem.spec.nz)
    for lev in range(1, problem.spec.nz):
        x0 = flat[:, lev]
        h = (-d + eps) - q[:, lev] - M @ x0
        if h.max() <= 0:
            continue
        work = np.flatnonzero(h > -0.25 * h.max())
        y = np.zeros_like(x0)
        for _ in range(max_rounds):
            y = least_distance(M[work], h[work])
            if y is None:
                return None
            viol = np.flatnonzero(M @ y < h - 1e-13)
            viol = np.setdiff1d(viol, work)
            if viol.size == 0:
                break
            work = np.union1d(work, viol)
        flat[:, lev] = x0 + y
    return out


def project_feasible(Q, problem, f, anchor=None, tol=1e-12, max_bisect=60, method="qp"):
    """Map Q into the closed feasible set: boundary, pointwise bound, ball.

    ``method="qp"`` projects onto the pointwise constraint exactly (L2, per
    level).  ``method="segment"``, and the fallback when the exact step
    fails, returns the feasible point on the segment from ``anchor``
    (default 0) found by bisection.
    """
    return CoeffField(_project(Q, problem, f, anchor, tol, max_bisect, method)[0], problem.z)


def _project(Q, problem, f, anchor=None, tol=1e-12, max_bisect=60, method="qp"):
    """``project_feasible`` returning ``(w, fraction)``; fraction < 1 means bisection."""
    w = enforce_boundary(problem._w(Q), problem.hz)

    def pointwise(x):
        return float((problem.ext.q + problem.synth(x)).min()) + f.d > 0

    if method == "qp":
        p = project_pointwise(w, problem, f.d)
        if p is not None:
            p = project_ball(p, f.R, problem.hz)
            if pointwise(p):
                return p, 1.0
    w = project_ball(w, f.R, problem.hz)
    if pointwise(w):
        return w, 1.0
    base = np.zeros_like(w) if anchor is None else problem._w(anchor)
    if not pointwise(base):
        raise InfeasibleError("anchor of the bisection is itself infeasible")
    lo, hi = 0.0, 1.0
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if pointwise(base + mid * (w - base)):
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return base + lo * (w - base), lo


# --- iteration -----------------------------------------------------------------------

@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    theta: float = float("nan")
    stop_reason: str = ""

    COLUMNS = ("iter", "J", "grad_norm", "margin", "step", "kappa", "accepted", "err_truth")

    def add(self, **row):
        self.rows.append({k: row.get(k, float("nan")) for k in self.COLUMNS})

    def accepted(self):
        return [r for r in self.rows if r["accepted"]]

    def J(self):
        return np.array([r["J"] for r in self.accepted()])

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            wr.writeheader()
            for r in self.rows:
                wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in r.items()})

    @classmethod
    def from_csv(cls, path):
        import csv

        tr = cls()
        with open(path) as fh:
            for r in csv.DictReader(fh):
                tr.rows.append({k: (r[k] == "True" if k == "accepted" else
                                    int(r[k]) if k == "iter" else float(r[k])) for k in cls.COLUMNS})
        return tr


def contraction_estimate(iterates, hz):
    """Median ratio of successive H1 distances to the final iterate."""
    last = iterates[-1]
    dist = np.array([h1_norm(w - last, hz) for w in iterates[:-1]])
    dist = dist[dist > 1e-12 * max(dist.max(initial=0.0), 1e-300)]
    if dist.size < 3:
        return float("nan")
    return float(np.median(dist[1:] / dist[:-1]))


def smooth_start(problem, p, seed, scale=0.5, modes=3):
    """Random feasible start built from a few low z-modes, scaled into the ball."""
    rng = np.random.default_rng(seed)
    s = (problem.z - problem.spec.B1) / (problem.spec.B2 - problem.spec.B1)
    w = np.zeros((problem.N, problem.K, problem.K, problem.z.size))
    for j in range(modes):
        prof = np.sin((j + 0.5) * np.pi * s)
        w += rng.standard_normal(w.shape[:-1])[..., None] * prof / (j + 1) ** 2
    w *= scale * p.R / max(h1_norm(w, problem.hz), 1e-300)
    f = p.feasibility(problem.v_floor)
    return project_feasible(w, problem, f, method=p.projection)


def solve(Q0, problem, p, truth=None, trace=None, keep_iterates=False, callback=None):
    """Gradient projection Q <- T(Q - kappa J'(Q)) with step halving.

    Returns ``(Q, trace)``.  A rejected step (J increased) halves kappa; after
    ``p.max_increases`` consecutive rejections DivergenceError is raised.
    ``trace`` may carry the rows of an earlier run to resume from.

    Stopping: the H1 norm of the step must fall below ``grad_tol`` and so
    must the a-posteriori distance estimate theta / (1 - theta) * step, with
    theta the median ratio of the last few steps.  Steps are measured in H1
    whatever the iteration metric, so the bound holds in the space of Q.  A step cut to nothing by the pointwise constraint
    ends the run as "stalled".
    """
    f = p.feasibility(problem.v_floor)
    w = problem._w(Q0).copy()
    chk = feasibility_check(w, problem, f)
    if not chk.ok:
        raise InfeasibleError(f"initial point infeasible ({chk.reason})", chk.worst_index, chk.margin)
    trace = IterationTrace() if trace is None else trace
    start = trace.rows[-1]["iter"] + 1 if trace.rows else 0
    kappa = p.kappa
    J, G, gn = search_direction(w, problem, p)

    def err(x):
        return l2_norm(x - truth.w, problem.hz) if truth is not None else float("nan")

    if not trace.rows:
        trace.add(iter=0, J=J, grad_norm=gn, margin=chk.margin, step=0.0,
                  kappa=kappa, accepted=True, err_truth=err(w))
        start = 1
    iterates = [w.copy()]
    steps = []
    fails = 0
    trace.stop_reason = "max_iter"
    for it in range(start, start + p.max_iter):
        cand, frac = _project(w - kappa * G, problem, f, anchor=w, method=p.projection)
        Jc, Gc, gnc = search_direction(cand, problem, p)
        step = h1_norm(cand - w, problem.hz)
        if Jc > J * (1.0 + 1e-13) + 1e-300:
            fails += 1
            trace.add(iter=it, J=Jc, grad_norm=gnc, margin=float("nan"),
                      step=step, kappa=kappa, accepted=False, err_truth=float("nan"))
            if fails >= p.max_increases:
                trace.stop_reason = "diverged"
                raise DivergenceError(
                    f"J increased on {fails} consecutive steps (kappa now {kappa:.3g}); "
                    "use a smaller kappa", trace)
            kappa *= 0.5
            continue
        fails = 0
        w, J, G = cand, Jc, Gc
        margin = feasibility_check(w, problem, f).margin
        trace.add(iter=it, J=J, grad_norm=gnc, margin=margin, step=step,
                  kappa=kappa, accepted=True, err_truth=err(w))
        iterates.append(w.copy())
        if callback is not None:
            callback(it, w, J)
        steps.append(step)
        if step <= p.grad_tol:
            if frac < 1.0:
                trace.stop_reason = "stalled"
                break
            recent = np.array(steps[-6:])
            ratios = recent[1:] / np.maximum(recent[:-1], 1e-300)
            theta = float(np.median(ratios)) if ratios.size else 1.0
            if theta < 1.0 and theta / (1.0 - theta) * step <= p.grad_tol:
                trace.stop_reason = "converged"
                break
    trace.theta = contraction_estimate(iterates, problem.hz)
    Q = CoeffField(w, problem.z)
    if keep_iterates:
        return Q, trace, iterates
    return Q, trace


# --- recovery of c ------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionResult:
    c_rec: np.ndarray        # (nx, ny, nz) on G
    c_per_source: np.ndarray  # (S, nx, ny, nz)
    a_spread: float
    metrics: dict

    def with_truth(self, c_true):
        err = relative_l2(self.c_rec, c_true)
        return replace(self, metrics={**self.metrics, "rel_l2_error": err})


def relative_l2(c, c_true):
    return float(np.linalg.norm(c - c_true) / np.linalg.norm(c_true))


def recover_c(Q, problem, c_true=None):
    """c = v + B_x^2 + B_y^2 per source, then the a-average (1/pi) int c da."""
    cs = problem.c_per_source(Q)
    wts = problem.spec.source_weights
    c = np.einsum("silz,s->ilz", cs, wts) / np.pi
    spread = float(np.abs(cs - c).max())
    metrics = {"min_c": float(c.min()), "max_c": float(c.max()), "a_spread": spread,
               "positive": bool(c.min() > 0)}
    res = ReconstructionResult(c, cs, spread, metrics)
    return res if c_true is None else res.with_truth(c_true)


def speed_field_from(res, spec, c0=0.5):
    """Embed a reconstruction on G into a SpeedField (c = 1 below B1)."""
    from .forward import SpeedField

    vals = np.ones((spec.nx, spec.ny, spec.z_ext.size))
    vals[:, :, spec.k_B1:] = res.c_rec
    return SpeedField(spec, vals, c0, "reconstruction", {})
