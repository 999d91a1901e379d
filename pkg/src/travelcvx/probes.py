"""Numerical checks of the inequalities behind the method.

Every probe reports measured numbers; none of them asserts an unknown
constant.  Carleman: exact integration of piecewise-linear |g|.  Convexity:
slack of the strong-convexity inequality on random feasible pairs.
Stability: log-log slope of solution distance against data distance.
"""
from dataclasses import dataclass

import numpy as np

from .operator import CoeffField, h1_inner, h1_norm, l2_norm
from .solver import euclidean_gradient, evaluate_functional, gradient, project_feasible

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


# --- Carleman estimate ------------------------------------------------------------

def _pieces(z, g):
    """Breakpoints of |g| for the piecewise-linear interpolant (adds sign changes)."""
    zs = [z[0]]
    for i in range(len(z) - 1):
        g0, g1 = g[i], g[i + 1]
        if g0 * g1 < 0:
            zs.append(z[i] + (z[i + 1] - z[i]) * g0 / (g0 - g1))
        zs.append(z[i + 1])
    zs = np.array(zs)
    return zs, np.abs(np.interp(zs, z, g))


def carleman_check(g, z, lam):
    """Both sides of int (int_z^B2 |g|) e^{2 lam z} dz <= (1/2lam) int |g| e^{2 lam z} dz.

    ``g`` are samples on ``z``, read as a piecewise-linear function.  Returns
    ``(lhs, rhs, holds)`` with holds = lhs <= rhs (1 + 1e-10).
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    zs, a = _pieces(z, g)
    seg = 0.5 * (a[:-1] + a[1:]) * np.diff(zs)
    tail_at = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])  # int_{zs_i}^{B2} |g|
    lhs = rhs = 0.0
    for i in range(len(zs) - 1):
        lo, hi = zs[i], zs[i + 1]
        h = hi - lo
        if h <= 0:
            continue
        t = lo + 0.5 * (_GL_X + 1.0) * h
        wq = 0.5 * h * _GL_W
        s = (t - lo) / h
        gl = a[i] + (a[i + 1] - a[i]) * s
        # tail(t) = tail(hi) + int_t^hi |g|
        tail = tail_at[i + 1] + 0.5 * (gl + a[i + 1]) * (hi - t)
        e = np.exp(2.0 * lam * t)
        lhs += np.sum(wq * tail * e)
        rhs += np.sum(wq * gl * e)
    rhs /= 2.0 * lam
    return float(lhs), float(rhs), bool(lhs <= rhs * (1.0 + 1e-10))


def carleman_closed_form_const(B1, B2, lam):
    """Exact (lhs, rhs) for g = 1."""
    e1, e2 = np.exp(2 * lam * B1), np.exp(2 * lam * B2)
    lhs = e2 / (4 * lam**2) - ((B2 - B1) * e1 / (2 * lam) + e1 / (4 * lam**2))
    rhs = (e2 - e1) / (4 * lam**2)
    return lhs, rhs


def random_piecewise_linear(rng, z, n_knots=None):
    n = int(rng.integers(2, 12)) if n_knots is None else n_knots
    knots = np.sort(rng.uniform(z[0], z[-1], n))
    knots[0], knots[-1] = z[0], z[-1]
    vals = rng.standard_normal(n) * rng.uniform(0.1, 10.0)
    return np.interp(z, knots, vals)


def carleman_table(z, lambdas, n_samples=100, seed=0):
    """Rows (sample, lam, lhs, rhs, holds) over random piecewise-linear g."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_samples):
        g = random_piecewise_linear(rng, z)
        for lam in lambdas:
            lhs, rhs, ok = carleman_check(g, z, lam)
            rows.append({"sample": i, "lam": lam, "lhs": lhs, "rhs": rhs, "holds": ok})
    return rows


# --- random feasible points -------------------------------------------------------

def random_feasible(problem, p, rng, scale=None, modes=3):
    """Smooth random point of the feasible set with H1 norm ``scale * R``."""
    scale = rng.uniform(0.05, 0.95) if scale is None else scale
    s = (problem.z - problem.spec.B1) / (problem.spec.B2 - problem.spec.B1)
    w = np.zeros((problem.N, problem.K, problem.K, problem.z.size))
    for j in range(modes):
        w += (rng.standard_normal(w.shape[:-1])[..., None]
              * np.sin((j + 0.5) * np.pi * s) / (j + 1) ** 2)
    w *= scale * p.R / max(h1_norm(w, problem.hz), 1e-300)
    return project_feasible(w, problem, p.feasibility(problem.v_floor))


# --- gradient check -----------------------------------------------------------------

def gradient_check(problem, p, n=10, h=1e-6, seed=0, scale=0.2):
    """Central differences of J against [grad J, E]_H1 at random feasible points."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        Q = random_feasible(problem, p, rng, scale=scale * rng.uniform(0.2, 1.0))
        E = random_feasible(problem, p, rng, scale=0.5).w
        E /= max(h1_norm(E, problem.hz), 1e-300)
        _, G = gradient(Q, problem, p)
        analytic = h1_inner(G, E, problem.hz)
        fd = (evaluate_functional(Q.w + h * E, problem, p)
              - evaluate_functional(Q.w - h * E, problem, p)) / (2 * h)
        rel = abs(fd - analytic) / max(abs(analytic), 1e-300)
        rows.append({"sample": i, "lam": p.lam, "fd": fd, "analytic": analytic, "rel_error": rel})
    return rows


# --- convexity ----------------------------------------------------------------------

def convexity_slack(Q1, Q2, problem, p):
    """J(Q2) - J(Q1) - J'(Q1)(Q2 - Q1) - |dQ|_L2^2 / 8 - alpha |dQ|_H1^2."""
    w1 = problem._w(Q1)
    w2 = problem._w(Q2)
    dq = w2 - w1
    J1, g1 = euclidean_gradient(w1, problem, p)
    J2 = evaluate_functional(w2, problem, p)
    lin = float(np.sum(g1 * dq))
    return (J2 - J1 - lin - 0.125 * l2_norm(dq, problem.hz) ** 2
            - p.alpha * h1_inner(dq, dq, problem.hz))


def convexity_probe(problem, p, n_pairs=50, seed=0, pairs=None):
    """Slack rows over ``pairs`` or over random feasible pairs."""
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = [(random_feasible(problem, p, rng), random_feasible(problem, p, rng))
                 for _ in range(n_pairs)]
    rows = []
    for i, (a, b) in enumerate(pairs):
        dist = l2_norm(problem._w(b) - problem._w(a), problem.hz)
        rows.append({"pair": i, "lam": p.lam, "slack": convexity_slack(a, b, problem, p),
                     "l2_distance": dist})
    return rows


@dataclass
class LambdaScan:
    lam_bar: float  # None when no grid value passes
    table: list
    monotone: bool


def lambda_scan(problem, p, lambdas, n_pairs=10, seed=0, tol=1e-9):
    """Smallest lambda whose convexity slacks are all >= -tol (same pairs for every lambda)."""
    from dataclasses import replace

    rng = np.random.default_rng(seed)
    pairs = [(random_feasible(problem, p, rng), random_feasible(problem, p, rng))
             for _ in range(n_pairs)]
    table = []
    for lam in sorted(lambdas):
        rows = convexity_probe(problem, replace(p, lam=lam), pairs=pairs)
        worst = min(r["slack"] for r in rows) if rows else float("nan")
        table.append({"lam": lam, "min_slack": worst, "passes": bool(rows) and worst >= -tol})
    passing = [r["lam"] for r in table if r["passes"]]
    lam_bar = passing[0] if passing else None
    flags = [r["passes"] for r in table]
    monotone = all(not flags[i] or flags[i + 1] for i in range(len(flags) - 1))
    return LambdaScan(lam_bar, table, monotone)


# --- stability ----------------------------------------------------------------------

def loglog_slope(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("a slope fit needs at least 3 levels")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def stability_probe(reference, perturbed, data_distances, hz):
    """Slope of |Q_i - Q_ref|_H1 against the data distances.

    ``reference`` is the clean solution; ``perturbed`` one solution per noise
    level.  Returns ``(slope, distances)``.
    """
    ref = reference.w if isinstance(reference, CoeffField) else reference
    dist = [h1_norm((q.w if isinstance(q, CoeffField) else q) - ref, hz) for q in perturbed]
    return loglog_slope(data_distances, dist), dist
