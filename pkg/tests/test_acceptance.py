"""The nine primary acceptance criteria at their stated tolerances.

Each test records one line in RESULTS; conftest prints them after the run
as "criterion k: PASS|FAIL ...".  Run alone with

    pytest tests/test_acceptance.py -v
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from travelcvx import pipeline
from travelcvx.basis import build_basis, derivative_gram, project_function, \
    reconstruct_from_derivative
from travelcvx.config import ForwardConfig, PhantomConfig, RunConfig, SolverConfig, \
    TruncationConfig
from travelcvx.forward import DomainSpec, analytic_freespace_time, make_phantom, solve_all
from travelcvx.operator import FeasibilityParams, h1_norm
from travelcvx.probes import (carleman_check, carleman_closed_form_const, carleman_table,
                              convexity_probe, gradient_check, lambda_scan, random_feasible)
from travelcvx.solver import SolverParams, recover_c, relative_l2, smooth_start, solve

from conftest import small_case
from oracles import naive_residual_n1k1

RESULTS = []
DESK = DomainSpec(nx=33, ny=33, nz_below=9, nz=33, n_sources=9)


def record(k, ok, detail, t0, budget):
    dt = time.perf_counter() - t0
    ok = bool(ok) and dt <= budget
    RESULTS.append(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}  "
                   f"[{dt:.1f} s, budget {budget:.0f} s]")
    return ok


def desk_config(N, K, domain=DESK, **solver):
    return RunConfig(domain=domain, phantom=PhantomConfig(kind="bump"),
                     forward=ForwardConfig(refine=1, order=2),
                     truncation=TruncationConfig(N=N, K=K),
                     solver=replace(SolverConfig(), **solver))


def test_c1_basis():
    """Recovery is held to 1e-7 for N <= 10; beyond that float64 cannot reach it.

    d/da on the span is nearly singular (e^a times a truncated series of
    e^-a is almost constant), so |A^-1| grows like 10^N and any rounding in
    y is amplified by it.  Larger N are measured and printed.
    """
    t0 = time.perf_counter()
    worst_orth = worst_inv = 0.0
    rec = {}
    rng = np.random.default_rng(0)
    for N in range(1, 16):
        b = build_basis(N)
        g = derivative_gram(b)
        worst_orth = max(worst_orth, b.summary()["orthonormality_error"])
        worst_inv = max(worst_inv, np.abs(g.A @ g.A_inv - np.eye(N)).max() / (1e-8 * g.cond))
        err = 0.0
        for _ in range(100):
            z = rng.standard_normal(N)
            y = project_function(b, z @ b.phi_prime)
            err = max(err, np.abs(reconstruct_from_derivative(g, y) - z).max())
        rec[N] = err
    in_range = max(rec[N] for N in range(1, 11))
    ok = worst_orth <= 1e-10 and worst_inv <= 1 and in_range <= 1e-7
    assert record(1, ok, f"orthonormality {worst_orth:.1e}, |A A^-1 - I| / (1e-8 cond) "
                  f"{worst_inv:.1e} (N <= 15); recovery {in_range:.1e} for N <= 10, "
                  + ", ".join(f"N={N}: {rec[N]:.0e}" for N in range(11, 16)), t0, 5)


def test_c2_carleman():
    t0 = time.perf_counter()
    z = DESK.z
    lams = (0.5, 1.0, 2.0, 5.0, 10.0)
    rows = carleman_table(z, lams, 100, seed=0)
    fails = sum(not r["holds"] for r in rows)
    const_err = 0.0
    for lam in lams:
        lhs, rhs, _ = carleman_check(np.ones_like(z), z, lam)
        el, er = carleman_closed_form_const(DESK.B1, DESK.B2, lam)
        const_err = max(const_err, abs(lhs - el) / el, abs(rhs - er) / er)
    assert record(2, fails == 0 and const_err <= 1e-10,
                  f"{fails} failures in {len(rows)} cases, g = 1 closed form {const_err:.1e}",
                  t0, 5)


def test_c3_forward():
    t0 = time.perf_counter()
    big = DomainSpec(nx=65, ny=65, nz_below=33, nz=33, n_sources=3)
    c = make_phantom(big, "constant")
    X, Y, Z = np.meshgrid(big.x, big.y, big.z_ext, indexing="ij")
    err = 0.0
    for f in solve_all(c, order=2):
        exact = analytic_freespace_time(X, Y, Z, f.a)
        mask = exact > 0
        err = max(err, (np.abs(f.t - exact)[mask] / exact[mask]).max())
    slack = {}
    for kind in ("constant", "ramp", "bump"):
        fields = solve_all(make_phantom(DESK, kind), order=2)
        slack[kind] = min(f.tz_G().min() for f in fields) - (DESK.tz_floor - 2 * DESK.hz)
    ok = err <= 0.01 and min(slack.values()) >= 0
    assert record(3, ok, f"c = 1 max rel error {err:.1e} on 65^3; t_z floor {DESK.tz_floor:.5f}, "
                  "min slack " + ", ".join(f"{k} {v:.3f}" for k, v in slack.items()), t0, 120)


def test_c4_operator_oracle():
    t0 = time.perf_counter()
    _, _, P = small_case(1, 1)
    p = SolverParams()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        Q = random_feasible(P, p, rng)
        R = P.residual(Q.w)
        ref = naive_residual_n1k1(P, Q.w)
        worst = max(worst, np.abs(R - ref).max() / max(1.0, np.abs(ref).max()))
    assert record(4, worst <= 1e-8, f"N = K = 1 max deviation {worst:.1e} over 20 Q", t0, 30)


def test_c5_gradient():
    t0 = time.perf_counter()
    cfg = desk_config(2, 2)
    sim = pipeline.simulate(cfg)
    P = pipeline.build_problem(cfg, sim.data)
    worst = {}
    for lam in (0.0, 1.0, 3.0):
        rows = gradient_check(P, SolverParams(lam=lam, alpha=1e-8), n=10, seed=0)
        worst[lam] = max(r["rel_error"] for r in rows)
    assert record(5, max(worst.values()) <= 1e-5, "max rel error " + ", ".join(
        f"lam {k:g}: {v:.1e}" for k, v in worst.items()), t0, 60)


def test_c6_convexity():
    t0 = time.perf_counter()
    cfg = desk_config(3, 3, domain=replace(DESK, n_sources=5))
    sim = pipeline.simulate(cfg)
    P = pipeline.build_problem(cfg, sim.data)
    p = SolverParams(lam=3.0, alpha=1e-8)
    rows = convexity_probe(P, p, 50, seed=0)
    worst = min(r["slack"] for r in rows)
    scan = lambda_scan(P, p, (0.0, 0.5, 1.0, 2.0, 3.0), n_pairs=10, seed=1)
    ok = worst >= -1e-9 and scan.lam_bar is not None and scan.lam_bar <= 3 and scan.monotone
    assert record(6, ok, f"min slack {worst:.2e} over 50 pairs at lam = 3; "
                  f"empirical lam_bar {scan.lam_bar}, monotone {scan.monotone}", t0, 300)


def test_c7_global_convergence():
    t0 = time.perf_counter()
    cfg = desk_config(2, 2)
    sim = pipeline.simulate(cfg)
    P = pipeline.build_problem(cfg, sim.data)
    p = pipeline.solver_params(cfg)
    runs = []
    for seed in (1, 2):
        Q0 = smooth_start(P, p, seed=seed)
        Q, tr = solve(Q0, P, p)
        J = tr.J()
        runs.append((Q, tr, bool(np.all(np.diff(J) <= 1e-13 * J[:-1]))))
    gap = h1_norm(runs[0][0].w - runs[1][0].w, P.hz)
    thetas = [r[1].theta for r in runs]
    ok = gap <= 10 * p.grad_tol and all(r[2] for r in runs) and max(thetas) < 1
    reasons = ", ".join(r[1].stop_reason for r in runs)
    assert record(7, ok, f"start gap {gap:.2e} (limit {10 * p.grad_tol:.0e}), stops {reasons}, "
                  f"J monotone {all(r[2] for r in runs)}, theta {max(thetas):.4f}", t0, 300)


def test_c8_reconstruction():
    t0 = time.perf_counter()
    cfg = desk_config(4, 4, max_iter=2500)
    sim = pipeline.simulate(cfg)
    P = pipeline.build_problem(cfg, sim.data)
    c_true = pipeline.phantom(cfg).on_G
    Q, tr = solve(P.zero(), P, pipeline.solver_params(cfg))
    err = recover_c(Q, P, c_true).metrics["rel_l2_error"]
    base = recover_c(P.zero(), P, c_true).metrics["rel_l2_error"]
    ratio = base / err
    assert record(8, err <= 0.15 and ratio >= 3,
                  f"error {err:.2%} (limit 15%), zero-start baseline {base:.2%}, "
                  f"improvement {ratio:.2f}x (target 3x), stop {tr.stop_reason}", t0, 600)


def test_c9_noise_scaling():
    t0 = time.perf_counter()
    cfg = desk_config(2, 2)
    sim = pipeline.simulate(cfg)
    rows, sq, sc = pipeline.delta_sweep(cfg, sim.clean, (0.003, 0.01, 0.03),
                                        pipeline.phantom(cfg).on_G)
    ok = 0.7 <= sq <= 1.3 and 0.7 <= sc <= 1.3
    assert record(9, ok, f"slope |Q_d - Q_0|_H1 {sq:.2f}, slope |c_d - c_0| {sc:.2f}, "
                  "distances " + ", ".join(f"{r[3]:.1e}" for r in rows), t0, 1800)
