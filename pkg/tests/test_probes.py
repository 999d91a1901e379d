import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from travelcvx.probes import (carleman_check, carleman_closed_form_const, carleman_table,
                              convexity_slack, gradient_check, lambda_scan, loglog_slope,
                              random_feasible, random_piecewise_linear, stability_probe)
from travelcvx.solver import SolverParams

from conftest import small_case

Z = np.linspace(1.0, 1.5, 33)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0, 10.0])
def test_carleman_constant_function_closed_form(lam):
    lhs, rhs, ok = carleman_check(np.ones_like(Z), Z, lam)
    lc, rc = carleman_closed_form_const(1.0, 1.5, lam)
    assert ok
    assert abs(lhs - lc) <= 1e-10 * abs(lc) and abs(rhs - rc) <= 1e-10 * abs(rc)


def test_carleman_closed_form_by_quadrature():
    lam = 2.0
    lhs = scipy.integrate.quad(lambda z: (1.5 - z) * np.exp(2 * lam * z), 1.0, 1.5)[0]
    rhs = scipy.integrate.quad(lambda z: np.exp(2 * lam * z), 1.0, 1.5)[0] / (2 * lam)
    assert np.allclose(carleman_closed_form_const(1.0, 1.5, lam), (lhs, rhs), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0, 5.0, 10.0]))
def test_carleman_inequality_and_independent_quadrature(seed, lam):
    rng = np.random.default_rng(seed)
    g = random_piecewise_linear(rng, Z)
    lhs, rhs, ok = carleman_check(g, Z, lam)
    assert ok and lhs <= rhs * (1 + 1e-10)

    # dense trapezoid oracle: no zero splitting, no Gauss rule
    t = np.linspace(1.0, 1.5, 400001)
    a = np.abs(np.interp(t, Z, g))
    tail = scipy.integrate.trapezoid(a, t) - scipy.integrate.cumulative_trapezoid(a, t, initial=0)
    e = np.exp(2 * lam * t)
    ref_l = scipy.integrate.trapezoid(tail * e, t)
    ref_r = scipy.integrate.trapezoid(a * e, t) / (2 * lam)
    assert abs(lhs - ref_l) <= 1e-7 * abs(ref_r)
    assert abs(rhs - ref_r) <= 1e-7 * abs(ref_r)


def test_carleman_table_shape_and_guard():
    rows = carleman_table(Z, [1.0, 2.0], n_samples=5, seed=0)
    assert len(rows) == 10 and all(r["holds"] for r in rows)
    with pytest.raises(ValueError):
        carleman_check(np.ones_like(Z), Z, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(1e-3, 1e3))
def test_loglog_slope_recovers_power_law(k, c):
    x = np.array([0.003, 0.01, 0.03, 0.1])
    assert loglog_slope(x, c * x**k) == pytest.approx(k, rel=1e-9)


def test_loglog_slope_guards():
    with pytest.raises(ValueError):
        loglog_slope([1, 2], [1, 2])
    with pytest.raises(ValueError):
        loglog_slope([1, 2, 3], [1, 0, 2])


def test_stability_probe_on_synthetic_solutions():
    ref = np.zeros((1, 1, 1, 5))
    pert = [ref + d for d in (0.01, 0.02, 0.04)]
    slope, dist = stability_probe(ref, pert, [0.01, 0.02, 0.04], 0.1)
    assert slope == pytest.approx(1.0) and np.all(np.diff(dist) > 0)


def test_gradient_check_small():
    _, _, P = small_case(2, 2)
    rows = gradient_check(P, SolverParams(lam=1.0, alpha=1e-4), n=3, seed=1)
    assert max(r["rel_error"] for r in rows) < 1e-5


def test_convexity_slack_of_a_quadratic_part():
    """With J = alpha |Q|^2 only, the slack is -|dQ|_L2^2 / 8 exactly."""
    _, _, P = small_case(2, 2)
    p = SolverParams(lam=0.0)
    rng = np.random.default_rng(0)
    a = random_feasible(P, p, rng, scale=0.3)
    assert convexity_slack(a, a, P, p) == pytest.approx(0.0, abs=1e-14)


def test_lambda_scan_reports_monotone_table():
    _, _, P = small_case(2, 2)
    scan = lambda_scan(P, SolverParams(), [0.0, 1.0, 3.0], n_pairs=3, seed=0)
    assert [r["lam"] for r in scan.table] == [0.0, 1.0, 3.0]
    assert scan.monotone
    assert scan.lam_bar in (None, 0.0, 1.0, 3.0)
