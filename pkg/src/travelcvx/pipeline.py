"""Glue between a RunConfig and the library objects."""
from dataclasses import dataclass

from .basis import build_basis, derivative_gram
from .forward import add_noise, extract_boundary_data, make_phantom, solve_all
from .operator import InversionProblem, project_truth
from .solver import SolverParams

FOOT_CONVENTION = "straight-ray: v_foot = z^2 / ((x - a)^2 + (y - pi/2)^2 + z^2)"


def phantom(cfg, spec=None):
    """Speed field of ``cfg`` on ``spec`` (default: the inversion grid)."""
    spec = cfg.domain if spec is None else spec
    return make_phantom(spec, cfg.phantom.kind, cfg.phantom.params, cfg.phantom.c0)


@dataclass
class Simulation:
    c_fine: object
    fields: list
    data: object      # BoundaryData on the inversion grid, noise applied
    clean: object
    stride: int


def simulate(cfg, threads=None):
    """Forward solve on the refined grid; traces on the inversion grid."""
    fine = cfg.domain.refine(cfg.forward.refine)
    c = phantom(cfg, fine)
    fields = solve_all(c, cfg.forward.order, cfg.threads if threads is None else threads)
    clean = extract_boundary_data(fields, cfg.domain)
    data = add_noise(clean, cfg.noise.delta, cfg.noise.seed)
    return Simulation(c, fields, data, clean, cfg.forward.refine)


def solver_params(cfg):
    s = cfg.solver
    return SolverParams(lam=s.lam, alpha=cfg.alpha(), kappa=s.kappa, R=s.R, d=s.d,
                        max_iter=s.max_iter, grad_tol=s.grad_tol, seed=s.seed, metric=s.metric,
                        projection=s.projection)


def build_problem(cfg, data):
    t = cfg.truncation
    b = build_basis(t.N, t.beta, t.quad_order)
    return InversionProblem(data, b, derivative_gram(b), t.K, d=cfg.solver.d)


def truth_coeffs(problem, sim):
    return project_truth(problem, sim.fields, sim.stride)


def manifest(cfg, **extra):
    """Common manifest block: config hash, foot convention and method parameters."""
    t, s = cfg.truncation, cfg.solver
    out = {
        "config_sha256": cfg.digest(),
        "foot_point": FOOT_CONVENTION,
        "N": t.N, "K": t.K, "beta": t.beta,
        "lambda": s.lam, "alpha": cfg.alpha(), "kappa": s.kappa, "R": s.R, "d": s.d,
        "metric": s.metric, "projection": s.projection,
    }
    out.update(extra)
    return out


def delta_sweep(cfg, clean, deltas, truth_c=None, log=None):
    """Solve from zero at every noise level; distances to the clean solution.

    Returns ``(rows, slope_q, slope_c)`` with rows
    (delta, data_distance, q_distance_h1, c_distance, c_error).
    """
    from dataclasses import replace

    from .operator import h1_norm
    from .probes import loglog_slope
    from .solver import recover_c, relative_l2, solve

    def run(delta):
        c = cfg.replace(noise=replace(cfg.noise, delta=float(delta)))
        data = add_noise(clean, delta, cfg.noise.seed)
        problem = build_problem(c, data)
        Q, tr = solve(problem.zero(), problem, solver_params(c))
        if log:
            log(f"delta={delta}: {tr.stop_reason} after {len(tr.accepted()) - 1} steps")
        return data, problem, Q, recover_c(Q, problem, truth_c)

    _, problem, Q0, r0 = run(0.0)
    rows = []
    for delta in deltas:
        data, _, Q, r = run(delta)
        rows.append((float(delta), data.realized_c1, h1_norm(Q.w - Q0.w, problem.hz),
                     relative_l2(r.c_rec, r0.c_rec), r.metrics.get("rel_l2_error", float("nan"))))
    slope_q = loglog_slope([r[1] for r in rows], [r[2] for r in rows])
    slope_c = loglog_slope([r[1] for r in rows], [r[3] for r in rows])
    return rows, slope_q, slope_c
