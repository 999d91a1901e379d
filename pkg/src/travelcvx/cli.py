"""Batch driver: ``travelcvx {phantom,forward,invert,verify,report}``.

Each command writes one sub-directory of the run directory (``--out``)
together with a ``manifest.json`` that records the config hash, the
foot-point convention, the method parameters and a SHA-256 of every file.
Outputs are staged in a scratch directory and moved into place only when the
command succeeds, so a failed command leaves nothing behind.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
import argparse
import contextlib
import hashlib
import json
import logging
import os
import shutil
import sys
from dataclasses import replace

import numpy as np

from . import pipeline, probes, report
from .config import RunConfig, dump_config, load_config
from .containers import read_container, write_container
from .errors import AdmissibilityError, ConfigError, NumericalError
from .forward import (check_admissible, load_boundary, save_boundary, save_speed)
from .operator import load_coeffs, project_truth_v, save_coeffs, truth_v
from .solver import (IterationTrace, recover_c, relative_l2, smooth_start, solve,
                     speed_field_from)

log = logging.getLogger("travelcvx")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class InputError(ConfigError):
    """A required input file or directory is missing or inconsistent."""


# --- plumbing -------------------------------------------------------------------

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextlib.contextmanager
def staged(path):
    """Yield a scratch directory that replaces ``path`` only on success."""
    tmp = path + ".partial"
    shutil.rmtree(tmp, ignore_errors=True)
    os.makedirs(tmp)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    shutil.rmtree(path, ignore_errors=True)
    os.replace(tmp, path)


def write_manifest(directory, cfg, command, **extra):
    dump_config(cfg, os.path.join(directory, "config.yaml"))
    files = {}
    for root, _, names in os.walk(directory):
        for name in sorted(names):
            full = os.path.join(root, name)
            files[os.path.relpath(full, directory)] = sha256_file(full)
    man = pipeline.manifest(cfg, command=command, files=dict(sorted(files.items())), **extra)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return man


def _json_default(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _require(path, what):
    if not os.path.exists(path):
        raise InputError(f"missing {what}: {path} (run the earlier command first)")
    return path


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --- commands ---------------------------------------------------------------------

def cmd_phantom(cfg):
    """Speed field on the inversion grid plus its admissibility record."""
    c = pipeline.phantom(cfg)
    check = check_admissible(c)
    dest = os.path.join(cfg.out, "phantom")
    with staged(dest) as tmp:
        save_speed(os.path.join(tmp, "speed.tcvx"), c, {"config_sha256": cfg.digest()})
        write_manifest(tmp, cfg, "phantom", admissible=True, monotone_check="pass", **check)
    log.info("phantom %s: min c %.4g, written to %s", c.kind, check["min_c"], dest)
    return dest


def cmd_forward(cfg):
    """Travel times on the refined grid; traces and t_z^2 on the inversion grid."""
    sim = pipeline.simulate(cfg)
    r = sim.stride
    dest = os.path.join(cfg.out, "forward")
    meta = {"config_sha256": cfg.digest(), "foot_point": pipeline.FOOT_CONVENTION}
    with staged(dest) as tmp:
        save_boundary(os.path.join(tmp, "data"), sim.data, meta)
        if sim.data.delta > 0:
            save_boundary(os.path.join(tmp, "clean"), sim.clean, meta)
        v = truth_v(sim.fields)[:, ::r, ::r, ::r]
        write_container(os.path.join(tmp, "truth_v.tcvx"), "truth_v", meta, {"v": v})
        write_manifest(tmp, cfg, "forward", delta=sim.data.delta, noise_seed=sim.data.seed,
                       realized_c1=sim.data.realized_c1, solver_grid=sim.c_fine.spec.as_dict(),
                       eikonal_order=cfg.forward.order)
    log.info("forward: %d sources, delta %.3g (realized C1 %.3g)", len(sim.data.sources),
             sim.data.delta, sim.data.realized_c1)
    return dest


def _load_data(cfg, name="data"):
    fdir = os.path.join(cfg.out, "forward")
    data = load_boundary(os.path.dirname(_require(os.path.join(fdir, name, "index.json"),
                                                  "boundary data")))
    if data.spec != cfg.domain:
        raise InputError("boundary data were generated on a different domain grid")
    return data


def _truth(problem, cfg):
    path = os.path.join(cfg.out, "forward", "truth_v.tcvx")
    if not os.path.exists(path):
        return None
    _, arr = read_container(path, kind="truth_v")
    return project_truth_v(problem, arr["v"])[0]


def _resume_dir(path):
    for cand in (os.path.join(path, "invert"), path):
        if os.path.exists(os.path.join(cand, "coeffs.tcvx")):
            return cand
    raise InputError(f"no inversion to resume in {path}")


def cmd_invert(cfg):
    data = _load_data(cfg)
    problem = pipeline.build_problem(cfg, data)
    p = pipeline.solver_params(cfg)
    truth = _truth(problem, cfg)
    trace = None
    if cfg.solver.resume:
        rdir = _resume_dir(cfg.solver.resume)
        Q0, _ = load_coeffs(os.path.join(rdir, "coeffs.tcvx"))
        trace = IterationTrace.from_csv(os.path.join(rdir, "trace.csv"))
        log.info("resuming from %s at iteration %d", rdir, trace.rows[-1]["iter"])
    elif cfg.solver.start == "random":
        Q0 = smooth_start(problem, p, cfg.solver.seed, cfg.solver.start_scale)
    else:
        Q0 = problem.zero()

    def progress(it, w, J):
        if it % 100 == 0:
            log.info("iter %d  J %.6g", it, J)

    Q, trace = solve(Q0, problem, p, truth=truth, trace=trace, callback=progress)
    c_true = pipeline.phantom(cfg).on_G
    res = recover_c(Q, problem, c_true)
    acc = trace.accepted()
    metrics = dict(res.metrics, stop_reason=trace.stop_reason, theta=trace.theta,
                   iterations=int(acc[-1]["iter"]), final_J=float(acc[-1]["J"]),
                   baseline_error=relative_l2(recover_c(problem.zero(), problem).c_rec, c_true),
                   data_delta=data.delta)
    dest = os.path.join(cfg.out, "invert")
    meta = pipeline.manifest(cfg)
    with staged(dest) as tmp:
        save_coeffs(os.path.join(tmp, "coeffs.tcvx"), Q, cfg.domain, meta)
        save_speed(os.path.join(tmp, "c_rec.tcvx"), speed_field_from(res, cfg.domain), meta)
        trace.to_csv(os.path.join(tmp, "trace.csv"))
        write_manifest(tmp, cfg, "invert", metrics=metrics)
    log.info("invert: %s after %d iterations, relative L2 error %.4g",
             trace.stop_reason, metrics["iterations"], res.metrics["rel_l2_error"])
    return dest, metrics


def cmd_verify(cfg):
    v = cfg.verify
    clean = _load_data(cfg, "clean" if os.path.exists(
        os.path.join(cfg.out, "forward", "clean")) else "data")
    problem = pipeline.build_problem(cfg, clean)
    p = replace(pipeline.solver_params(cfg), alpha=1e-8)
    summary = {}
    dest = os.path.join(cfg.out, "verify")
    with staged(dest) as tmp:
        def csv_rows(name, rows, cols):
            report.write_rows(os.path.join(tmp, name), cols, [[r[c] for c in cols] for r in rows])

        rows = probes.carleman_table(problem.z, v.lambdas, v.carleman_samples, cfg.solver.seed)
        csv_rows("carleman.csv", rows, ("sample", "lam", "lhs", "rhs", "holds"))
        const = []
        for lam in v.lambdas:
            lhs, rhs, ok = probes.carleman_check(np.ones_like(problem.z), problem.z, lam)
            el, er = probes.carleman_closed_form_const(cfg.domain.B1, cfg.domain.B2, lam)
            err = max(abs(lhs - el) / abs(el), abs(rhs - er) / abs(er))
            const.append({"lam": lam, "lhs": lhs, "exact_lhs": el, "rhs": rhs, "exact_rhs": er,
                          "rel_error": err, "pass": err <= 1e-10})
        csv_rows("carleman_const.csv", const, tuple(const[0]))
        summary["carleman_failures"] = sum(not r["holds"] for r in rows)

        grad = []
        for lam in v.gradient_lambdas:
            grad += probes.gradient_check(problem, replace(p, lam=lam), v.gradient_checks,
                                          seed=cfg.solver.seed)
        for r in grad:
            r["pass"] = r["rel_error"] <= 1e-5
        csv_rows("gradient.csv", grad, ("sample", "lam", "fd", "analytic", "rel_error", "pass"))
        summary["gradient_max_rel_error"] = max(r["rel_error"] for r in grad)

        conv = probes.convexity_probe(problem, p, v.convexity_pairs, seed=cfg.solver.seed)
        for r in conv:
            r["pass"] = r["slack"] >= -1e-9
        csv_rows("convexity.csv", conv, ("pair", "lam", "slack", "l2_distance", "pass"))
        report.plot_histogram(os.path.join(tmp, "convexity_hist.png"),
                              [r["slack"] for r in conv], f"convexity slack (lambda = {p.lam})")
        summary["convexity_min_slack"] = min(r["slack"] for r in conv)

        scan = probes.lambda_scan(problem, p, v.scan_lambdas, v.scan_pairs, seed=cfg.solver.seed)
        csv_rows("lambda_scan.csv", scan.table, ("lam", "min_slack", "passes"))
        summary.update(lambda_bar=scan.lam_bar, lambda_scan_monotone=scan.monotone)

        if v.deltas:
            rows, sq, sc = pipeline.delta_sweep(cfg, clean, v.deltas, pipeline.phantom(cfg).on_G,
                                                log=log.info)
            report.write_rows(os.path.join(tmp, "stability.csv"),
                              ("delta", "data_distance", "q_distance_h1", "c_distance", "c_error"),
                              rows)
            summary.update(stability_slope_q=sq, stability_slope_c=sc,
                           stability_pass=bool(0.7 <= sq <= 1.3 and 0.7 <= sc <= 1.3))
        write_manifest(tmp, cfg, "verify", summary=summary)
    log.info("verify: %s", json.dumps(summary, default=_json_default, sort_keys=True))
    return dest, summary


def cmd_report(cfg):
    run = cfg.out
    inv = os.path.join(run, "invert")
    _require(os.path.join(inv, "c_rec.tcvx"), "inversion result")
    from .forward import load_speed

    c_rec = load_speed(os.path.join(inv, "c_rec.tcvx")).on_G
    c_true = pipeline.phantom(cfg).on_G
    trace = IterationTrace.from_csv(os.path.join(inv, "trace.csv"))
    metrics = _read_json(os.path.join(inv, "manifest.json"))["metrics"]
    dest = os.path.join(run, "report")
    with staged(dest) as tmp:
        _, z = report.export_slices(tmp, cfg.domain, c_rec, c_true)
        k = cfg.domain.nz // 2
        report.plot_slices(os.path.join(tmp, "c_slices.png"), cfg.domain, c_rec, c_true, k, z)
        report.export_convergence(tmp, trace)
        lines = [f"relative L2 error of c: {relative_l2(c_rec, c_true):.6g}",
                 f"zero-start baseline error: {metrics['baseline_error']:.6g}",
                 f"stop reason: {metrics['stop_reason']} after {metrics['iterations']} iterations",
                 f"measured theta: {metrics['theta']:.6g}",
                 f"slices at z = {z:.6g}"]
        stab = os.path.join(run, "verify", "stability.csv")
        if os.path.exists(stab):
            rows = [tuple(float(r[k]) for k in ("delta", "data_distance", "q_distance_h1",
                                                 "c_distance", "c_error"))
                    for r in report.read_rows(stab)]
            if len(rows) >= 3:
                sq = probes.loglog_slope([r[1] for r in rows], [r[2] for r in rows])
                sc = probes.loglog_slope([r[1] for r in rows], [r[3] for r in rows])
                report.export_delta_sweep(tmp, rows, sq, sc)
                lines.append(f"delta sweep slopes: Q {sq:.4f}, c {sc:.4f}")
        with open(os.path.join(tmp, "summary.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        write_manifest(tmp, cfg, "report")
    log.info("report written to %s", dest)
    return dest


COMMANDS = {"phantom": cmd_phantom, "forward": cmd_forward, "invert": cmd_invert,
            "verify": cmd_verify, "report": cmd_report}


def build_parser():
    ap = argparse.ArgumentParser(prog="travelcvx", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--out", help="run directory (overrides the config)")
        sp.add_argument("--threads", type=int, help="worker threads for the forward solver")
        sp.add_argument("--seed", type=int, help="seed for noise and random starts")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out:
        cfg = cfg.replace(out=args.out)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = cfg.replace(threads=args.threads)
    if args.seed is not None:
        cfg = cfg.replace(noise=replace(cfg.noise, seed=args.seed),
                          solver=replace(cfg.solver, seed=args.seed))
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except (ConfigError, AdmissibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
