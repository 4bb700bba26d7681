"""Command line entry point: ``varsob run <config>`` and ``varsob validate <config>``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import concentration as conc
from .config import ExperimentConfig, load_config
from .errors import ConfigParseError, ConfigValidationError, NonConvergence, VarsobError
from .exponents import critical_set, field_from_spec, spec_callable, write_csv as write_exponent_csv
from .grid import CellField, energy_measure, write_grid_function, write_measure
from .norms import (elementary_inequality_constant, hoelder_fuzz, luxemburg_norm, modular,
                    norm_modular_bounds, write_fuzz_csv)
from .solver import ExtremalProblem, ExtremalRecord, quotient_constant, solve

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2
THREADS_ENV = "VARSOB_THREADS"


class Run:
    """Collects headline numbers and artifact paths for one experiment."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.grid = cfg.grid()
        self.p = field_from_spec(self.grid, cfg.p_spec)
        self.q = field_from_spec(self.grid, cfg.q_spec) if cfg.q_spec else None
        self.headline: dict[str, str] = {}
        self.artifacts: list[str] = []
        self.failed = False

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def put(self, key, value):
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        self.headline[key] = str(value)


def _write_record_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "objective", "grad_norm", "iterations", "restarts_used", "converged",
                    "critical", "restart_dispersion"])
        for rec in records:
            w.writerow([repr(rec.eps), repr(rec.objective), repr(rec.grad_norm), rec.iterations,
                        rec.restarts_used, int(rec.converged), int(rec.critical),
                        repr(rec.restart_dispersion)])


def _solve(prob, opts, warm=()) -> tuple[ExtremalRecord, bool]:
    try:
        return solve(prob, opts, warm=warm), True
    except NonConvergence as err:
        return err.record, False


def mode_norm_check(run: Run):
    u = CellField.from_callable(run.grid, spec_callable(run.grid, run.cfg.params["function"]))
    rho = modular(u, run.p).value
    norm = luxemburg_norm(u, run.p)
    lo, hi = norm_modular_bounds(u, run.p)
    with open(run.path("norm_check.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for key, val in (("modular", rho), ("luxemburg", norm.value), ("residual", norm.residual),
                         ("iterations", norm.iterations), ("lower_bound", lo), ("upper_bound", hi)):
            w.writerow([key, repr(float(val)) if isinstance(val, float) else val])
    write_exponent_csv(run.path("p.csv"), run.p)
    run.put("modular", rho)
    run.put("luxemburg", norm.value)
    run.put("residual", norm.residual)


def mode_inequality_fuzz(run: Run):
    par = run.cfg.params
    result = hoelder_fuzz(run.grid, par["hoelder_trials"], run.cfg.seed)
    with open(run.path("hoelder_fuzz.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "trials", "violations", "worst_excess"])
        w.writerow([run.cfg.seed, result["trials"], result["violations"], repr(result["worst_excess"])])
    rows = []
    n = par["elementary_samples"]
    for p_lo, p_hi, theta in par["elementary_cases"]:
        for samples in (n, 2 * n):
            c = elementary_inequality_constant(p_lo, p_hi, theta, samples, run.cfg.seed)
            rows.append(dict(seed=run.cfg.seed, samples=samples, p_lo=p_lo, p_hi=p_hi, theta=theta,
                             empirical_constant=c))
    write_fuzz_csv(run.path("elementary_fuzz.csv"), rows)
    run.put("hoelder_violations", result["violations"])
    run.put("hoelder_worst_excess", result["worst_excess"])
    for row in rows[1::2]:
        run.put(f"elementary_{row['p_lo']:g}_{row['p_hi']:g}_{row['theta']:g}", row["empirical_constant"])


def _report_critical(run: Run):
    crit = critical_set(run.p, run.q, run.grid.dim, run.cfg.crit_tol)
    run.put("critical_cells", len(crit.cells))
    run.put("q_lo_below_p_hi", str(run.q.lo < run.p.hi).lower())
    return crit


def mode_solve(run: Run):
    _report_critical(run)
    prob = ExtremalProblem(run.p, run.q, run.cfg.params["eps"], crit_tol=run.cfg.crit_tol)
    rec, ok = _solve(prob, run.cfg.solver)
    run.failed |= not ok
    write_grid_function(run.path("extremal.csv"), rec.u)
    write_measure(run.path("energy_measure.csv"), energy_measure(rec.u, run.p))
    _write_record_csv(run.path("record.csv"), [rec])
    run.put("objective", rec.objective)
    run.put("quotient_constant", quotient_constant(prob, record=rec))
    run.put("grad_norm", rec.grad_norm)
    run.put("iterations", rec.iterations)
    run.put("converged", str(rec.converged).lower())
    run.put("critical", str(rec.critical).lower())


def mode_sweep(run: Run):
    par = run.cfg.params
    _report_critical(run)
    report = conc.run_sweep(run.p, run.q, par["eps_schedule"], run.cfg.solver,
                            r=par["radius"] or None, crit_tol=run.cfg.crit_tol,
                            conc_threshold=par["conc_threshold"],
                            compact_threshold=par["compact_threshold"])
    run.failed |= bool(report.failed)
    conc.write_sweep_csv(run.path("sweep.csv"), report)
    last = next((rec for rec in reversed(report.records) if rec is not None), None)
    if last is not None:
        write_grid_function(run.path("extremal_final.csv"), last.u)
    run.put("limit_estimate", report.limit_estimate)
    run.put("classification", report.classification)
    run.put("concentration_point", "none" if report.concentration_point is None else report.concentration_point)
    run.put("conc_threshold", report.conc_threshold)
    run.put("compact_threshold", report.compact_threshold)
    run.put("radius", report.radius)
    run.put("failed_eps", " ".join(repr(e) for e in report.failed) or "none")


def mode_localized(run: Run):
    par = run.cfg.params
    results = []
    for k, center in enumerate(par["centers"]):
        loc = conc.localized_constant(run.p, run.q, center, par["radii"], par["eps"], run.cfg.solver,
                                      run.cfg.crit_tol)
        run.failed |= not all(rec.converged for rec in loc.records)
        results.append(loc)
        run.put(f"center_{k}_extrapolated", loc.extrapolated)
        if par["eps"] == 0:
            run.put(f"center_{k}_sobloc_rel_gap", conc.sobloc_identity(loc, run.q).rel_gap)
    conc.write_localized_csv(run.path("localized.csv"), results)


def mode_bubble_demo(run: Run):
    par = run.cfg.params
    center = par["center"][0]
    test = par["test_function"] or "radial(1, -1, " + ", ".join(repr(c) for c in center) + ")"
    psi = spec_callable(run.grid, test)
    psi0 = float(psi(np.atleast_2d(center))[0])
    with open(run.path("bubbles.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scale", "energy", "lp_modular", "pairing_gap", "F_eps"])
        for k, scale in enumerate(par["scales"]):
            u = conc.make_bubble(center, scale, run.p, par["target_mass"], par["profile"])
            m = energy_measure(u, run.p)
            gap = abs(m.pair(psi) - psi0 * par["target_mass"])
            f_eps = conc.eval_F_eps(u, scale, run.q) if run.q is not None else float("nan")
            w.writerow([repr(scale), repr(m.total_mass), repr(modular(u, run.p).value), repr(gap),
                        repr(f_eps)])
            write_grid_function(run.path(f"bubble_{k}.csv"), u)
            run.put(f"scale_{k}_pairing_gap", gap)


def mode_sufficient_condition(run: Run):
    par = run.cfg.params
    crit = _report_critical(run)
    if crit.empty:
        raise VarsobError("critical set is empty; the sufficient condition needs critical points")
    cells = [run.grid.locate(c) for c in par["centers"]] or conc.sample_critical_cells(
        crit, run.grid, par["samples"], max(par["radii"]))
    # localized extremals seed the global solve, so the inclusion bound holds by monotone ascent
    locs = [conc.localized_constant(run.p, run.q, run.grid.cell_centers[c], par["radii"], 0.0,
                                    run.cfg.solver) for c in cells]
    warm = [loc.records[int(np.argmax(loc.radii))].u for loc in locs]
    rec, ok = _solve(ExtremalProblem(run.p, run.q, 0.0, crit_tol=run.cfg.crit_tol), run.cfg.solver, warm)
    run.failed |= not ok
    sup_local = max(loc.extrapolated for loc in locs)
    finest = max(max(loc.values) for loc in locs)
    strict = sup_local < rec.objective * (1 - par["margin"])
    conc.write_localized_csv(run.path("localized.csv"), locs)
    _write_record_csv(run.path("global.csv"), [rec])
    run.put("sup_local", sup_local)
    run.put("global", rec.objective)
    run.put("strict", str(strict).lower())
    run.put("inclusion_holds", str(finest <= rec.objective * (1 + conc.INCLUSION_SLACK)).lower())


MODES = {
    "norm-check": mode_norm_check,
    "inequality-fuzz": mode_inequality_fuzz,
    "solve": mode_solve,
    "sweep": mode_sweep,
    "localized": mode_localized,
    "bubble-demo": mode_bubble_demo,
    "sufficient-condition": mode_sufficient_condition,
}


def write_summary(path: Path, fields_: list):
    with open(path, "w") as fh:
        for key, value in fields_:
            fh.write(f"{key} = {value}\n")


def run_experiment(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Execute ``cfg``; returns (exit code, summary fields). Artifacts and the
    summary land in cfg.output_dir."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.ini").write_text(cfg.effective_text())
    start = time.perf_counter()
    run = Run(cfg, out)
    error = ""
    try:
        MODES[cfg.mode](run)
        code = EXIT_NONCONVERGENCE if run.failed else EXIT_OK
    except NonConvergence as exc:
        code, error = EXIT_NONCONVERGENCE, str(exc)
    except VarsobError as exc:
        code, error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    status = {EXIT_OK: "ok", EXIT_NONCONVERGENCE: "nonconvergence", EXIT_CONFIG: "error"}[code]
    summary = [("config_hash", cfg.config_hash()), ("mode", cfg.mode), ("status", status),
               ("exit_code", code), ("wall_time", f"{time.perf_counter() - start:.3f}")]
    summary += list(run.headline.items())
    summary += [("artifacts", ", ".join(["effective_config.ini"] + run.artifacts)),
                ("version", __version__)]
    if error:
        summary.append(("error", error.replace("\n", " ")))
    write_summary(out / "summary.txt", summary)
    return code, dict(summary)


def _threads(cli_value, cfg_value) -> int:
    if cli_value is not None:
        return cli_value
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return cfg_value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="varsob", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--output-dir")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--threads", type=int)
    val_p = sub.add_parser("validate", help="check a config without running it")
    val_p.add_argument("config")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"ok: mode={cfg.mode} hash={cfg.config_hash()}")
        if cfg.q_spec:
            grid = cfg.grid()
            crit = critical_set(field_from_spec(grid, cfg.p_spec), field_from_spec(grid, cfg.q_spec),
                                cfg.dim, cfg.crit_tol)
            print(f"critical cells: {len(crit.cells)}")
        return EXIT_OK

    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    threads = _threads(args.threads, cfg.solver.threads)
    cfg.solver = dataclasses.replace(cfg.solver, seed=cfg.seed, threads=max(1, threads))
    code, summary = run_experiment(cfg)
    print(f"{summary['status']}: {cfg.output_dir}/summary.txt")
    return code


if __name__ == "__main__":
    sys.exit(main())
