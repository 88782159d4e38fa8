# Boussinesq Suite - command line front end
# Subcommands: simulate, verify-ops, besov, sweep, report.
# Config comes from a JSON file validated by run_config; outputs go to <out>/<subcommand>/.

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from jinja2 import Template

from besov import BesovIndex, besov_report_row, heat_time_check, ladder_manifest, random_corpus
from boussinesq_solver import (SolverConfig, ViscosityLaw, data_scale_sweep, epsilon_sweep, eta,
                               interface_temperature, picard_solve, prepare_data, random_band_limited_velocity,
                               shear_plus_swirl_velocity, single_mode_velocity, smooth_temperature)
from field_core import PhysicalField, load_field, make_grid, save_field
from ledger_store import read_ledger, read_runs, run_identifier, setup_ledger, store_inequalities, store_run
from norms_monitor import constant_stability, fit_vertical_constants, ledger_rows, theorem_report
from operator_probes import ProbeLevel, verify_operators
from run_config import (apply_overrides, constraint_report, get_ledger_url, load_config,
                        settings_from_env, validate)
from suite_errors import (ConfigValidationError, DomainError, GridMismatchError, NumericalInvariantError,
                          SuiteError)

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "verify-ops", "besov", "sweep", "report")
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVARIANT = 2

SOLVER_SUBCOMMANDS = ("simulate", "sweep")
FAILED_STATUSES = ("invariant_violation", "failed")
P_CHECK_WARNING = "Stokes forcing clause with the undefined exponent p-check is ignored"
CSV_FLOAT_FORMAT = "%.12e"

OPEN_QUESTION_FLAGS = {
    "heat_kernel_normalization": "(4 pi t)^(-d/2); the (2 pi t)^(d/2) form is treated as a typo",
    "heat_time_index": "s = -2/r",
    "p_check_clause": "ignored, warning logged",
    "alpha_p1": "read as p",
    "q_star": "2dr/((2-eps)r-2)",
    "gronwall_tails": ["L^(4/eps)", "L^(2/eps)"],
    "temperature_space": "L^inf",
    "theorem2_first_inequality": "(1/3)(d/p-1) < 1/2-1/(2r) enforced; printed form reported as advisory",
    "mean_modes": "velocity zero mode dropped; temperature keeps its mean",
    "stopping": "inner: undamped relative Y_r update; outer: undamped dU",
    "lambda_recipe": "(|u0^d| + 1)^(2r)",
    "transport_scheme": "Strang splitting, exact diffusion, SSP-RK3 dealiased advection",
}

LEDGER_PLOT = Template("""# Inferred constants per run, one series per inequality.
set datafile separator ","
set key outside right
set logscale y
set xlabel "ledger row"
set ylabel "inferred constant"
plot {% for name in inequalities %}'{{ csv }}' every ::1 using 0:(strcol(2) eq "{{ name }}" ? $7 : 1/0) with points title "{{ name }}"{% if not loop.last %}, \\
     {% endif %}{% endfor %}
""")

ITERATION_PLOT = Template("""# Increments between Picard iterates.
set datafile separator ","
set logscale y
set xlabel "iteration"
set ylabel "dU"
plot '{{ csv }}' every ::1 using {{ n_col }}:{{ plain_col }} with linespoints title "dU (undamped)", \\
     '{{ csv }}' every ::1 using {{ n_col }}:{{ damped_col }} with linespoints title "dU (lambda-damped)"
""")


# ------------------------
# Output helpers
# ------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")


def write_csv(path, rows, columns=None):
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return frame


def configure_logging(level="INFO", quiet=False):
    logging.basicConfig(level=logging.WARNING if quiet else getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


# ------------------------
# Builders
# ------------------------

def build_law(cfg):
    v = cfg.viscosity
    return ViscosityLaw(v.kind, v.value, v.delta, v.theta_scale, tuple(tuple(row) for row in v.table))


def solver_config(cfg):
    s, t, ex = cfg.solver, cfg.time, cfg.exponents
    return SolverConfig(
        horizon=t.horizon, intervals=t.intervals, grading=t.grading, eps=s.eps, p=ex.p, r=ex.r,
        regime=ex.regime, lambda_=s.lambda_, c_r=s.c_r, c0=s.c0, tol_outer=s.tol_outer, max_outer=s.max_outer,
        tol_inner=s.tol_inner, max_inner=s.max_inner, cfl=s.cfl, max_substeps=s.max_substeps,
        divergence_threshold=s.divergence_threshold, divergence_patience=s.divergence_patience,
        pressure_convention=s.pressure_convention, max_principle_slack=s.max_principle_slack,
        keep_states=s.keep_states,
    )


def _load_on_grid(path, grid, rank):
    field = load_field(path)
    if field.grid != grid:
        raise GridMismatchError(f"{path} was saved on {field.grid}, run grid is {grid}")
    if field.rank != rank:
        raise DomainError(f"{path} holds a rank {field.rank} field, expected rank {rank}")
    return field


def build_temperature(spec, grid):
    if spec.kind == "interface":
        return interface_temperature(grid, spec.amplitude, spec.width)
    if spec.kind == "smooth":
        return smooth_temperature(grid, spec.amplitude, spec.mode, spec.offset)
    if spec.kind == "file":
        return _load_on_grid(spec.path, grid, 0)
    return PhysicalField(grid, np.zeros(grid.shape))


def build_velocity(spec, grid, seed):
    if spec.kind == "single-mode":
        return single_mode_velocity(grid, spec.mode, spec.amplitude)
    if spec.kind == "random-band-limited":
        return random_band_limited_velocity(grid, seed, spec.band, spec.amplitude)
    if spec.kind == "shear-plus-swirl":
        return shear_plus_swirl_velocity(grid, spec.shear, spec.swirl, spec.mode)
    if spec.kind == "file":
        return _load_on_grid(spec.path, grid, 1)
    return PhysicalField(grid, np.zeros((grid.dim,) + grid.shape), 1)


def build_data(cfg):
    grid = make_grid(cfg.grid.dim, cfg.grid.n_per_axis, cfg.grid.box_length)
    theta = build_temperature(cfg.data.theta, grid)
    u = build_velocity(cfg.data.velocity, grid, cfg.seed)
    return prepare_data(theta, u, cfg.data.trunc_level, cutoff_base=cfg.data.cutoff_base)


def _config_dict(cfg):
    return cfg.model_dump(mode="json", by_alias=True)


# ------------------------
# Subcommands
# ------------------------

def cmd_simulate(cfg, out_dir, ledger_url):
    data = build_data(cfg)
    law = build_law(cfg)
    sc = solver_config(cfg)
    states, history = picard_solve(data, law, sc)
    smallness = eta(data, law, sc.p, sc.r, sc.regime, sc.c_r, sc.c0)
    reports = theorem_report(states, sc.regime, smallness, history.status)
    run_id = run_identifier(_config_dict(cfg), "simulate")
    rows = ledger_rows(run_id, reports, smallness)

    iterations = write_csv(out_dir / "iterations.csv", history.ledger)
    write_csv(out_dir / "ledger.csv", rows)
    write_json(out_dir / "history.json", history.to_dict())
    final = states[-1]
    save_field(out_dir / "theta_T.bin", final.theta.snapshot(len(final.theta) - 1))
    save_field(out_dir / "u_T.bin", final.u.snapshot(len(final.u) - 1))
    if len(iterations):
        columns = list(iterations.columns)
        (out_dir / "plot_iterations.gp").write_text(ITERATION_PLOT.render(
            csv="iterations.csv", n_col=columns.index("n") + 1, plain_col=columns.index("delta_u") + 1,
            damped_col=columns.index("delta_u_damped") + 1), encoding="utf-8")

    engine = setup_ledger(ledger_url)
    store_run(engine, run_id, "simulate", history.status, cfg.seed, sc.regime, smallness.eta, history.lambda_,
              history.iterations, _config_dict(cfg))
    store_inequalities(engine, rows)

    print(f"{'✅' if history.status == 'converged' else '⚠️'} simulate: {history.status} after "
          f"{history.iterations} iterations (eta={smallness.eta:.4g}, lambda={history.lambda_:.4g})")
    return {
        "success": history.status != "invariant_violation",
        "status": history.status,
        "error": history.message or None,
        "run_id": run_id,
        "iterations": history.iterations,
        "eta": smallness.eta,
        "data": data.describe(),
    }


def _probe_levels(cfg):
    pr = cfg.probes
    plain = ProbeLevel(pr.plain[0], pr.n_per_axis, pr.intervals, pr.horizon)
    weighted = ProbeLevel(pr.weighted[0], pr.weighted_n_per_axis, pr.weighted_intervals, pr.horizon)
    return plain, weighted


def cmd_verify_ops(cfg, out_dir):
    pr = cfg.probes
    plain_level, weighted_level = _probe_levels(cfg)
    rows, damping = verify_operators(tuple(pr.plain), tuple(pr.weighted), plain_level, weighted_level,
                                     cfg.seed, pr.ensemble_size, pr.include_weighted)
    write_csv(out_dir / "probes.csv", rows)
    write_csv(out_dir / "damping.csv", damping)
    unstable = [row["operator"] for row in rows if not row["stable"]]
    steep = [row["operator"] for row in damping if not row["within_bound"]]
    status = "ok" if not unstable and not steep else "flagged"
    print(f"{'✅' if status == 'ok' else '⚠️'} verify-ops: {len(rows)} probes, {len(damping)} damping fits, "
          f"{len(unstable)} unstable, {len(steep)} above slope bound")
    return {"success": True, "status": status, "error": None, "unstable": unstable, "slope_violations": steep}


def cmd_besov(cfg, out_dir):
    b = cfg.besov
    grid = make_grid(b.dim, b.n_per_axis, 2.0 * np.pi)
    corpus = random_corpus(grid, cfg.seed, b.corpus_size)
    rows, skipped = [], []
    for s in cfg.besov_s_values():
        if not s < 0:
            logger.warning("skipping s=%.4g: the heat characterization needs s < 0", s)
            skipped.append(s)
            continue
        rows += [besov_report_row(i, field, b.p, b.r, s) for i, field in enumerate(corpus)]
    frame = write_csv(out_dir / "besov.csv", rows)
    write_csv(out_dir / "heat_time.csv",
              [dict(field_id=i, **heat_time_check(field, b.p, b.r)) for i, field in enumerate(corpus)])
    ratios = frame["ratio"].to_numpy(dtype=float) if len(frame) else np.array([1.0])
    inside = bool(np.all((ratios >= 0.1) & (ratios <= 10.0)))
    spread = float(ratios.max() / ratios.min()) if ratios.min() > 0 else float("inf")
    print(f"{'✅' if inside else '⚠️'} besov: {len(rows)} rows, ratios in "
          f"[{ratios.min():.3f}, {ratios.max():.3f}], spread {spread:.3f}")
    return {"success": True, "status": "ok" if inside else "flagged", "error": None,
            "ratio_min": float(ratios.min()), "ratio_max": float(ratios.max()), "spread": spread,
            "skipped_s": skipped}


def cmd_sweep(cfg, out_dir, ledger_url):
    data = build_data(cfg)
    law = build_law(cfg)
    sc = solver_config(cfg)
    if cfg.sweep.kind == "epsilon":
        runs, rows = epsilon_sweep(data, law, sc, cfg.sweep.eps_list)
        write_csv(out_dir / "sweep.csv", rows)
        summary = [{"eps": run.label, "status": run.history.status, "iterations": run.history.iterations}
                   for run in runs]
    else:
        runs = data_scale_sweep(data, law, sc, cfg.sweep.scales)
        engine = setup_ledger(ledger_url)
        all_rows = []
        for run in runs:
            run_id = run_identifier(_config_dict(cfg), "sweep", run.label)
            rows = ledger_rows(run_id, run.reports, run.smallness)
            for row in rows:
                row["scale"] = run.label
            store_run(engine, run_id, "sweep", run.history.status, cfg.seed, sc.regime, run.smallness.eta,
                      run.history.lambda_, run.history.iterations, _config_dict(cfg))
            store_inequalities(engine, rows)
            all_rows += rows
        frame = write_csv(out_dir / "sweep.csv", all_rows)
        stability = constant_stability(frame) if len(frame) else {}
        write_csv(out_dir / "stability.csv", [{"inequality": k, "max_over_min": v} for k, v in sorted(stability.items())])
        summary = [{"scale": run.label, "status": run.history.status, "iterations": run.history.iterations,
                    "eta": run.smallness.eta} for run in runs]
    write_csv(out_dir / "runs.csv", summary)
    violated = [run.label for run in runs if run.history.status == "invariant_violation"]
    print(f"{'❌' if violated else '✅'} sweep ({cfg.sweep.kind}): {len(runs)} runs, statuses "
          f"{[run.history.status for run in runs]}")
    return {"success": not violated, "status": "invariant_violation" if violated else "ok",
            "error": f"invariant violated for {violated}" if violated else None, "runs": summary}


def cmd_report(cfg, out_dir, ledger_url):
    engine = setup_ledger(ledger_url)
    frame = read_ledger(engine)
    frame.to_csv(out_dir / "ledger.csv", index=False, float_format=CSV_FLOAT_FORMAT)
    read_runs(engine).to_csv(out_dir / "runs.csv", index=False, float_format=CSV_FLOAT_FORMAT)
    rows = [{"inequality": name, "max_over_min": value, "c2": np.nan, "c3": np.nan}
            for name, value in sorted(constant_stability(frame).items())] if len(frame) else []
    c2, c3 = fit_vertical_constants(frame) if len(frame) else (np.nan, np.nan)
    rows.append({"inequality": "vertical least-squares", "max_over_min": np.nan, "c2": c2, "c3": c3})
    write_csv(out_dir / "constants.csv", rows, ["inequality", "max_over_min", "c2", "c3"])
    inequalities = sorted(frame["inequality"].unique()) if len(frame) else []
    (out_dir / "plot_ledger.gp").write_text(LEDGER_PLOT.render(csv="ledger.csv", inequalities=inequalities),
                                            encoding="utf-8")
    print(f"✅ report: {len(frame)} ledger rows over {frame['run_id'].nunique() if len(frame) else 0} runs")
    return {"success": True, "status": "ok", "error": None, "rows": int(len(frame))}


# ------------------------
# Driver
# ------------------------

def run(subcommand, raw_config=None, seed=None, out=None):
    """Validate, dispatch and write the manifest. Returns (result dict, exit code)."""
    if subcommand not in SUBCOMMANDS:
        return {"success": False, "status": "invalid", "error": f"unknown subcommand {subcommand!r}"}, EXIT_VALIDATION
    settings = settings_from_env(out)
    merged = apply_overrides(raw_config, seed, out, settings)
    try:
        cfg = validate(merged)
    except ConfigValidationError as exc:
        for err in exc.errors:
            print(f"❌ {err}")
        return {"success": False, "status": "invalid", "error": str(exc), "errors": exc.errors}, EXIT_VALIDATION

    out_dir = Path(cfg.output_dir) / subcommand
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger_url = get_ledger_url(cfg.output_dir)
    if subcommand in SOLVER_SUBCOMMANDS:
        logger.warning(P_CHECK_WARNING)
    try:
        if subcommand == "simulate":
            result = cmd_simulate(cfg, out_dir, ledger_url)
        elif subcommand == "verify-ops":
            result = cmd_verify_ops(cfg, out_dir)
        elif subcommand == "besov":
            result = cmd_besov(cfg, out_dir)
        elif subcommand == "sweep":
            result = cmd_sweep(cfg, out_dir, ledger_url)
        else:
            result = cmd_report(cfg, out_dir, ledger_url)
    except NumericalInvariantError as exc:
        print(f"❌ {subcommand}: {exc}")
        result = {"success": False, "status": "invariant_violation", "error": str(exc)}
    except SuiteError as exc:
        print(f"❌ {subcommand}: {exc}")
        result = {"success": False, "status": "failed", "error": str(exc)}

    write_json(out_dir / "manifest.json", {
        "subcommand": subcommand,
        "seed": cfg.seed,
        "config": _config_dict(cfg),
        "constraints": [c.describe() for c in constraint_report(cfg)],
        "open_questions": dict(OPEN_QUESTION_FLAGS, pressure_convention=cfg.solver.pressure_convention,
                               cutoff_applied=cfg.data.cutoff_base is not None),
        "ladder": ladder_manifest(),
        "critical_index": BesovIndex.critical(cfg.grid.dim, cfg.exponents.p, cfg.exponents.r).s,
        "result": result,
    })
    code = EXIT_INVARIANT if result["status"] in FAILED_STATUSES else EXIT_OK
    return result, code


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed (overrides the file and BOUSSINESQ_SEED)")
    common.add_argument("--out", help="output directory (overrides the file and BOUSSINESQ_OUT_DIR)")
    common.add_argument("--quiet", action="store_true", help="log warnings only")
    parser = argparse.ArgumentParser(description="Variable-viscosity Boussinesq spectral toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("simulate", parents=[common], help="run the Picard solver and report the displays")
    sub.add_parser("verify-ops", parents=[common], help="operator-norm and damping probes")
    sub.add_parser("besov", parents=[common], help="heat versus dyadic Besov norms on a random corpus")
    sub.add_parser("sweep", parents=[common], help="epsilon or data-scale sweep")
    sub.add_parser("report", parents=[common], help="aggregate the cross-run ledger")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(settings_from_env(args.out).log_level, args.quiet)
    try:
        raw = load_config(args.config) if args.config else {}
    except (OSError, json.JSONDecodeError) as exc:
        print(f"❌ cannot read config: {exc}")
        return EXIT_VALIDATION
    _, code = run(args.subcommand, raw, args.seed, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
