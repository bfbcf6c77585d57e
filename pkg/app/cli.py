"""
Command-line entry point: cryomos {extract,fit,model,bench,physics,calibrate-library}.

Exit codes: 0 success, 1 I/O, parse or domain error, 2 partial extraction,
3 unconverged fit or infeasible calibration.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from app.core.config import settings
from app.core.error_handlers import (CryoToolkitError, InfeasibleAnchorsError,
                                     MissingParameterSetError, ParseError)
from app.core.validators import GridValidator, check_temperature
from app.schemas.device import DeviceGeometry, ModelParams
from app.schemas.fitting import FitProblem
from app.schemas.sweep import IVSweep
from app.services import (bench_service, circuit_service, compact_model_service,
                          extraction_service, fitting_service, physics_service,
                          reference_library)
from app.tasks.batch import run_ordered
from app.utils import reports
from app.utils.param_files import (ParameterFile, format_float, read_config,
                                   read_parameter_file, write_parameter_file)
from app.utils.sweep_csv import (device_id_for, list_sweep_files, read_sweep_csv,
                                 write_sweep_csv)

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_IO = 1
EXIT_PARTIAL = 2
EXIT_UNCONVERGED = 3


def _out_dir(args) -> Path:
    out = Path(args.out or settings.OUTPUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(args) -> Tuple[str, ModelParams, DeviceGeometry]:
    """Resolve --params/--set to a parameter set and geometry."""
    if args.params:
        pf = read_parameter_file(args.params)
        geometry = pf.geometry
        sets = pf.models
        if geometry is None:
            geometry = reference_library.load_reference_library(args.library).geometry
    else:
        library = reference_library.load_reference_library(args.library)
        geometry, sets = library.geometry, library.sets
    name = args.set or (sorted(sets)[0] if len(sets) == 1 else None)
    if name is None:
        raise ParseError(str(args.params or "library"), 0, "Several sets available; choose one with --set")
    if name not in sets:
        raise MissingParameterSetError(name, sets)
    return name, sets[name], geometry


# extract

def _pair_by_device(items: List[Tuple[str, IVSweep]]):
    """Split sweeps into linear/saturation pairs sharing device id and T, and singles."""
    grouped: Dict[Tuple[str, float], List[IVSweep]] = {}
    for _, sweep in items:
        if sweep.device_id:
            grouped.setdefault((sweep.device_id, sweep.t_k), []).append(sweep)
    pairs = {}
    for device, sweeps in grouped.items():
        linear = [s for s in sweeps if s.v_ds <= extraction_service.LINEAR_VDS_MAX]
        saturation = [s for s in sweeps if s.v_ds > extraction_service.LINEAR_VDS_MAX]
        if len(sweeps) == 2 and len(linear) == 1 and len(saturation) == 1:
            pairs[device] = (linear[0], saturation[0])
    singles = [(key, s) for key, s in items if (s.device_id, s.t_k) not in pairs]
    return pairs, singles


def cmd_extract(args) -> int:
    files = list_sweep_files(args.paths)
    if not files:
        raise ParseError(" ".join(args.paths), 0, "No sweep files found")
    sweeps = run_ordered(read_sweep_csv, files, max_workers=args.workers)
    items = [(device_id_for(path, s), s) for path, s in zip(files, sweeps)]

    pairs, singles = _pair_by_device(items)
    found = [
        extraction_service.extract_all(lin, sat, ratio=args.ratio)
        for _, (lin, sat) in sorted(pairs.items())
    ]
    found += extraction_service.extract_many(singles, ratio=args.ratio, max_workers=args.workers)
    found.sort(key=lambda r: (r.device_id, r.t_k))

    out = _out_dir(args)
    reports.write_text(out / "extraction_report.csv", reports.dump_reports_csv(found))
    if args.json:
        reports.write_text(out / "extraction_report.json",
                           reports.dump_json([r.model_dump(mode="json") for r in found]))
    partial = [r.device_id for r in found if r.errors]
    logger.info(f"Extracted {len(found)} reports into {out}")
    if partial:
        logger.warning(f"Partial extraction for: {', '.join(partial)}")
        return EXIT_PARTIAL
    return EXIT_OK


# fit

def _fit_problem(config_path: Path, args) -> Tuple[FitProblem, float, str]:
    doc = read_config(config_path)
    section = doc.first("fit")
    if section is None:
        raise ParseError(str(config_path), 1, "Missing [fit] section")
    base = config_path.parent
    for key in ("params", "sweeps"):
        if section.get(key) is None:
            raise ParseError(str(config_path), section.line, f"Missing required key '{key}' in [fit]")

    pf = read_parameter_file(base / section.get("params"))
    name = section.get("model") or (sorted(pf.models)[0] if pf.models else None)
    if name not in pf.models:
        raise ParseError(str(config_path), section.entries.get("model", ("", section.line))[1],
                         f"Model '{name}' not found in {section.get('params')}")

    sweep_files = list_sweep_files([base / p for p in section.list_of("sweeps")])
    sweeps = run_ordered(read_sweep_csv, sweep_files, max_workers=args.workers)

    bounds = {}
    bounds_section = doc.first("bounds")
    if bounds_section is not None:
        for key, (value, lineno) in bounds_section.entries.items():
            try:
                lower, upper = (float(v) for v in value.split(","))
            except ValueError:
                raise ParseError(str(config_path), lineno, f"Bounds for '{key}' must be 'lower, upper'")
            bounds[key] = (lower, upper)
    free = section.list_of("free")
    for key in free:
        bounds.setdefault(key, fitting_service.DEFAULT_BOUNDS.get(key, (0.0, 1.0)))

    threshold = args.threshold
    if threshold is None:
        threshold = float(section.get("threshold", str(settings.FIT_ERROR_THRESHOLD)))
    try:
        problem = FitProblem(
            sweeps=sweeps,
            initial=pf.models[name],
            free=free,
            bounds=bounds,
            max_iterations=int(section.get("max_iterations", str(settings.FIT_MAX_ITERATIONS))),
            restarts=int(section.get("restarts", str(settings.FIT_RESTARTS))),
            polish=section.get("polish", "true").lower() == "true",
        )
    except ValueError as e:
        raise ParseError(str(config_path), section.line, f"Invalid fit configuration: {e}")
    return problem, threshold, name


def cmd_fit(args) -> int:
    problem, threshold, name = _fit_problem(Path(args.config), args)
    result = fitting_service.calibrate(problem, seed=args.seed)

    out = _out_dir(args)
    geometry = problem.sweeps[0].geometry
    write_parameter_file(ParameterFile(version="fit-1", geometry=geometry, models={name: result.params}),
                         out / "fitted.params")
    reports.write_text(out / "fit_errors.csv", reports.dump_fit_errors_csv(result))
    if args.json:
        reports.write_text(out / "fit_result.json", reports.dump_json(result.model_dump(mode="json")))

    accepted = result.converged and (result.mean_rel_error < threshold or result.mean_rel_error == 0.0)
    print(f"mean relative error {format_float(result.mean_rel_error, 6)} "
          f"(threshold {threshold:g}), converged={result.converged}")
    return EXIT_OK if accepted else EXIT_UNCONVERGED


# model

def cmd_model(args) -> int:
    check_temperature(args.T)
    name, params, geometry = _load_model(args)
    out = _out_dir(args)

    if args.family == "output":
        vds_grid = GridValidator.parse_grid(args.vds)
        vgs_values = GridValidator.parse_grid(args.vgs)
        family = compact_model_service.output_family(params, geometry, args.T, vgs_values, vds_grid)
        curves = dict(family.curves)
        if args.signed:
            curves = {key: compact_model_service.present_signed(params, c) for key, c in curves.items()}
        preamble = [
            f"polarity={params.polarity.value}",
            f"T_K={format_float(args.T)}",
            f"W_um={format_float(geometry.w_um)}",
            f"L_um={format_float(geometry.l_um)}",
            f"cox_F_cm2={format_float(geometry.c_ox)}",
        ]
        text = reports.dump_output_family_csv(family.v_ds, curves, preamble)
        path = reports.write_text(out / f"{name}_output_T{args.T:g}.csv", text)
        logger.info(f"Wrote output family {path}")
        return EXIT_OK

    vgs_grid = GridValidator.parse_grid(args.vgs)
    for vds in GridValidator.parse_grid(args.vds):
        sweep = compact_model_service.iv_sweep_synthesize(params, geometry, float(vds), args.T,
                                                          vgs_grid, device_id=name)
        path = write_sweep_csv(sweep, out / f"{name}_T{args.T:g}_vds{vds:g}.csv", signed=args.signed)
        logger.info(f"Wrote transfer curve {path}")
    return EXIT_OK


# bench

def cmd_bench(args) -> int:
    config = bench_service.read_bench_config(args.config or settings.bench_config_path)
    library = reference_library.load_reference_library(args.library)
    report = bench_service.run_bench(config, library, max_workers=args.workers)

    out = _out_dir(args)
    reports.write_text(out / "comparison.csv", reports.dump_comparison_csv(report.rows))
    summary = reports.dump_checks_text(report.checks)
    reports.write_text(out / "bench_summary.txt", summary)
    if args.json:
        payload = report.model_dump(mode="json")
        payload["deltas"] = circuit_service.comparison_deltas(report.rows, config.baseline, config.candidate)
        reports.write_text(out / "bench_report.json", reports.dump_json(payload))
    print(summary, end="")
    return EXIT_OK


# physics

def cmd_physics(args) -> int:
    if args.params:
        stacks = read_parameter_file(args.params).stacks
        if args.stack not in stacks:
            raise ParseError(args.params, 0, f"No [stack {args.stack}] section")
        stack = stacks[args.stack]
    else:
        stack = reference_library.default_stack(args.library)
    temps = GridValidator.parse_grid(args.T)
    curve = physics_service.vth_freezeout_curve(stack, temps)

    reports.write_text(_out_dir(args) / "vth_freezeout.csv", reports.dump_vth_curve_csv(curve))
    if args.json:
        reports.write_text(_out_dir(args) / "vth_freezeout.json",
                           reports.dump_json([p.model_dump() for p in curve]))
    return EXIT_OK


# calibrate-library

def cmd_calibrate_library(args) -> int:
    library = reference_library.load_reference_library(args.library)
    out = _out_dir(args)
    try:
        report = fitting_service.calibrate_reference_sets(
            fitting_service.measured_anchor_table(), library, seed=args.seed
        )
    except InfeasibleAnchorsError as e:
        for item in e.unmet:
            print(f"UNMET  {item}")
        if e.best is not None:
            best = library.model_copy(update={"sets": e.best.params, "version": f"{library.version}+best"})
            reference_library.write_reference_library(best, out)
        return EXIT_UNCONVERGED
    calibrated = reference_library.build_library(f"{library.version}+cal", library.geometry, report.params)
    path = reference_library.write_reference_library(calibrated, out)
    print(f"{len(report.outcomes)} anchors met; wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cryomos", description="Cryogenic MOSFET modelling toolkit")
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="Random seed for fits")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--json", action="store_true", help="Also emit structured JSON reports")
    parser.add_argument("--library", default=None, help="Reference library directory")
    parser.add_argument("--workers", type=int, default=settings.MAX_WORKERS, help="Concurrent workers")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="Extract figures of merit from sweep CSV files")
    p.add_argument("paths", nargs="+", help="Sweep files or directories")
    p.add_argument("--ratio", type=float, default=extraction_service.DEFAULT_ON_OFF_RATIO,
                   help="Current ratio for the overdrive figure")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="Calibrate a parameter set against sweeps")
    p.add_argument("config", help="Fit configuration file")
    p.add_argument("--threshold", type=float, default=None, help="Accepted mean relative error")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("model", help="Emit model curves")
    p.add_argument("--params", default=None, help="Parameter file (defaults to the reference library)")
    p.add_argument("--set", default=None, help="Parameter set name")
    p.add_argument("--vgs", default="0:0.9:0.01", help="Gate grid start:stop:step or list")
    p.add_argument("--vds", default="0.05", help="Drain grid start:stop:step or list")
    p.add_argument("--T", type=float, default=77.0, help="Temperature in kelvin")
    p.add_argument("--family", choices=("transfer", "output"), default="transfer")
    p.add_argument("--signed", action="store_true", help="Write PMOS values with terminal signs")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("bench", help="Run the circuit benchmark")
    p.add_argument("--config", default=None, help="Bench scenario file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("physics", help="Emit the freeze-out threshold curve")
    p.add_argument("--params", default=None, help="Parameter file with [stack] sections")
    p.add_argument("--stack", default="default")
    p.add_argument("--T", default="10:298:16", help="Temperature grid")
    p.set_defaults(func=cmd_physics)

    p = sub.add_parser("calibrate-library", help="Recalibrate the reference sets against measured anchors")
    p.set_defaults(func=cmd_calibrate_library)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CryoToolkitError as e:
        logger.error(f"{e.error_code}: {e.message}")
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
