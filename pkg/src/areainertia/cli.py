"""Command-line entry point.

Scenario arguments are JSON files; ``fixture:<name>`` loads a shipped one.
Exit codes: 0 success, 1 configuration error, 2 simulation failure,
3 every estimator failed for every area.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import bench
from .core import Method, ModelError, load_grid, validate
from .dmd import diagnostics_json
from .simkit import SimulationError, write_result_csv

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_ALL_FAILED = 0, 1, 2, 3


def _scenario(arg: str) -> bench.ScenarioConfig:
    if arg.startswith("fixture:"):
        return bench.load_fixture(arg.split(":", 1)[1])
    return bench.load_scenario(arg)


def _apply_common(cfg: bench.ScenarioConfig, args) -> bench.ScenarioConfig:
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _scenario(args.scenario)
    result, _ = bench.simulate_scenario(cfg)
    path = _outdir(args) / f"{cfg.name}_simulation.csv"
    write_result_csv(result, path)
    print(path)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _apply_common(_scenario(args.scenario), args)
    if args.method != "all":
        cfg = cfg.only([Method(args.method)])
    run = bench.run_scenario(cfg)
    out = _outdir(args)
    if args.format == "json":
        path = out / f"{cfg.name}_report.json"
        path.write_text(bench.run_to_json(run))
    else:
        path = out / f"{cfg.name}_report.csv"
        bench.write_report_csv(run, path)
    print(path)
    if Method.DMD in run.estimates:
        diag = out / f"{cfg.name}_dmd_diagnostics.json"
        diag.write_text(diagnostics_json(run.estimates[Method.DMD], cfg.name) + "\n")
    for method, rep in run.reports.items():
        mee = "n/a" if rep.mee_pct is None else f"{rep.mee_pct:.2f}%"
        flag = "" if rep.complete else f"  ({len(rep.failures)} area(s) failed)"
        print(f"{method.value:6s} MEE {mee}{flag}")
    return EXIT_OK if bench.any_estimate(run) else EXIT_ALL_FAILED


def _values(text: str) -> list[str]:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    out = []
    for v in vals:
        # "a..b" expands to an inclusive integer range
        if ".." in v:
            lo, hi = v.split("..")
            out.extend(str(k) for k in range(int(lo), int(hi) + 1))
        else:
            out.append(v)
    return out


def cmd_sweep(args) -> int:
    cfg = _apply_common(_scenario(args.scenario), args)
    try:
        values = _values(args.values)
        result = bench.sweep(cfg, args.param, values)
    except ValueError as exc:
        raise ModelError(str(exc)) from None
    name = result.parameter.replace(".", "_")
    path = _outdir(args) / f"{cfg.name}_sweep_{name}.csv"
    bench.write_sweep_csv(result, path)
    print(path)
    for v, m in zip(result.values, result.mee):
        print(f"{result.parameter}={v}: MEE {'n/a' if m is None else f'{m:.2f}%'}")
    ok = any(bench.any_estimate(r) for r in result.runs)
    return EXIT_OK if ok else EXIT_ALL_FAILED


def cmd_timevary(args) -> int:
    cfg = _apply_common(_scenario(args.scenario), args)
    hours = bench.load_profile(args.profile)
    results = bench.timevarying_study(cfg, hours)
    path = _outdir(args) / f"{cfg.name}_timevary.csv"
    bench.write_timevary_csv(results, path)
    print(path)
    skipped = [h for h in results if h.run is None]
    for h in skipped:
        print(f"hour {h.spec.hour} skipped: {h.error}", file=sys.stderr)
    ok = any(h.run is not None and bench.any_estimate(h.run) for h in results)
    return EXIT_OK if ok else EXIT_ALL_FAILED


def cmd_validate(args) -> int:
    if args.model.startswith("fixture:"):
        model = bench.load_fixture(args.model.split(":", 1)[1]).grid
    else:
        model = load_grid(args.model)
    findings = validate(model)
    for f in findings:
        print(f)
    if any(f.severity == "error" for f in findings):
        return EXIT_CONFIG
    print(f"{model.name or args.model}: ok ({len(model.generators)} generators, {len(model.area_ids)} areas)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="./out", help="output directory (default ./out)")
    common.add_argument("--seed", type=int, default=None, help="noise seed override")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="areainertia", description="Area inertia estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run the grid simulation only")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="simulate and run estimators")
    s.add_argument("scenario")
    s.add_argument("--method", choices=[m.value for m in Method] + ["all"], default="all")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", parents=[common], help="hyperparameter sweep on one dataset")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help=", ".join(bench.SWEEP_PARAMS))
    s.add_argument("--values", required=True, help="comma list; a..b for integer ranges")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("timevary", parents=[common], help="hourly load/commitment study")
    s.add_argument("scenario")
    s.add_argument("--profile", required=True)
    s.set_defaults(func=cmd_timevary)

    s = sub.add_parser("validate", parents=[common], help="check a grid model file")
    s.add_argument("model")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return args.func(args)
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
