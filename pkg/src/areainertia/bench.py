"""Scenario runner, error metrics, sweeps and report files.

Ground truth is always the toolkit's own per-area inertia of the synthetic
grid being simulated.  Every CSV starts with a comment line saying so.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import dmd, osc, sysid
from .core import (
    SCHEMA_VERSION,
    AreaDataset,
    AreaResult,
    DisturbanceSpec,
    EstimationReport,
    FilterSpec,
    GridModel,
    InertiaEstimate,
    Method,
    ModelError,
    NoiseSpec,
    check,
    disturbance_from_dict,
    disturbance_to_dict,
    grid_from_dict,
    grid_to_dict,
    load_json,
    true_area_inertia,
    with_changes,
)
from .signal import add_noise_dataset, lowpass_dataset
from .simkit import SimulationError, SimulationResult, extract_area_dataset, simulate

TRUTH_NOTE = "# ground truth: per-area inertia of this toolkit's synthetic grid model (not field data)"
REPORT_COLUMNS = ["scenario", "method", "area", "H_true", "H_est", "D_est", "EE_pct", "status"]

CONFIG_TYPES = {
    Method.SYSID: sysid.SysIdConfig,
    Method.DMD: dmd.DmdConfig,
    Method.OSC: osc.OscillationConfig,
}
ESTIMATORS = {
    Method.SYSID: sysid.estimate,
    Method.DMD: dmd.estimate,
    Method.OSC: osc.estimate,
}
# sweepable hyperparameters: name -> (method, config field, value type)
SWEEP_PARAMS = {
    "sysid.n_poly": (Method.SYSID, "n_poly", int),
    "dmd.start_index": (Method.DMD, "start_index", int),
    "osc.bandwidth_hz": (Method.OSC, "bandwidth_hz", float),
}
SWEEP_ALIASES = {"sysid.N_p": "sysid.n_poly", "osc.bandwidth_B": "osc.bandwidth_hz", "osc.B": "osc.bandwidth_hz"}

FIXTURES = ("single_machine", "two_area", "three_area", "thirteen_area")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    grid: GridModel
    disturbance: DisturbanceSpec
    duration_s: float = 10.0
    measurement_rate_hz: float = 60.0
    noise: NoiseSpec | None = None
    filter: FilterSpec | None = None
    estimators: Mapping[Method, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.estimators:
            raise ModelError("at least one estimator must be enabled")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        if self.noise is None:
            return self
        return replace(self, noise=replace(self.noise, seed=int(seed)))

    def only(self, methods: Sequence[Method]) -> "ScenarioConfig":
        methods = [Method(m) for m in methods]
        missing = [m.value for m in methods if m not in self.estimators]
        if missing:
            raise ModelError(f"estimator(s) not enabled in scenario: {', '.join(missing)}")
        return replace(self, estimators={m: self.estimators[m] for m in methods})


def _estimator_config(method: Method, raw: Mapping[str, Any]):
    kw = {k: v for k, v in raw.items() if k != "enabled"}
    if method is Method.DMD and "d_bounds" in kw:
        kw["d_bounds"] = tuple(kw["d_bounds"])
    try:
        return CONFIG_TYPES[method](**kw)
    except TypeError as exc:
        raise ModelError(f"bad {method.value} settings: {exc}") from None


def scenario_from_dict(d: Mapping[str, Any], name: str | None = None) -> ScenarioConfig:
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ModelError(f"unsupported schema_version {version!r}")
    grid = check(grid_from_dict(d))
    dist = disturbance_from_dict(d.get("disturbance"))
    if dist is None:
        raise ModelError("scenario has no disturbance")
    sim = d.get("simulation") or {}
    noise = d.get("noise")
    noise_spec = None
    if noise and float(noise.get("sigma", 0.0)) > 0:
        noise_spec = NoiseSpec(
            float(noise["sigma"]), int(noise.get("seed", 0)), bool(noise.get("frequency_in_hz", True))
        )
    filt = d.get("filter")
    filt_spec = None
    if filt:
        filt_spec = FilterSpec(float(filt.get("cutoff_hz", 5.0)), int(filt.get("order", 2)))
    raw_est = d.get("estimators") or {m.value: {} for m in Method}
    estimators = {}
    for key, raw in raw_est.items():
        try:
            method = Method(key)
        except ValueError:
            raise ModelError(f"unknown estimator {key!r}") from None
        raw = raw or {}
        if raw.get("enabled", True):
            estimators[method] = _estimator_config(method, raw)
    try:
        return ScenarioConfig(
            name=name or d.get("name") or grid.name or "scenario",
            grid=grid,
            disturbance=dist,
            duration_s=float(sim.get("duration_s", 10.0)),
            measurement_rate_hz=float(sim.get("measurement_rate_hz", 60.0)),
            noise=noise_spec,
            filter=filt_spec,
            estimators=estimators,
        )
    except ValueError as exc:
        raise ModelError(str(exc)) from None


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    d = grid_to_dict(cfg.grid)
    d["name"] = cfg.name
    d["disturbance"] = disturbance_to_dict(cfg.disturbance)
    d["simulation"] = {"duration_s": cfg.duration_s, "measurement_rate_hz": cfg.measurement_rate_hz}
    d["noise"] = None if cfg.noise is None else {
        "sigma": cfg.noise.sigma,
        "seed": cfg.noise.seed,
        "frequency_in_hz": cfg.noise.frequency_in_hz,
    }
    d["filter"] = None if cfg.filter is None else {"cutoff_hz": cfg.filter.cutoff_hz, "order": cfg.filter.order}
    d["estimators"] = {m.value: {"enabled": True, **_config_dict(c)} for m, c in cfg.estimators.items()}
    return d


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(load_json(path), name=None)


def fixture_path(name: str):
    """Path-like handle to a shipped scenario fixture."""
    if name not in FIXTURES:
        raise ModelError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return resources.files("areainertia") / "fixtures" / f"{name}.json"


def load_fixture(name: str) -> ScenarioConfig:
    return scenario_from_dict(json.loads(fixture_path(name).read_text()))


def _config_dict(cfg) -> dict[str, Any]:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(cfg).items()}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def error_metrics(
    truth: Mapping[str, float | None],
    est: InertiaEstimate,
    scenario: str = "",
    hyperparameters: Mapping[str, Any] | None = None,
) -> EstimationReport:
    """Per-area EE (percent) and their maximum; failed areas are listed, not scored."""
    areas = [a for a in est.areas if a in truth and truth[a]]
    if not areas:
        raise ValueError("no area has both a ground truth and an estimate entry")
    ee = {}
    failures = {}
    for a in areas:
        res = est.areas[a]
        if res.ok:
            ee[a] = abs(res.H - truth[a]) / truth[a] * 100.0
        else:
            failures[a] = res.failure or "failed"
    mee = max(ee.values()) if ee else None
    return EstimationReport(est.method, scenario, ee, mee, failures, dict(hyperparameters or {}))


# ---------------------------------------------------------------------------
# running scenarios
# ---------------------------------------------------------------------------


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    simulation: SimulationResult
    raw: AreaDataset
    dataset: AreaDataset
    truth: dict
    estimates: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)


def condition(dataset: AreaDataset, cfg: ScenarioConfig) -> AreaDataset:
    """Noise then zero-phase low-pass, each only if configured."""
    if cfg.noise is not None:
        dataset = add_noise_dataset(dataset, cfg.noise, cfg.grid.nominal_frequency_hz)
    if cfg.filter is not None:
        dataset = lowpass_dataset(dataset, cfg.filter)
    return dataset


def simulate_scenario(cfg: ScenarioConfig) -> tuple[SimulationResult, AreaDataset]:
    result = simulate(cfg.grid, cfg.disturbance, cfg.duration_s, cfg.measurement_rate_hz)
    return result, extract_area_dataset(result, cfg.grid)


def _estimate_all(run: ScenarioRun, label: str | None = None):
    for method, mcfg in run.config.estimators.items():
        try:
            est = ESTIMATORS[method](run.dataset, mcfg)
        except ValueError as exc:
            # configuration-level problem for this method: every area fails
            est = InertiaEstimate.build(
                method, {a: _failed(str(exc)) for a in run.dataset.area_ids}, {"error": str(exc)}
            )
        run.estimates[method] = est
        run.reports[method] = error_metrics(run.truth, est, label or run.config.name, _config_dict(mcfg))


def _failed(reason):
    return AreaResult(None, failure=reason)


def run_scenario(cfg: ScenarioConfig, raw: tuple[SimulationResult, AreaDataset] | None = None) -> ScenarioRun:
    """Simulate (unless ``raw`` is given), condition, and run every enabled estimator."""
    result, dataset = raw if raw is not None else simulate_scenario(cfg)
    run = ScenarioRun(cfg, result, dataset, condition(dataset, cfg), true_area_inertia(cfg.grid))
    _estimate_all(run)
    return run


def any_estimate(run: ScenarioRun) -> bool:
    return any(r.H is not None for est in run.estimates.values() for r in est.areas.values())


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    parameter: str
    values: list
    mee: list  # per value, None if no area produced an estimate
    ee: list  # per value: area -> EE
    runs: list

    def best(self):
        """Value with the smallest MEE (first one on ties)."""
        scored = [(m, i) for i, m in enumerate(self.mee) if m is not None]
        if not scored:
            return None
        return self.values[min(scored)[1]]


def parse_param(name: str):
    name = SWEEP_ALIASES.get(name, name)
    if name not in SWEEP_PARAMS:
        raise ModelError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMS)}")
    return (name, *SWEEP_PARAMS[name])


def sweep(cfg: ScenarioConfig, parameter: str, values: Sequence, raw=None) -> SweepResult:
    """One estimator run per value on a single simulated and conditioned dataset."""
    name, method, attr, kind = parse_param(parameter)
    if method not in cfg.estimators:
        raise ModelError(f"sweep parameter {name} belongs to disabled estimator {method.value}")
    if not values:
        raise ModelError("sweep needs at least one value")
    base = cfg.only([method])
    raw = raw if raw is not None else simulate_scenario(base)
    conditioned = condition(raw[1], base)
    out = SweepResult(name, [], [], [], [])
    for v in values:
        v = kind(v)
        try:
            mcfg = replace(base.estimators[method], **{attr: v})
        except ValueError as exc:
            raise ModelError(f"{name}={v}: {exc}") from None
        run = ScenarioRun(
            replace(base, estimators={method: mcfg}), raw[0], raw[1], conditioned, true_area_inertia(base.grid)
        )
        _estimate_all(run)
        rep = run.reports[method]
        out.values.append(v)
        out.mee.append(rep.mee_pct)
        out.ee.append(dict(rep.ee_pct))
        out.runs.append(run)
    return out


# ---------------------------------------------------------------------------
# time-varying operation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HourSpec:
    hour: int
    load_scale: float = 1.0
    offline: tuple = ()


@dataclass
class HourResult:
    spec: HourSpec
    run: ScenarioRun | None
    error: str | None = None


def load_profile(path) -> list[HourSpec]:
    d = load_json(path)
    entries = d.get("hours", d) if isinstance(d, dict) else d
    out = []
    try:
        for k, e in enumerate(entries):
            offline = tuple(map(str, e.get("offline", ())))
            out.append(HourSpec(int(e.get("hour", k)), float(e.get("load_scale", 1.0)), offline))
    except (AttributeError, TypeError, ValueError) as exc:
        raise ModelError(f"bad profile: {exc}") from None
    return out


def grid_for_hour(grid: GridModel, spec: HourSpec) -> GridModel:
    """Scale loads and dispatch, drop offline machines.

    The output of offline machines is shared among the online ones in
    proportion to rating, so an hour with scale 1 and nothing offline is the
    base case exactly.
    """
    unknown = set(spec.offline) - {g.id for g in grid.generators}
    if unknown:
        raise ModelError(f"unknown generator(s) in profile: {', '.join(sorted(unknown))}")
    online = [g for g in grid.generators if g.id not in spec.offline]
    if not online:
        raise ModelError("no generator left online")
    loads = [replace(l, p_pu=l.p_pu * spec.load_scale, q_pu=l.q_pu * spec.load_scale) for l in grid.loads]
    lost = sum(g.p_mech_pu for g in grid.generators if g.id in spec.offline)
    total_rating = sum(g.rating_mva for g in online)
    gens = [
        replace(g, p_mech_pu=(g.p_mech_pu + lost * g.rating_mva / total_rating) * spec.load_scale)
        for g in online
    ]
    return with_changes(grid, generators=gens, loads=loads)


def timevarying_study(cfg: ScenarioConfig, hours: Sequence[HourSpec]) -> list[HourResult]:
    """One full scenario per hour; unsolvable hours are recorded and skipped."""
    out = []
    for spec in hours:
        try:
            grid = check(grid_for_hour(cfg.grid, spec))
            run = run_scenario(replace(cfg, grid=grid, name=f"{cfg.name}@h{spec.hour}"))
        except (ModelError, SimulationError) as exc:
            out.append(HourResult(spec, None, str(exc)))
            continue
        out.append(HourResult(spec, run))
    return out


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6g}"
    return str(x)


def report_rows(run: ScenarioRun, scenario: str | None = None) -> list[list[str]]:
    rows = []
    for method, est in run.estimates.items():
        rep = run.reports[method]
        for area, res in est.areas.items():
            truth = run.truth.get(area)
            if res.ok:
                status = "ok"
                ee = rep.ee_pct.get(area)
            else:
                status = f"FAIL({res.failure})"
                ee = None
            rows.append([
                scenario or rep.scenario, method.value, area, _fmt(truth), _fmt(res.H) if res.ok else status,
                _fmt(res.D), _fmt(ee) if ee is not None else status, status,
            ])
    return rows


def _write_csv(path, header, rows):
    buf = io.StringIO()
    buf.write(TRUTH_NOTE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def write_report_csv(runs: ScenarioRun | Sequence[ScenarioRun], path=None) -> str:
    runs = [runs] if isinstance(runs, ScenarioRun) else list(runs)
    rows = [r for run in runs for r in report_rows(run)]
    return _write_csv(path, REPORT_COLUMNS, rows)


def write_sweep_csv(result: SweepResult, path=None) -> str:
    rows = []
    for v, run in zip(result.values, result.runs):
        for r in report_rows(run):
            rows.append(r + [result.parameter, _fmt(v)])
    return _write_csv(path, REPORT_COLUMNS + ["param", "value"], rows)


def write_timevary_csv(results: Sequence[HourResult], path=None) -> str:
    rows = []
    for hr in results:
        if hr.run is None:
            blank = [f"h{hr.spec.hour}", "", "", "", "", "", "", f"FAIL({hr.error})"]
            rows.append(blank + [hr.spec.hour, _fmt(hr.spec.load_scale)])
            continue
        for r in report_rows(hr.run):
            rows.append(r + [hr.spec.hour, _fmt(hr.spec.load_scale)])
    return _write_csv(path, REPORT_COLUMNS + ["hour", "load_scale"], rows)


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    return obj


def run_to_json(run: ScenarioRun) -> str:
    payload = {
        "note": TRUTH_NOTE.lstrip("# "),
        "scenario": run.config.name,
        "methods": {},
    }
    for method, est in run.estimates.items():
        rep = run.reports[method]
        payload["methods"][method.value] = {
            "hyperparameters": rep.hyperparameters,
            "MEE_pct": rep.mee_pct,
            "complete": rep.complete,
            "areas": {
                a: {"H_true": run.truth.get(a), "H_est": r.H, "D_est": r.D,
                    "EE_pct": rep.ee_pct.get(a), "failure": r.failure}
                for a, r in est.areas.items()
            },
            "diagnostics": est.diagnostics,
        }
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
