"""Shared domain types, grid model loading and ground-truth inertia.

All power quantities are per unit on the system MVA base unless a field says
otherwise.  Machine inertia, damping and transient reactance are given on the
machine's own rating and converted where they are aggregated.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

SCHEMA_VERSION = 1

# typical machine ranges used for validation warnings
INERTIA_RANGE_S = (1.75, 10.0)
DAMPING_RANGE_PU = (1e-2, 1e-1)


class ModelError(ValueError):
    """Structural problem with a grid model or scenario file."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalTrace:
    """Uniformly sampled real signal starting at absolute time ``t0``."""

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("trace values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise ValueError("trace values must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def with_values(self, values) -> "SignalTrace":
        return SignalTrace(values, self.dt, self.t0)


@dataclass(frozen=True)
class AreaDataset:
    """Per-area COI speed and power deviations on a shared time grid.

    ``disturbance_time`` and ``clear_time`` are scenario metadata (seconds,
    absolute); estimators that anchor on the disturbance read them from here
    instead of detecting the event.
    """

    area_ids: tuple
    speed_dev: tuple
    power_dev: tuple
    disturbance_time: float | None = None
    clear_time: float | None = None

    def __post_init__(self):
        area_ids = tuple(str(a) for a in self.area_ids)
        speed = tuple(self.speed_dev)
        power = tuple(self.power_dev)
        if not area_ids:
            raise ValueError("dataset needs at least one area")
        if len(speed) != len(area_ids) or len(power) != len(area_ids):
            raise ValueError("one speed and one power trace per area required")
        ref = speed[0]
        for tr in speed + power:
            if len(tr) != len(ref) or tr.dt != ref.dt or tr.t0 != ref.t0:
                raise ValueError("all traces must share dt, t0 and length")
        n_a = len(area_ids)
        if len(ref) < 2 * (2 * n_a) + 2:
            raise ValueError(
                f"need at least {4 * n_a + 2} samples for {n_a} areas, got {len(ref)}"
            )
        object.__setattr__(self, "area_ids", area_ids)
        object.__setattr__(self, "speed_dev", speed)
        object.__setattr__(self, "power_dev", power)

    @property
    def n_areas(self) -> int:
        return len(self.area_ids)

    @property
    def M(self) -> int:
        return len(self.speed_dev[0])

    @property
    def dt(self) -> float:
        return self.speed_dev[0].dt

    @property
    def t0(self) -> float:
        return self.speed_dev[0].t0

    @property
    def times(self) -> np.ndarray:
        return self.speed_dev[0].times

    def area_index(self, area) -> int:
        return self.area_ids.index(str(area))

    def map_traces(self, fn) -> "AreaDataset":
        """Apply ``fn(trace, channel, k)`` to every trace, returning a new dataset.

        ``channel`` is ``"speed"`` or ``"power"``; ``k`` is a running index over
        all ``2 * n_areas`` traces in snapshot order.
        """
        n_a = self.n_areas
        speed = tuple(fn(tr, "speed", k) for k, tr in enumerate(self.speed_dev))
        power = tuple(fn(tr, "power", n_a + k) for k, tr in enumerate(self.power_dev))
        return AreaDataset(
            self.area_ids, speed, power, self.disturbance_time, self.clear_time
        )

    def window(self, start: int, stop: int | None = None) -> "AreaDataset":
        """Sub-dataset of samples ``[start, stop)``; t0 shifts accordingly."""

        def cut(tr, *_):
            return SignalTrace(tr.values[start:stop], tr.dt, tr.t0 + start * tr.dt)

        return self.map_traces(cut)


# ---------------------------------------------------------------------------
# grid model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bus:
    id: str
    base_kv: float = 1.0


@dataclass(frozen=True)
class Generator:
    """Classical machine.  ``inertia_s``, ``damping_pu`` and ``xd_prime_pu``
    are on the machine rating; ``p_mech_pu`` and ``v_set_pu`` on the system base."""

    id: str
    bus: str
    rating_mva: float
    inertia_s: float
    damping_pu: float
    xd_prime_pu: float
    p_mech_pu: float
    v_set_pu: float = 1.0


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    reactance_pu: float


@dataclass(frozen=True)
class Load:
    bus: str
    p_pu: float
    q_pu: float = 0.0


@dataclass(frozen=True)
class GridModel:
    buses: tuple
    generators: tuple
    lines: tuple
    loads: tuple
    areas: Mapping[str, str]
    system_base_mva: float = 100.0
    nominal_frequency_hz: float = 60.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "loads", tuple(self.loads))
        areas = {str(k): str(v) for k, v in dict(self.areas).items()}
        object.__setattr__(self, "areas", _FrozenDict(areas))

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    @property
    def area_ids(self) -> list[str]:
        """Area labels in first-appearance order over the bus list."""
        seen: dict[str, None] = {}
        for b in self.buses:
            if b.id in self.areas:
                seen.setdefault(self.areas[b.id], None)
        for a in self.areas.values():
            seen.setdefault(a, None)
        return list(seen)

    def generator_area(self, gen: Generator) -> str:
        return self.areas[gen.bus]

    def generators_in(self, area: str) -> list[Generator]:
        return [g for g in self.generators if self.areas.get(g.bus) == area]


class _FrozenDict(dict):
    """dict that refuses mutation, so GridModel stays shareable."""

    def _readonly(self, *args, **kwargs):
        raise TypeError("GridModel.areas is read-only")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly

    def __hash__(self):
        return hash(tuple(sorted(self.items())))


# ---------------------------------------------------------------------------
# scenario pieces
# ---------------------------------------------------------------------------


class DisturbanceKind(str, Enum):
    LOAD_STEP = "LoadStep"
    BUS_FAULT = "BusFault"


@dataclass(frozen=True)
class DisturbanceSpec:
    """Load step (``magnitude`` = pu power change) or bolted bus fault
    (``magnitude`` = shunt admittance in pu, applied until ``t_clear``)."""

    kind: DisturbanceKind
    bus: str
    magnitude: float
    t_start: float = 1.0
    t_clear: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        object.__setattr__(self, "bus", str(self.bus))
        if self.magnitude == 0:
            raise ValueError("disturbance magnitude must be non-zero")
        if self.kind is DisturbanceKind.BUS_FAULT:
            if self.t_clear is None or not self.t_clear > self.t_start:
                raise ValueError("BusFault needs t_clear > t_start")

    @property
    def end_time(self) -> float:
        """Last topology change (clear time for faults, start for steps)."""
        return self.t_clear if self.t_clear is not None else self.t_start


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian measurement noise.

    ``sigma`` is in pu for power channels.  For the speed channel it is read as
    a PMU frequency error in Hz when ``frequency_in_hz`` is set, and converted
    to pu of the nominal frequency; otherwise it is applied in pu directly.
    """

    sigma: float
    seed: int = 0
    frequency_in_hz: bool = True

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = 5.0
    order: int = 2

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise ValueError("cutoff must be positive")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("filter order must be a positive integer")


# ---------------------------------------------------------------------------
# estimates and reports
# ---------------------------------------------------------------------------


class Method(str, Enum):
    SYSID = "sysid"
    DMD = "dmd"
    OSC = "osc"


@dataclass(frozen=True)
class AreaResult:
    """Per-area outcome.  ``H`` is None when the method failed for the area."""

    H: float | None
    D: float | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.H is not None


@dataclass(frozen=True)
class InertiaEstimate:
    method: Method
    areas: Mapping[str, AreaResult]
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        for area, res in self.areas.items():
            if res.H is not None and not res.H > 0:
                raise ValueError(f"non-positive inertia reported as valid for {area}")

    @classmethod
    def build(cls, method, results: Mapping[str, AreaResult], diagnostics=None):
        """Build an estimate, turning non-positive H into per-area failures."""
        clean = {}
        for area, res in results.items():
            if res.H is not None and not (np.isfinite(res.H) and res.H > 0):
                res = AreaResult(None, res.D, res.failure or f"non-positive H ({res.H:.4g})")
            clean[area] = res
        return cls(method, clean, diagnostics or {})

    def H(self, area) -> float | None:
        return self.areas[str(area)].H


@dataclass(frozen=True)
class EstimationReport:
    method: Method
    scenario: str
    ee_pct: Mapping[str, float]
    mee_pct: float | None
    failures: Mapping[str, str]
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


def area_inertia_details(model: GridModel) -> dict[str, dict[str, float | None]]:
    """Per area: inertia on the system base, on the area's own rating, and
    the summed rating.  Areas without generators get ``None`` values."""
    kinetic = defaultdict(float)
    rating = defaultdict(float)
    for g in model.generators:
        area = model.areas[g.bus]
        kinetic[area] += g.inertia_s * g.rating_mva
        rating[area] += g.rating_mva
    out = {}
    for area in model.area_ids:
        if rating[area] > 0:
            out[area] = {
                "H_system_base": kinetic[area] / model.system_base_mva,
                "H_area_base": kinetic[area] / rating[area],
                "rating_mva": rating[area],
            }
        else:
            out[area] = {"H_system_base": None, "H_area_base": None, "rating_mva": 0.0}
    return out


def true_area_inertia(model: GridModel) -> dict[str, float | None]:
    """Ground-truth area inertia in seconds on the system MVA base."""
    return {a: d["H_system_base"] for a, d in area_inertia_details(model).items()}


def true_area_damping(model: GridModel) -> dict[str, float | None]:
    """Aggregate area damping on the system base (sum of D_m * S_m / S_base)."""
    out: dict[str, float | None] = {a: None for a in model.area_ids}
    for g in model.generators:
        area = model.areas[g.bus]
        out[area] = (out[area] or 0.0) + g.damping_pu * g.rating_mva / model.system_base_mva
    return out


def system_inertia(model: GridModel) -> float:
    return sum(g.inertia_s * g.rating_mva for g in model.generators) / model.system_base_mva


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" or "warning"
    message: str

    def __str__(self):
        return f"{self.severity}: {self.message}"


def validate(model: GridModel) -> list[Finding]:
    """Structural errors first, then range warnings.  Never raises."""
    errors: list[Finding] = []
    warnings: list[Finding] = []
    bus_ids = model.bus_ids
    known = set(bus_ids)

    if len(known) != len(bus_ids):
        errors.append(Finding("error", "duplicate bus ids"))
    gen_ids = [g.id for g in model.generators]
    if len(set(gen_ids)) != len(gen_ids):
        errors.append(Finding("error", "duplicate generator ids"))
    if not model.generators:
        errors.append(Finding("error", "model has no generators"))

    for g in model.generators:
        if g.bus not in known:
            errors.append(Finding("error", f"generator {g.id} at unknown bus {g.bus}"))
        if g.rating_mva <= 0 or g.xd_prime_pu <= 0 or g.inertia_s <= 0:
            errors.append(Finding("error", f"generator {g.id} needs positive rating, H and x'd"))
    for ln in model.lines:
        for b in (ln.from_bus, ln.to_bus):
            if b not in known:
                errors.append(Finding("error", f"line {ln.from_bus}-{ln.to_bus} references unknown bus {b}"))
        if ln.reactance_pu <= 0:
            errors.append(Finding("error", f"line {ln.from_bus}-{ln.to_bus} needs positive reactance"))
    for ld in model.loads:
        if ld.bus not in known:
            errors.append(Finding("error", f"load at unknown bus {ld.bus}"))
    for b in bus_ids:
        if b not in model.areas:
            errors.append(Finding("error", f"bus {b} has no area"))
    for b in model.areas:
        if b not in known:
            errors.append(Finding("error", f"area map names unknown bus {b}"))

    if known and not _connected(bus_ids, model.lines):
        errors.append(Finding("error", "network graph is disconnected"))

    lo, hi = INERTIA_RANGE_S
    dlo, dhi = DAMPING_RANGE_PU
    for g in model.generators:
        if not lo <= g.inertia_s <= hi:
            warnings.append(
                Finding("warning", f"generator {g.id}: inertia outside typical range ({g.inertia_s} s)")
            )
        if not dlo <= g.damping_pu <= dhi:
            warnings.append(
                Finding("warning", f"generator {g.id}: damping outside typical range ({g.damping_pu} pu)")
            )
    return errors + warnings


def _connected(bus_ids, lines) -> bool:
    adj = defaultdict(set)
    for ln in lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    start = bus_ids[0]
    seen = {start}
    stack = [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return seen >= set(bus_ids)


def check(model: GridModel) -> GridModel:
    """Raise ModelError on structural errors; return the model otherwise."""
    errs = [f for f in validate(model) if f.severity == "error"]
    if errs:
        raise ModelError("; ".join(f.message for f in errs))
    return model


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------


def grid_from_dict(d: Mapping[str, Any]) -> GridModel:
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ModelError(f"unsupported schema_version {version!r}")
    try:
        buses = [Bus(str(b["id"]), float(b.get("base_kv", 1.0))) for b in d["buses"]]
        gens = [
            Generator(
                id=str(g["id"]),
                bus=str(g["bus"]),
                rating_mva=float(g["rating_mva"]),
                inertia_s=float(g["H"]),
                damping_pu=float(g.get("D", 0.0)),
                xd_prime_pu=float(g["xd_prime"]),
                p_mech_pu=float(g.get("P", 0.0)),
                v_set_pu=float(g.get("v_set", 1.0)),
            )
            for g in d["generators"]
        ]
        lines = [Line(str(l["from"]), str(l["to"]), float(l["x"])) for l in d.get("lines", [])]
        loads = [Load(str(l["bus"]), float(l["P"]), float(l.get("Q", 0.0))) for l in d.get("loads", [])]
        areas = {str(k): str(v) for k, v in d["areas"].items()}
    except KeyError as exc:
        raise ModelError(f"missing key {exc.args[0]!r} in grid model") from None
    return GridModel(
        buses=buses,
        generators=gens,
        lines=lines,
        loads=loads,
        areas=areas,
        system_base_mva=float(d.get("system_base_mva", 100.0)),
        nominal_frequency_hz=float(d.get("nominal_frequency_hz", 60.0)),
        name=str(d.get("name", "")),
    )


def grid_to_dict(model: GridModel) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": model.name,
        "system_base_mva": model.system_base_mva,
        "nominal_frequency_hz": model.nominal_frequency_hz,
        "buses": [{"id": b.id, "base_kv": b.base_kv} for b in model.buses],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "rating_mva": g.rating_mva,
                "H": g.inertia_s,
                "D": g.damping_pu,
                "xd_prime": g.xd_prime_pu,
                "P": g.p_mech_pu,
                "v_set": g.v_set_pu,
            }
            for g in model.generators
        ],
        "lines": [{"from": l.from_bus, "to": l.to_bus, "x": l.reactance_pu} for l in model.lines],
        "loads": [{"bus": l.bus, "P": l.p_pu, "Q": l.q_pu} for l in model.loads],
        "areas": dict(model.areas),
    }


def disturbance_from_dict(d: Mapping[str, Any] | None) -> DisturbanceSpec | None:
    if not d:
        return None
    try:
        return DisturbanceSpec(
            kind=DisturbanceKind(d["kind"]),
            bus=str(d["bus"]),
            magnitude=float(d["magnitude"]),
            t_start=float(d.get("t_start", 1.0)),
            t_clear=None if d.get("t_clear") is None else float(d["t_clear"]),
        )
    except (KeyError, ValueError) as exc:
        raise ModelError(f"bad disturbance: {exc}") from None


def disturbance_to_dict(dist: DisturbanceSpec | None) -> dict | None:
    if dist is None:
        return None
    return {
        "kind": dist.kind.value,
        "bus": dist.bus,
        "magnitude": dist.magnitude,
        "t_start": dist.t_start,
        "t_clear": dist.t_clear,
    }


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read {path}: {exc}") from None


def load_grid(path) -> GridModel:
    return grid_from_dict(load_json(path))


def with_changes(model: GridModel, **changes) -> GridModel:
    """GridModel with fields replaced (models are immutable)."""
    kw = dict(
        buses=model.buses,
        generators=model.generators,
        lines=model.lines,
        loads=model.loads,
        areas=dict(model.areas),
        system_base_mva=model.system_base_mva,
        nominal_frequency_hz=model.nominal_frequency_hz,
        name=model.name,
    )
    kw.update(changes)
    return GridModel(**kw)

