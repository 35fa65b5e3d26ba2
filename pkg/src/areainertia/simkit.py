"""Classical multi-machine swing-equation simulator.

Each machine is a constant EMF behind its transient reactance; loads are
constant admittances fixed at the solved pre-disturbance operating point and
the network is Kron-reduced onto the machine internal nodes.  Per machine::

    d(delta)/dt = w_s * dw
    2 H S/S_base * d(dw)/dt = P_m - P_e(delta) - D S/S_base * dw

integrated with fixed-step RK4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .core import (
    AreaDataset,
    DisturbanceKind,
    DisturbanceSpec,
    GridModel,
    ModelError,
    SignalTrace,
    check,
)

DEFAULT_RATE_HZ = 60.0
MAX_STEP_S = 1e-3
DEFAULT_FAULT_ADMITTANCE = 1e4
PRE_WINDOW_S = 1.0


class SimulationError(RuntimeError):
    """Raised for unsolvable equilibria and loss of synchronism."""


class UnstableScenario(SimulationError):
    pass


@dataclass(frozen=True)
class OperatingPoint:
    """Solved power flow: bus voltages and generator internal EMFs."""

    bus_voltage: np.ndarray  # complex, bus order of the model
    emf: np.ndarray  # complex, generator order
    p_gen: np.ndarray  # system-base pu
    q_gen: np.ndarray


@dataclass(frozen=True)
class ReducedNetwork:
    """Admittance matrices between machine internal nodes.

    ``fault`` is only present for bus faults.  ``recover_*`` map internal EMFs
    to bus voltages (``V = recover @ E``) for the matching topology.
    """

    pre: np.ndarray
    post: np.ndarray
    fault: np.ndarray | None
    emf_mag: np.ndarray
    delta0: np.ndarray
    gen_index: dict
    operating_point: OperatingPoint
    load_admittance: np.ndarray  # per bus, pre-disturbance
    recover_pre: np.ndarray = field(repr=False, default=None)
    recover_post: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class SimulationResult:
    time: np.ndarray
    gen_ids: tuple
    delta: np.ndarray  # (n_samples, n_gen) rad
    speed_dev: np.ndarray  # (n_samples, n_gen) pu
    gen_pe: np.ndarray  # (n_samples, n_gen) system-base pu
    area_ids: tuple
    area_pe: np.ndarray  # (n_samples, n_area) system-base pu, generator sum
    disturbance: DisturbanceSpec | None
    p_mech: np.ndarray
    delta0: np.ndarray
    internal_step: float

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0])


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


def _bus_admittance(model: GridModel) -> np.ndarray:
    idx = {b: k for k, b in enumerate(model.bus_ids)}
    n = len(idx)
    Y = np.zeros((n, n), dtype=complex)
    for ln in model.lines:
        y = 1.0 / (1j * ln.reactance_pu)
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
    return Y


def _xd_system(model: GridModel) -> np.ndarray:
    base = model.system_base_mva
    return np.array([g.xd_prime_pu * base / g.rating_mva for g in model.generators])


def solve_power_flow(model: GridModel, tol: float = 1e-12) -> OperatingPoint:
    """Newton-type AC power flow.  The first generator's bus is the slack;
    other generator buses hold their voltage set-point; loads are PQ."""
    check(model)
    bus_ids = model.bus_ids
    idx = {b: k for k, b in enumerate(bus_ids)}
    n = len(bus_ids)
    Y = _bus_admittance(model)

    p_load = np.zeros(n)
    q_load = np.zeros(n)
    for ld in model.loads:
        p_load[idx[ld.bus]] += ld.p_pu
        q_load[idx[ld.bus]] += ld.q_pu
    p_gen_bus = np.zeros(n)
    v_set = np.ones(n)
    pv = np.zeros(n, dtype=bool)
    slack = idx[model.generators[0].bus]
    for g in model.generators:
        k = idx[g.bus]
        pv[k] = True
        v_set[k] = g.v_set_pu
        if k != slack:
            p_gen_bus[k] += g.p_mech_pu
    pv[slack] = False
    pq = ~pv
    pq[slack] = False

    ang_idx = np.array([k for k in range(n) if k != slack], dtype=int)
    mag_idx = np.flatnonzero(pq)
    p_spec = p_gen_bus - p_load
    q_spec = -q_load

    def voltages(x):
        theta = np.zeros(n)
        vm = v_set.copy()
        theta[ang_idx] = x[: ang_idx.size]
        vm[mag_idx] = x[ang_idx.size:]
        return vm * np.exp(1j * theta)

    def mismatch(x):
        V = voltages(x)
        S = V * np.conj(Y @ V)
        return np.concatenate([S.real[ang_idx] - p_spec[ang_idx], S.imag[mag_idx] - q_spec[mag_idx]])

    x0 = np.concatenate([np.zeros(ang_idx.size), np.ones(mag_idx.size)])
    sol = optimize.root(mismatch, x0, method="hybr", tol=tol)
    if not sol.success or np.max(np.abs(mismatch(sol.x)), initial=0.0) > 1e-8:
        raise SimulationError(f"power flow did not converge: {sol.message}")
    V = voltages(sol.x)
    S_bus = V * np.conj(Y @ V)

    # generator injections; buses with several machines share P by set-point
    # and Q by rating
    gens = model.generators
    p_gen = np.array([g.p_mech_pu for g in gens], dtype=float)
    q_gen = np.zeros(len(gens))
    for k in set(idx[g.bus] for g in gens):
        members = [m for m, g in enumerate(gens) if idx[g.bus] == k]
        p_total = S_bus[k].real + p_load[k]
        q_total = S_bus[k].imag + q_load[k]
        if k == slack:
            others = sum(p_gen[m] for m in members[1:])
            p_gen[members[0]] = p_total - others
        ratings = np.array([gens[m].rating_mva for m in members])
        q_gen[members] = q_total * ratings / ratings.sum()

    xd = _xd_system(model)
    V_gen = np.array([V[idx[g.bus]] for g in gens])
    current = np.conj((p_gen + 1j * q_gen) / V_gen)
    emf = V_gen + 1j * xd * current
    return OperatingPoint(V, emf, p_gen, q_gen)


def _kron(model: GridModel, Ybb: np.ndarray):
    """Reduce [[Ygg, Ygb], [Ybg, Ybb]] onto the internal nodes."""
    idx = {b: k for k, b in enumerate(model.bus_ids)}
    ng = len(model.generators)
    n = len(idx)
    y_int = 1.0 / (1j * _xd_system(model))
    Ygg = np.diag(y_int)
    Ygb = np.zeros((ng, n), dtype=complex)
    Ybb = Ybb.copy()
    for m, g in enumerate(model.generators):
        k = idx[g.bus]
        Ygb[m, k] = -y_int[m]
        Ybb[k, k] += y_int[m]
    cond = np.linalg.cond(Ybb)
    if not np.isfinite(cond) or cond > 1e14:
        raise ModelError("singular bus admittance block (islanded bus?)")
    recover = -np.linalg.solve(Ybb, Ygb.T)
    Yred = Ygg + Ygb @ recover
    return Yred, recover


def kron_reduce(
    model: GridModel,
    disturbance: DisturbanceSpec | None = None,
    op: OperatingPoint | None = None,
) -> ReducedNetwork:
    """Pre-, fault-on and post-disturbance reduced admittance matrices."""
    if op is None:
        op = solve_power_flow(model)
    idx = {b: k for k, b in enumerate(model.bus_ids)}
    n = len(idx)
    Y = _bus_admittance(model)
    vm2 = np.abs(op.bus_voltage) ** 2
    y_load = np.zeros(n, dtype=complex)
    for ld in model.loads:
        k = idx[ld.bus]
        y_load[k] += (ld.p_pu - 1j * ld.q_pu) / vm2[k]
    Y_pre = Y + np.diag(y_load)

    Y_post = Y_pre
    Y_fault = None
    if disturbance is not None:
        if disturbance.bus not in idx:
            raise ModelError(f"disturbance at unknown bus {disturbance.bus}")
        k = idx[disturbance.bus]
        if disturbance.kind is DisturbanceKind.LOAD_STEP:
            Y_post = Y_pre.copy()
            Y_post[k, k] += disturbance.magnitude / vm2[k]
        else:
            # lossless bolted fault: a large shunt susceptance
            Y_fault = Y_pre.copy()
            Y_fault[k, k] += -1j * disturbance.magnitude

    pre, rec_pre = _kron(model, Y_pre)
    post, rec_post = (pre, rec_pre) if Y_post is Y_pre else _kron(model, Y_post)
    fault = None if Y_fault is None else _kron(model, Y_fault)[0]
    return ReducedNetwork(
        pre=pre,
        post=post,
        fault=fault,
        emf_mag=np.abs(op.emf),
        delta0=np.angle(op.emf),
        gen_index={g.id: m for m, g in enumerate(model.generators)},
        operating_point=op,
        load_admittance=y_load,
        recover_pre=rec_pre,
        recover_post=rec_post,
    )


def electrical_power(Y: np.ndarray, emf_mag: np.ndarray, delta: np.ndarray) -> np.ndarray:
    E = emf_mag * np.exp(1j * delta)
    return (E * np.conj(Y @ E)).real


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


def internal_step(measurement_rate_hz: float, max_step: float = MAX_STEP_S) -> tuple[float, int]:
    """Largest step <= ``max_step`` that divides the measurement interval."""
    dt_meas = 1.0 / measurement_rate_hz
    k = max(1, math.ceil(dt_meas / max_step - 1e-9))
    return dt_meas / k, k


def simulate(
    model: GridModel,
    disturbance: DisturbanceSpec | None,
    duration_s: float = 10.0,
    measurement_rate_hz: float = DEFAULT_RATE_HZ,
    max_step: float = MAX_STEP_S,
) -> SimulationResult:
    """Integrate the classical model and sample it at the measurement rate.

    Event times are snapped to the internal step grid.  A sample taken at an
    event instant reports electrical power of the post-event network.
    """
    if disturbance is not None:
        if disturbance.t_start < PRE_WINDOW_S - 1e-12:
            raise ValueError("disturbance must start after a 1 s pre-disturbance window")
        if duration_s < disturbance.end_time + 1.0 - 1e-12:
            raise ValueError("duration must extend at least 1 s past the last event")
    net = kron_reduce(model, disturbance)
    gens = model.generators
    base = model.system_base_mva
    two_h = np.array([2.0 * g.inertia_s * g.rating_mva / base for g in gens])
    damp = np.array([g.damping_pu * g.rating_mva / base for g in gens])
    w_s = 2.0 * math.pi * model.nominal_frequency_hz
    Emag = net.emf_mag
    delta0 = net.delta0
    # exact equilibrium of the reduced pre-disturbance network
    p_mech = electrical_power(net.pre, Emag, delta0)

    h, per_sample = internal_step(measurement_rate_hz, max_step)
    n_samples = int(round(duration_s * measurement_rate_hz)) + 1
    n_steps = (n_samples - 1) * per_sample

    # step index -> matrix in force from that step on
    changes = []
    if disturbance is not None:
        k_on = int(round(disturbance.t_start / h))
        if disturbance.kind is DisturbanceKind.BUS_FAULT:
            k_off = max(int(round(disturbance.t_clear / h)), k_on + 1)
            changes = [(k_on, net.fault), (k_off, net.post)]
        else:
            changes = [(k_on, net.post)]

    def topology(step: int) -> np.ndarray:
        Y = net.pre
        for k, Yk in changes:
            if step >= k:
                Y = Yk
        return Y

    def rhs(delta, dw, Y):
        pe = electrical_power(Y, Emag, delta)
        return w_s * dw, (p_mech - pe - damp * dw) / two_h

    ng = len(gens)
    delta_out = np.empty((n_samples, ng))
    dw_out = np.empty((n_samples, ng))
    pe_out = np.empty((n_samples, ng))
    delta = delta0.copy()
    dw = np.zeros(ng)

    for step in range(n_steps + 1):
        Y = topology(step)
        if step % per_sample == 0:
            s = step // per_sample
            delta_out[s] = delta
            dw_out[s] = dw
            pe_out[s] = electrical_power(Y, Emag, delta)
            if np.ptp(delta) > math.pi:
                raise UnstableScenario(
                    f"loss of synchronism at t={step * h:.3f} s (angle spread {np.ptp(delta):.2f} rad)"
                )
        if step == n_steps:
            break
        k1d, k1w = rhs(delta, dw, Y)
        k2d, k2w = rhs(delta + 0.5 * h * k1d, dw + 0.5 * h * k1w, Y)
        k3d, k3w = rhs(delta + 0.5 * h * k2d, dw + 0.5 * h * k2w, Y)
        k4d, k4w = rhs(delta + h * k3d, dw + h * k3w, Y)
        delta = delta + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
        dw = dw + h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if not np.all(np.isfinite(dw)):
            raise UnstableScenario("non-finite state during integration")

    area_ids = tuple(model.area_ids)
    member = np.zeros((ng, len(area_ids)))
    for m, g in enumerate(gens):
        member[m, area_ids.index(model.areas[g.bus])] = 1.0
    time = np.arange(n_samples) / measurement_rate_hz
    return SimulationResult(
        time=time,
        gen_ids=tuple(g.id for g in gens),
        delta=delta_out,
        speed_dev=dw_out,
        gen_pe=pe_out,
        area_ids=area_ids,
        area_pe=pe_out @ member,
        disturbance=disturbance,
        p_mech=p_mech,
        delta0=delta0,
        internal_step=h,
    )


# ---------------------------------------------------------------------------
# area signals
# ---------------------------------------------------------------------------


def coi_weights(model: GridModel) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per area: generator indices and rating weights normalised to one."""
    out = {}
    for area in model.area_ids:
        members = [m for m, g in enumerate(model.generators) if model.areas[g.bus] == area]
        if not members:
            continue
        s = np.array([model.generators[m].rating_mva for m in members])
        out[area] = (np.array(members), s / s.sum())
    return out


def compute_area_coi(result: SimulationResult, model: GridModel) -> dict[str, SignalTrace | None]:
    """Rating-weighted COI speed deviation (pu) per area; None for empty areas."""
    if tuple(g.id for g in model.generators) != result.gen_ids:
        raise ValueError("result was not produced by this model")
    weights = coi_weights(model)
    dt = result.dt
    out: dict[str, SignalTrace | None] = {}
    for area in model.area_ids:
        if area not in weights:
            out[area] = None
            continue
        members, w = weights[area]
        out[area] = SignalTrace(result.speed_dev[:, members] @ w, dt, float(result.time[0]))
    return out


def extract_area_dataset(result: SimulationResult, model: GridModel) -> AreaDataset:
    """Deviations from the pre-disturbance mean for every area with machines.

    Power deviation is the change of the area's summed generator electrical
    output (positive = more power delivered by the area's machines).
    """
    dist = result.disturbance
    t_event = dist.t_start if dist is not None else float(result.time[-1]) + result.dt
    pre = result.time < t_event - 1e-9
    if result.time[pre].size == 0 or t_event - result.time[0] < PRE_WINDOW_S - 1e-9:
        raise ValueError("simulation lacks a 1 s pre-disturbance steady window")
    coi = compute_area_coi(result, model)
    areas, speed, power = [], [], []
    for a_idx, area in enumerate(result.area_ids):
        tr = coi[area]
        if tr is None:
            continue
        w = tr.values - tr.values[pre].mean()
        p = result.area_pe[:, a_idx]
        areas.append(area)
        speed.append(tr.with_values(w))
        power.append(tr.with_values(p - p[pre].mean()))
    return AreaDataset(
        areas,
        speed,
        power,
        disturbance_time=None if dist is None else dist.t_start,
        clear_time=None if dist is None else dist.end_time,
    )


def write_result_csv(result: SimulationResult, path) -> None:
    """CSV with ``t``, per-generator speed deviation and angle, per-area power."""
    header = ["t"]
    header += [f"gen_{g}_domega" for g in result.gen_ids]
    header += [f"gen_{g}_delta" for g in result.gen_ids]
    header += [f"area_{a}_Pe" for a in result.area_ids]
    data = np.column_stack([result.time, result.speed_dev, result.delta, result.area_pe])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.12g}" for v in row])
