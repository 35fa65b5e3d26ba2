"""Inertia and damping from an exact dynamic mode decomposition.

The speed and power deviations of all areas are stacked as snapshots
(speeds first, then powers), an exact DMD gives continuous eigenvalues and
modes, and amplitudes are taken at a chosen start sample.  Per area, every
mode of a linear swing equation obeys

    (2H lambda_k + D) phi_k^w b_k + phi_k^P b_k = 0,

so summing over modes gives one complex equation: real and imaginary parts
form a 2x2 real system in (2H, D).

The plain sum over a conjugate-symmetric mode set is real, which would leave
the imaginary row empty.  The sums here therefore run over the analytic half
of the spectrum: modes with positive frequency count once, real modes count
one half, negative-frequency modes are skipped.  For exact modal data each
mode balances on its own, so the result is unchanged by this choice.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import AreaDataset, AreaResult, InertiaEstimate, Method

ZERO_EIG = 1e-12


class DmdWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DmdConfig:
    rank: int | None = None
    start_index: int = 14
    # "clear": count start_index from the first sample at or after fault
    # clearing; "inception": from the disturbance time
    anchor: str = "clear"
    d_bounds: tuple = (0.0, 1.0)
    # "record": operator fitted on every snapshot; "from_start": only on the
    # snapshots from the amplitude sample onwards
    fit_window: str = "record"

    def __post_init__(self):
        if self.fit_window not in ("record", "from_start"):
            raise ValueError(f"unknown fit window {self.fit_window!r}")
        if self.start_index < 0:
            raise ValueError("start_index must be >= 0")
        if self.anchor not in ("clear", "inception"):
            raise ValueError(f"unknown anchor {self.anchor!r}")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")


@dataclass
class DmdModel:
    eigenvalues: np.ndarray  # continuous, 1/s
    modes: np.ndarray  # rows: speeds then powers
    dt: float
    discrete_eigenvalues: np.ndarray
    singular_values: np.ndarray
    amplitudes: np.ndarray | None = None
    start_index: int | None = None
    warnings: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def n_areas(self) -> int:
        return self.modes.shape[0] // 2

    @property
    def speed_modes(self) -> np.ndarray:
        return self.modes[: self.n_areas]

    @property
    def power_modes(self) -> np.ndarray:
        return self.modes[self.n_areas:]


def build_snapshots(dataset: AreaDataset) -> np.ndarray:
    """2N_a x M snapshot matrix: all area speeds, then all area powers."""
    rows = [tr.values for tr in dataset.speed_dev] + [tr.values for tr in dataset.power_dev]
    return np.vstack(rows)


def fit(X: np.ndarray, dt: float, rank: int | None = None) -> DmdModel:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("need a 2-D snapshot matrix with at least two columns")
    X1, X2 = X[:, :-1], X[:, 1:]
    U, s, Vh = np.linalg.svd(X1, full_matrices=False)
    if s[0] == 0:
        raise ValueError("snapshot matrix is identically zero")
    numerical = int(np.sum(s > s[0] * max(X1.shape) * np.finfo(float).eps))
    r = numerical if rank is None else min(rank, numerical)
    if X.shape[1] < r + 1:
        raise ValueError(f"{X.shape[1]} snapshots cannot support rank {r}")
    U, s, V = U[:, :r], s[:r], Vh[:r].conj().T
    B = X2 @ V / s
    Atilde = U.conj().T @ B
    mu, W = np.linalg.eig(Atilde)
    Phi = B @ W

    notes = []
    keep = np.abs(mu) >= ZERO_EIG
    if not keep.all():
        msg = f"log of zero: dropped {int((~keep).sum())} mode(s)"
        warnings.warn(msg, DmdWarning, stacklevel=2)
        notes.append(msg)
        mu, Phi = mu[keep], Phi[:, keep]
    neg = (np.abs(mu.imag) <= 1e-12 * np.abs(mu)) & (mu.real < 0)
    if neg.any():
        msg = f"{int(neg.sum())} eigenvalue(s) on the negative real axis; principal log is aliased"
        warnings.warn(msg, DmdWarning, stacklevel=2)
        notes.append(msg)
        # keep them real so the principal log lands at +j pi/dt consistently
        mu = np.where(neg, mu.real + 0j, mu)
    lam = np.log(mu.astype(complex)) / dt
    return DmdModel(lam, Phi, dt, mu, s, warnings=notes)


def amplitudes(model: DmdModel, X: np.ndarray, start_index: int) -> np.ndarray:
    """Least-squares amplitudes of snapshot ``start_index`` (clock t=0 there)."""
    if not 0 <= start_index < X.shape[1]:
        raise ValueError(f"start index {start_index} outside 0..{X.shape[1] - 1}")
    cond = np.linalg.cond(model.modes)
    if not cond < 1e12:
        msg = f"mode matrix ill-conditioned (cond={cond:.3g}); minimum-norm amplitudes"
        warnings.warn(msg, DmdWarning, stacklevel=2)
        model.warnings.append(msg)
    b = np.linalg.lstsq(model.modes, X[:, start_index].astype(complex), rcond=None)[0]
    model.amplitudes = b
    model.start_index = start_index
    return b


def reconstruct(model: DmdModel, times) -> np.ndarray:
    """Real reconstruction at times measured from the amplitude start sample."""
    if model.amplitudes is None:
        raise ValueError("amplitudes not computed")
    t = np.atleast_1d(np.asarray(times, dtype=float))
    Z = model.modes @ (model.amplitudes[:, None] * np.exp(np.outer(model.eigenvalues, t)))
    scale = max(np.abs(Z.real).max(), np.finfo(float).tiny)
    if np.abs(Z.imag).max() > 1e-9 * scale:
        msg = f"reconstruction imaginary residue {np.abs(Z.imag).max() / scale:.2e} (relative)"
        if msg not in model.warnings:
            model.warnings.append(msg)
    return Z.real


def half_weights(eigenvalues: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """1 for positive-frequency modes, 1/2 for real ones, 0 otherwise."""
    im = eigenvalues.imag
    scale = tol * np.maximum(np.abs(eigenvalues), 1.0)
    return np.where(im > scale, 1.0, np.where(im < -scale, 0.0, 0.5))


def swing_system(model: DmdModel, area: int):
    """2x2 matrix and right-hand side for the unknowns (2H, D) of one area."""
    if model.amplitudes is None:
        raise ValueError("amplitudes not computed")
    w = half_weights(model.eigenvalues) * model.amplitudes
    pw = model.speed_modes[area]
    pp = model.power_modes[area]
    a = np.sum(w * pw * model.eigenvalues)
    d = np.sum(w * pw)
    p = np.sum(w * pp)
    M = np.array([[a.real, d.real], [a.imag, d.imag]])
    rhs = -np.array([p.real, p.imag])
    return M, rhs


def solve_box(M: np.ndarray, rhs: np.ndarray, d_bounds=(0.0, 1.0)):
    """(2H, D) by least squares with D clamped to ``d_bounds``.

    Returns ``(two_h, damping, unconstrained, clamped)``.
    """
    scale = np.abs(M).max()
    if scale == 0 or abs(np.linalg.det(M)) <= 1e-12 * scale * scale:
        raise np.linalg.LinAlgError("singular swing system: no electromechanical content")
    x = np.linalg.solve(M, rhs)
    two_h, damp = float(x[0]), float(x[1])
    lo, hi = d_bounds
    clamped = not lo <= damp <= hi
    if clamped:
        damp = min(max(damp, lo), hi)
        col = M[:, 0]
        two_h = float(col @ (rhs - M[:, 1] * damp) / (col @ col))
    return two_h, damp, (float(x[0]), float(x[1])), clamped


def start_sample(dataset: AreaDataset, start_index: int, anchor: str = "clear") -> int:
    """Absolute column of the amplitude sample for a relative start index."""
    ref = dataset.clear_time if anchor == "clear" else dataset.disturbance_time
    if ref is None:
        raise ValueError(f"dataset has no {anchor} time; cannot place the start index")
    first = math.ceil((ref - dataset.t0) / dataset.dt - 1e-9)
    return first + start_index


def estimate(dataset: AreaDataset, cfg: DmdConfig | None = None) -> InertiaEstimate:
    cfg = cfg or DmdConfig()
    X = build_snapshots(dataset)
    s_abs = start_sample(dataset, cfg.start_index, cfg.anchor)
    if s_abs >= dataset.M - 1:
        raise ValueError(f"start index {cfg.start_index} lies past the end of the record")
    first = 0 if cfg.fit_window == "record" else s_abs
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DmdWarning)
        model = fit(X[:, first:], dataset.dt, cfg.rank)
        amplitudes(model, X, s_abs)
    Xw = X[:, s_abs:]
    recon = reconstruct(model, np.arange(Xw.shape[1]) * dataset.dt)
    rel_rms = float(np.linalg.norm(recon - Xw) / max(np.linalg.norm(Xw), np.finfo(float).tiny))

    results = {}
    per_area = {}
    for k, area in enumerate(dataset.area_ids):
        M, rhs = swing_system(model, k)
        info = {"condition": float(np.linalg.cond(M)) if np.abs(M).max() > 0 else math.inf}
        per_area[area] = info
        try:
            two_h, damp, raw, clamped = solve_box(M, rhs, cfg.d_bounds)
        except np.linalg.LinAlgError as exc:
            results[area] = AreaResult(None, failure=str(exc))
            continue
        info.update({"H_unconstrained": raw[0] / 2.0, "D_unconstrained": raw[1], "clamped": clamped})
        if not two_h > 0:
            results[area] = AreaResult(None, failure=f"non-physical inertia (2H={two_h:.3g})")
        else:
            results[area] = AreaResult(two_h / 2.0, damp)
    diagnostics = {
        "config": {
            "rank": cfg.rank,
            "start_index": cfg.start_index,
            "anchor": cfg.anchor,
            "fit_window": cfg.fit_window,
        },
        "start_sample": s_abs,
        "rank": model.rank,
        "eigenvalues": [complex(x) for x in model.eigenvalues],
        "singular_values": model.singular_values.tolist(),
        "reconstruction_rel_rms": rel_rms,
        "warnings": list(model.warnings),
        "areas": per_area,
    }
    return InertiaEstimate.build(Method.DMD, results, diagnostics)


def diagnostics_json(estimate: InertiaEstimate, scenario: str = "") -> str:
    """JSON text of a DMD estimate's diagnostics (complex numbers as [re, im])."""

    def enc(obj):
        if isinstance(obj, complex):
            return [obj.real, obj.imag]
        if isinstance(obj, float) and not math.isfinite(obj):
            return str(obj)
        if isinstance(obj, dict):
            return {str(k): enc(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [enc(v) for v in obj]
        return obj

    payload = {"scenario": scenario, "method": estimate.method.value, **enc(estimate.diagnostics)}
    return json.dumps(payload, indent=2, sort_keys=True)
