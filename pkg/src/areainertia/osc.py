"""Inertia from the band-limited spectral balance of the swing equation.

In the frequency domain the incremental swing equation reads, bin by bin,

    2H (j 2 pi f) W(f) + D W(f) + P(f) = 0,

with W and P the spectra of the area speed and power deviations.  Summing
over the bins up to the bandwidth B leaves one complex equation; its real and
imaginary parts are solved for H (and D as a by-product).  Frequencies are in
Hz, hence the explicit 2 pi in the derivative factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AreaDataset, AreaResult, InertiaEstimate, Method, SignalTrace
from .signal import dft


@dataclass(frozen=True)
class OscillationConfig:
    bandwidth_hz: float = 2.0
    include_dc: bool = False
    # "record": transform the whole record as given; "post_clear": only the
    # ringdown from the first sample at or after fault clearing
    window: str = "record"

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be positive")
        if self.window not in ("record", "post_clear"):
            raise ValueError(f"unknown window {self.window!r}")


@dataclass(frozen=True)
class BandSums:
    speed: complex
    speed_rate: complex
    power: complex
    n_bins: int


def band_sums(speed: SignalTrace, power: SignalTrace, cfg: OscillationConfig) -> BandSums:
    if len(speed) != len(power) or speed.dt != power.dt:
        raise ValueError("speed and power traces must share length and sampling")
    nyquist = 0.5 / speed.dt
    if cfg.bandwidth_hz > nyquist:
        raise ValueError(f"bandwidth {cfg.bandwidth_hz} Hz exceeds Nyquist {nyquist} Hz")
    W = dft(speed)
    P = dft(power)
    if W.df > cfg.bandwidth_hz / 5.0 + 1e-12:
        raise ValueError(
            f"record too short: bin spacing {W.df:.3g} Hz leaves fewer than 5 bins below {cfg.bandwidth_hz} Hz"
        )
    f = W.frequencies
    band = f <= cfg.bandwidth_hz + 1e-9 * W.df
    if not cfg.include_dc:
        band &= f > 0
    w = W.coefficients[band]
    return BandSums(
        speed=complex(w.sum()),
        speed_rate=complex(np.sum(2j * np.pi * f[band] * w)),
        power=complex(P.coefficients[band].sum()),
        n_bins=int(band.sum()),
    )


def solve(sums: BandSums) -> tuple[float, float]:
    """(H, D) from the real and imaginary parts of the summed balance."""
    W, V, P = sums.speed, sums.speed_rate, sums.power
    num = W.real * P.imag - P.real * W.imag
    den = V.real * W.imag - W.real * V.imag
    scale = max(abs(W) * abs(P), abs(W) * abs(V))
    if scale == 0 or abs(den) < 1e-12 * scale:
        raise ZeroDivisionError("no resolvable oscillation")
    H = 0.5 * num / den
    D = (-P.imag - 2.0 * H * V.imag) / W.imag if W.imag != 0 else (-P.real - 2.0 * H * V.real) / W.real
    return H, D


def estimate(dataset: AreaDataset, cfg: OscillationConfig | None = None) -> InertiaEstimate:
    cfg = cfg or OscillationConfig()
    if cfg.window == "post_clear":
        if dataset.clear_time is None:
            raise ValueError("dataset has no clear time for a post-clear window")
        dataset = dataset.window(math.ceil((dataset.clear_time - dataset.t0) / dataset.dt - 1e-9))
    results = {}
    per_area = {}
    for area, speed, power in zip(dataset.area_ids, dataset.speed_dev, dataset.power_dev):
        sums = band_sums(speed, power, cfg)
        per_area[area] = {"bins": sums.n_bins}
        try:
            H, D = solve(sums)
        except ZeroDivisionError as exc:
            results[area] = AreaResult(None, failure=str(exc))
            continue
        per_area[area]["D"] = D
        if not (math.isfinite(H) and H > 0):
            results[area] = AreaResult(None, failure=f"non-physical inertia ({H:.3g})")
        else:
            results[area] = AreaResult(H, D)
    config = {"bandwidth_hz": cfg.bandwidth_hz, "include_dc": cfg.include_dc, "window": cfg.window}
    diagnostics = {"config": config, "areas": per_area}
    return InertiaEstimate.build(Method.OSC, results, diagnostics)
