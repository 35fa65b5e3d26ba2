"""Measurement-channel emulation: noise, zero-phase low-pass, derivatives, DFT."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .core import AreaDataset, FilterSpec, NoiseSpec, SignalTrace


@dataclass(frozen=True)
class Spectrum:
    """One-sided spectrum scaled by ``dt`` (continuous-transform approximation).

    ``coefficients[k] ~ dt * sum_n x_n exp(-j 2 pi f_k t_n)`` with absolute
    sample times ``t_n = t0 + n dt``.
    """

    frequencies: np.ndarray
    coefficients: np.ndarray
    dt: float
    n: int
    t0: float = 0.0

    @property
    def df(self) -> float:
        return 1.0 / (self.n * self.dt)

    def energy(self) -> float:
        """Signal energy sum |x|^2 dt recovered from the one-sided coefficients."""
        p = np.abs(self.coefficients) ** 2
        w = np.full(p.size, 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * p) * self.df)


def add_noise(trace: SignalTrace, spec: NoiseSpec, rng: np.random.Generator | None = None) -> SignalTrace:
    """Add i.i.d. zero-mean Gaussian noise of std ``spec.sigma`` (trace units)."""
    if spec.sigma == 0:
        return trace
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    return trace.with_values(trace.values + rng.normal(0.0, spec.sigma, len(trace)))


def add_noise_dataset(dataset: AreaDataset, spec: NoiseSpec, nominal_frequency_hz: float = 60.0) -> AreaDataset:
    """Noise on every channel from one seeded stream, in snapshot row order."""
    if spec.sigma == 0:
        return dataset
    rng = np.random.default_rng(spec.seed)
    speed_sigma = spec.sigma / nominal_frequency_hz if spec.frequency_in_hz else spec.sigma

    def noisy(tr, channel, _k):
        sigma = speed_sigma if channel == "speed" else spec.sigma
        return add_noise(tr, NoiseSpec(sigma, spec.seed, spec.frequency_in_hz), rng=rng)

    return dataset.map_traces(noisy)


def butterworth(spec: FilterSpec, dt: float) -> np.ndarray:
    nyquist = 0.5 / dt
    if not spec.cutoff_hz < nyquist:
        raise ValueError(f"cutoff {spec.cutoff_hz} Hz is not below Nyquist {nyquist} Hz")
    return sps.butter(int(spec.order), spec.cutoff_hz, btype="low", fs=1.0 / dt, output="sos")


def lowpass(trace: SignalTrace, spec: FilterSpec) -> SignalTrace:
    """Forward-backward Butterworth filter with odd (point-reflected) edge padding."""
    sos = butterworth(spec, trace.dt)
    padlen = min(3 * (int(spec.order) + 1), len(trace) - 1)
    y = sps.sosfiltfilt(sos, trace.values, padtype="odd", padlen=padlen)
    return trace.with_values(y)


def lowpass_dataset(dataset: AreaDataset, spec: FilterSpec) -> AreaDataset:
    return dataset.map_traces(lambda tr, *_: lowpass(tr, spec))


def finite_diff(trace: SignalTrace) -> SignalTrace:
    """Time derivative: central differences inside, one-sided at the ends."""
    if len(trace) < 3:
        raise ValueError("need at least 3 samples")
    return trace.with_values(np.gradient(trace.values, trace.dt))


def dft(trace: SignalTrace) -> Spectrum:
    n = len(trace)
    if n < 2:
        raise ValueError("need at least 2 samples")
    freqs = np.fft.rfftfreq(n, trace.dt)
    coeffs = np.fft.rfft(trace.values) * trace.dt
    if trace.t0 != 0.0:
        coeffs = coeffs * np.exp(-2j * np.pi * freqs * trace.t0)
    return Spectrum(freqs, coeffs, trace.dt, n, trace.t0)


def idft(spec: Spectrum) -> SignalTrace:
    coeffs = spec.coefficients
    if spec.t0 != 0.0:
        coeffs = coeffs * np.exp(2j * np.pi * spec.frequencies * spec.t0)
    return SignalTrace(np.fft.irfft(coeffs / spec.dt, n=spec.n), spec.dt, spec.t0)
