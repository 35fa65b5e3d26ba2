import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from areainertia import osc
from areainertia.core import SignalTrace
from areainertia.osc import BandSums, OscillationConfig

from conftest import make_dataset

DT = 1 / 60
N = 600


def on_bin_pair(H, D, k=9, amp=0.01, phase=0.3, n=N, dt=DT):
    """Undamped oscillation exactly on DFT bin k with the matching power swing."""
    f = k / (n * dt)
    t = np.arange(n) * dt
    z = amp * np.exp(1j * (2 * np.pi * f * t + phase))
    w = z.real
    p = (-(2 * H * 2j * np.pi * f + D) * z).real
    return w, p


def per_bin_consistent(H, D, seed, n=N, dt=DT, f_max=3.0):
    """Random speed spectrum; power chosen so every bin balances exactly."""
    rng = np.random.default_rng(seed)
    f = np.fft.rfftfreq(n, dt)
    W = (rng.normal(size=f.size) + 1j * rng.normal(size=f.size)) * (f <= f_max) * (f > 0)
    if n % 2 == 0:
        W[-1] = W[-1].real
    P = -(2 * H * 2j * np.pi * f + D) * W
    return np.fft.irfft(W, n), np.fft.irfft(P, n)


def test_single_oscillation_exact():
    w, p = on_bin_pair(4.0, 0.05)
    est = osc.estimate(make_dataset([w], [p], DT))
    assert est.H("A0") == pytest.approx(4.0, rel=1e-6)
    assert est.diagnostics["areas"]["A0"]["D"] == pytest.approx(0.05, rel=1e-6)


def test_formula_on_hand_sums():
    # one bin at 1 Hz: W = 1j, V = j 2 pi W, P = -(2H V + D W)
    H, D = 3.0, 0.2
    W = 1j * (0.4 - 0.1j)
    V = 2j * np.pi * W
    P = -(2 * H * V + D * W)
    h, d = osc.solve(BandSums(W, V, P, 1))
    assert h == pytest.approx(H, rel=1e-12)
    assert d == pytest.approx(D, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(k=st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-3), area=st.integers(0, 2))
def test_amplitude_invariance(three_area, k, area):
    _, _, ds = three_area
    w = ds.speed_dev[area]
    p = ds.power_dev[area]
    cfg = OscillationConfig()
    base = osc.solve(osc.band_sums(w, p, cfg))[0]
    scaled = osc.solve(osc.band_sums(w.with_values(k * w.values), p.with_values(k * p.values), cfg))[0]
    assert scaled == pytest.approx(base, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(shift=st.integers(0, N - 1), seed=st.integers(0, 500))
def test_time_shift_on_balanced_data(shift, seed):
    w, p = per_bin_consistent(4.0, 0.3, seed)
    cfg = OscillationConfig(bandwidth_hz=2.0)
    base = osc.solve(osc.band_sums(SignalTrace(w, DT), SignalTrace(p, DT), cfg))[0]
    rolled = osc.solve(osc.band_sums(SignalTrace(np.roll(w, shift), DT), SignalTrace(np.roll(p, shift), DT), cfg))[0]
    assert base == pytest.approx(4.0, rel=1e-9)
    assert rolled == pytest.approx(base, rel=1e-9)


def test_time_shift_on_single_bin():
    w, p = on_bin_pair(2.5, 0.1, k=12)
    cfg = OscillationConfig()
    base = osc.solve(osc.band_sums(SignalTrace(w, DT), SignalTrace(p, DT), cfg))[0]
    for s in (1, 17, 250):
        h = osc.solve(osc.band_sums(SignalTrace(np.roll(w, s), DT), SignalTrace(np.roll(p, s), DT), cfg))[0]
        assert h == pytest.approx(base, rel=1e-9)


def test_zero_signal_area_fails():
    w, p = on_bin_pair(4.0, 0.05)
    est = osc.estimate(make_dataset([w, np.zeros(N)], [p, np.zeros(N)], DT))
    assert est.areas["A1"].failure == "no resolvable oscillation"
    assert est.areas["A0"].ok


def test_bandwidth_above_nyquist():
    w, p = on_bin_pair(4.0, 0.05)
    with pytest.raises(ValueError, match="Nyquist"):
        osc.estimate(make_dataset([w], [p], DT), OscillationConfig(bandwidth_hz=31.0))


def test_short_record_rejected():
    w, p = on_bin_pair(4.0, 0.05, n=40, k=2)
    # bin spacing 1.5 Hz leaves fewer than five bins below 2 Hz
    with pytest.raises(ValueError, match="too short"):
        osc.estimate(make_dataset([w], [p], DT), OscillationConfig(bandwidth_hz=2.0))


def test_band_counts_bins():
    w, p = on_bin_pair(4.0, 0.05)
    # 0.1 Hz spacing: bins 0.1 .. 2.0
    assert osc.band_sums(SignalTrace(w, DT), SignalTrace(p, DT), OscillationConfig(2.0)).n_bins == 20
    assert osc.band_sums(SignalTrace(w, DT), SignalTrace(p, DT), OscillationConfig(2.0, include_dc=True)).n_bins == 21


def test_dc_changes_estimate_on_offset_signals():
    w, p = on_bin_pair(4.0, 0.05)
    ds = make_dataset([w + 0.002], [p - 0.01], DT)
    without = osc.estimate(ds).H("A0")
    with_dc = osc.estimate(ds, OscillationConfig(include_dc=True))
    assert without == pytest.approx(4.0, rel=1e-6)
    assert with_dc.H("A0") != pytest.approx(4.0, rel=1e-3)


def test_non_physical_inertia_is_failure():
    w, p = on_bin_pair(4.0, 0.05)
    est = osc.estimate(make_dataset([w], [-p + 3 * 0.05 * w], DT))
    assert not est.areas["A0"].ok
    assert "non-physical inertia" in est.areas["A0"].failure


def test_post_clear_window_needs_clear_time():
    w, p = on_bin_pair(4.0, 0.05)
    with pytest.raises(ValueError):
        osc.estimate(make_dataset([w], [p], DT), OscillationConfig(window="post_clear"))


def test_config_validation():
    with pytest.raises(ValueError):
        OscillationConfig(bandwidth_hz=0.0)
    with pytest.raises(ValueError):
        OscillationConfig(window="tail")
