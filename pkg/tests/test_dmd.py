import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from areainertia import bench, dmd
from areainertia.core import Method
from areainertia.dmd import DmdConfig, DmdWarning
from areainertia.simkit import electrical_power, kron_reduce

from conftest import make_dataset, simulated

DT = 1 / 60


def linear_data(A, x0, m):
    X = np.empty((A.shape[0], m))
    X[:, 0] = x0
    for k in range(1, m):
        X[:, k] = A @ X[:, k - 1]
    return X


def random_stable_system(n, seed):
    """Real A_d = V diag(mu) V^-1 with conjugate pairs of modulus 0.9..0.999."""
    rng = np.random.default_rng(seed)
    pairs = n // 2
    r = rng.uniform(0.9, 0.999, pairs)
    th = rng.uniform(0.02, 1.0, pairs)
    blocks = [r_k * np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]) for r_k, t in zip(r, th)]
    J = np.zeros((n, n))
    for k, b in enumerate(blocks):
        J[2 * k:2 * k + 2, 2 * k:2 * k + 2] = b
    V = rng.normal(size=(n, n)) + 3 * np.eye(n)
    A = V @ J @ np.linalg.inv(V)
    mu = np.concatenate([r * np.exp(1j * th), r * np.exp(-1j * th)])
    return A, mu, rng.normal(size=n)


def modal_signals(H, D, lams, amps, n=600, dt=DT):
    """Per-area speed and power built mode by mode so that
    (2H lam + D) w_k + p_k = 0 holds for every mode exactly."""
    t = np.arange(n) * dt
    speeds, powers = [], []
    for i in range(len(H)):
        w = np.zeros(n)
        p = np.zeros(n)
        for lam, a in zip(lams, amps[i]):
            z = a * np.exp(lam * t)
            w += 2 * z.real
            p += 2 * (-(2 * H[i] * lam + D[i]) * z).real
        speeds.append(w)
        powers.append(p)
    return speeds, powers


# --- snapshots ------------------------------------------------------------------


def test_snapshot_row_order():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(2, 10))
    p = rng.normal(size=(2, 10))
    X = dmd.build_snapshots(make_dataset(list(w), list(p), DT))
    assert X.shape == (4, 10)
    assert np.array_equal(X, np.vstack([w, p]))


def test_two_areas_three_samples_is_not_a_dataset():
    # two areas need 2*(2*2)+2 = 10 snapshots
    with pytest.raises(ValueError):
        make_dataset([np.zeros(3)] * 2, [np.zeros(3)] * 2, DT)


def test_thirteen_area_shape():
    cfg, _, ds = simulated("thirteen_area")
    post = ds.window(ds.M - 540)
    X = dmd.build_snapshots(post)
    assert X.shape == (26, 540)
    assert np.array_equal(X[0], post.speed_dev[0].values)
    assert np.array_equal(X[13], post.power_dev[0].values)


# --- fit ----------------------------------------------------------------------------


def test_known_operator_eigenvalues():
    A, mu, x0 = random_stable_system(6, 1)
    X = linear_data(A, x0, 200)
    model = dmd.fit(X, DT)
    got = np.sort_complex(model.discrete_eigenvalues)
    assert np.allclose(got, np.sort_complex(mu), rtol=1e-8, atol=0)
    assert np.allclose(model.eigenvalues, np.log(model.discrete_eigenvalues) / DT)


def test_static_snapshot_gives_zero_eigenvalue():
    X = np.tile(np.array([[0.3], [-1.2], [0.5]]), (1, 20))
    model = dmd.fit(X, DT)
    assert model.rank == 1
    assert abs(model.eigenvalues[0]) < 1e-12


def test_zero_eigenvalue_dropped_with_warning():
    # x_{k+1} = diag(0.95, 0) x_k: the second direction dies after one step
    X = np.column_stack([[1.0, 1.0], [0.95, 0.0], [0.9025, 0.0]])
    with pytest.warns(DmdWarning, match="log of zero"):
        model = dmd.fit(X, DT, rank=2)
    assert model.rank == 1
    assert model.discrete_eigenvalues[0] == pytest.approx(0.95)


def test_negative_real_eigenvalue_warns():
    X = np.array([[1.0, -0.5, 0.25, -0.125]])
    with pytest.warns(DmdWarning, match="negative real"):
        model = dmd.fit(X, DT)
    assert model.eigenvalues[0].imag == pytest.approx(np.pi / DT)


def test_two_area_electromechanical_mode(two_area):
    # linearise the post-disturbance network at the end state of the run
    cfg, res, ds = two_area
    m = cfg.grid
    net = kron_reduce(m, cfg.disturbance)
    d = res.delta[-1]
    n = d.size
    K = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1e-7
        K[:, j] = (electrical_power(net.post, net.emf_mag, d + e) - electrical_power(net.post, net.emf_mag, d - e)) / 2e-7
    two_h = np.array([2 * g.inertia_s * g.rating_mva / m.system_base_mva for g in m.generators])
    damp = np.array([g.damping_pu * g.rating_mva / m.system_base_mva for g in m.generators])
    ws = 2 * np.pi * m.nominal_frequency_hz
    A = np.block([[np.zeros((n, n)), ws * np.eye(n)], [-K / two_h[:, None], -np.diag(damp / two_h)]])
    ev = np.linalg.eigvals(A)
    lin = ev[np.argmax(ev.imag)]

    X = dmd.build_snapshots(ds)
    s = dmd.start_sample(ds, 14)
    model = dmd.fit(X[:, s:], ds.dt)
    got = model.eigenvalues[np.argmax(model.eigenvalues.imag)]
    assert abs(got) == pytest.approx(abs(lin), rel=0.02)
    assert got.imag == pytest.approx(lin.imag, rel=0.02)


# --- amplitudes and reconstruction ------------------------------------------------------


def test_amplitudes_reproduce_snapshot():
    A, _, x0 = random_stable_system(4, 2)
    X = linear_data(A, x0, 100)
    model = dmd.fit(X, DT)
    dmd.amplitudes(model, X, 7)
    assert model.start_index == 7
    assert np.allclose(dmd.reconstruct(model, 0.0)[:, 0], X[:, 7], rtol=0, atol=1e-10 * np.abs(X[:, 7]).max())


def test_linear_reconstruction_over_horizon():
    A, _, x0 = random_stable_system(6, 3)
    X = linear_data(A, x0, 300)
    model = dmd.fit(X, DT)
    dmd.amplitudes(model, X, 0)
    R = dmd.reconstruct(model, np.arange(300) * DT)
    assert np.linalg.norm(R - X) / np.linalg.norm(X) < 1e-6


def test_amplitude_index_out_of_range():
    A, _, x0 = random_stable_system(2, 0)
    X = linear_data(A, x0, 10)
    with pytest.raises(ValueError):
        dmd.amplitudes(dmd.fit(X, DT), X, 10)


def test_reconstruct_needs_amplitudes():
    A, _, x0 = random_stable_system(2, 0)
    with pytest.raises(ValueError):
        dmd.reconstruct(dmd.fit(linear_data(A, x0, 10), DT), [0.0])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.sampled_from([2, 4, 6]))
def test_reconstruction_is_real(seed, n):
    A, _, x0 = random_stable_system(n, seed)
    X = linear_data(A, x0, 80)
    model = dmd.fit(X, DT)
    b = dmd.amplitudes(model, X, 3)
    t = np.linspace(0, 2, 50)
    Z = model.modes @ (b[:, None] * np.exp(np.outer(model.eigenvalues, t)))
    assert np.abs(Z.imag).max() <= 1e-9 * np.abs(Z.real).max()


def test_rank_monotonicity():
    # orthogonal mode shapes with well separated energies, so the leading
    # singular directions are the leading modes
    Q = np.linalg.qr(np.random.default_rng(5).normal(size=(6, 4)))[0]
    mu = np.array([0.99, 0.95, 0.9, 0.85])
    amp = np.array([10.0, 3.0, 1.0, 0.3])
    X = Q @ (amp[:, None] * mu[:, None] ** np.arange(150))
    err = []
    for r in range(1, 7):
        model = dmd.fit(X, DT, rank=r)
        dmd.amplitudes(model, X, 0)
        R = dmd.reconstruct(model, np.arange(150) * DT)
        err.append(np.sqrt(np.mean((R - X) ** 2)))
    assert all(err[k + 1] < err[k] for k in range(3))
    assert abs(err[4] - err[3]) < 1e-10 and abs(err[5] - err[3]) < 1e-10


# --- swing system and box solve ---------------------------------------------------------


def test_modal_fixture_exact():
    H, D = [5.0, 3.0], [0.1, 0.4]
    lams = [-0.15 + 2j * np.pi * 0.7, -0.3 + 2j * np.pi * 1.3]
    amps = [[0.01, 0.004j], [-0.006 + 0.002j, 0.008]]
    w, p = modal_signals(H, D, lams, amps)
    ds = make_dataset(w, p, DT, clear_time=0.0, disturbance_time=0.0)
    est = dmd.estimate(ds, DmdConfig(start_index=0))
    for k, a in enumerate(ds.area_ids):
        assert est.H(a) == pytest.approx(H[k], rel=1e-3)
        assert est.areas[a].D == pytest.approx(D[k], abs=1e-2)
        raw_h = est.diagnostics["areas"][a]["H_unconstrained"]
        raw_d = est.diagnostics["areas"][a]["D_unconstrained"]
        assert 2 * raw_h == pytest.approx(2 * H[k], rel=1e-9)
        assert raw_d == pytest.approx(D[k], rel=1e-9)


def test_damping_outside_box_is_clamped():
    H, D = [5.0, 3.0], [1.6, 0.4]
    lams = [-0.4 + 2j * np.pi * 0.7, -0.3 + 2j * np.pi * 1.3]
    w, p = modal_signals(H, D, lams, [[0.01, 0.004j], [-0.006 + 0.002j, 0.008]])
    est = dmd.estimate(make_dataset(w, p, DT, clear_time=0.0), DmdConfig(start_index=0))
    info = est.diagnostics["areas"]["A0"]
    assert info["clamped"] and info["D_unconstrained"] == pytest.approx(1.6, rel=1e-9)
    assert est.areas["A0"].D == 1.0
    assert not est.diagnostics["areas"]["A1"]["clamped"]


def test_box_resolve_matches_one_dimensional_lstsq():
    M = np.array([[2.0, 0.7], [-0.4, 1.5]])
    rhs = np.array([3.0, -4.0])
    two_h, damp, raw, clamped = dmd.solve_box(M, rhs)
    assert np.allclose(raw, np.linalg.solve(M, rhs))
    assert clamped and damp == 0.0
    expect = np.linalg.lstsq(M[:, :1], rhs, rcond=None)[0][0]
    assert two_h == pytest.approx(expect, rel=1e-14)


def test_singular_system_fails():
    with pytest.raises(np.linalg.LinAlgError):
        dmd.solve_box(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))


def test_area_without_dynamics_fails():
    # one mode pair: rank 2 fits the two live rows exactly
    w, p = modal_signals([5.0], [0.1], [-0.15 + 2j * np.pi * 0.7], [[0.01]])
    ds = make_dataset([w[0], np.zeros_like(w[0])], [p[0], np.zeros_like(p[0])], DT, clear_time=0.0)
    est = dmd.estimate(ds, DmdConfig(start_index=0))
    assert est.H("A0") == pytest.approx(5.0, rel=1e-6)
    assert "singular" in est.areas["A1"].failure


def test_start_index_needs_clear_time():
    w, p = modal_signals([5.0], [0.1], [-0.1 + 4j], [[0.01]])
    with pytest.raises(ValueError):
        dmd.estimate(make_dataset(w, p, DT))


def test_start_anchor():
    w, p = modal_signals([5.0], [0.1], [-0.1 + 4j], [[0.01]])
    ds = make_dataset(w, p, DT, disturbance_time=1.0, clear_time=1.1)
    assert dmd.start_sample(ds, 14) == 66 + 14
    assert dmd.start_sample(ds, 14, "inception") == 60 + 14


def test_diagnostics_json(three_area):
    cfg, _, ds = three_area
    est = dmd.estimate(ds)
    doc = json.loads(dmd.diagnostics_json(est, "three_area"))
    assert doc["scenario"] == "three_area" and doc["method"] == "dmd"
    assert len(doc["eigenvalues"]) == doc["rank"] == 6
    assert all(len(e) == 2 for e in doc["eigenvalues"])
    assert set(doc["areas"]) == set(ds.area_ids)
    assert "condition" in doc["areas"][ds.area_ids[0]]


# --- nonlinear fixture ---------------------------------------------------------------------


def test_early_start_worse_than_tuned(three_area):
    cfg, result, ds = three_area
    sw = bench.sweep(cfg.only([Method.DMD]), "dmd.start_index", list(range(1, 31)), raw=(result, ds))
    assert sw.mee[0] > min(sw.mee)


def test_early_reconstruction_error_larger(three_area):
    # the operator is the same, only the amplitude sample moves; samples right
    # after clearing are the most nonlinear and reconstruct worst
    _, _, ds = three_area
    e0 = dmd.estimate(ds, DmdConfig(start_index=0)).diagnostics["reconstruction_rel_rms"]
    e14 = dmd.estimate(ds, DmdConfig(start_index=14)).diagnostics["reconstruction_rel_rms"]
    assert e0 > e14


def test_three_area_reconstruction_within_five_percent(three_area):
    _, _, ds = three_area
    est = dmd.estimate(ds, DmdConfig(start_index=14))
    assert est.diagnostics["reconstruction_rel_rms"] < 0.05


def test_config_validation():
    with pytest.raises(ValueError):
        DmdConfig(start_index=-1)
    with pytest.raises(ValueError):
        DmdConfig(anchor="onset")
    with pytest.raises(ValueError):
        DmdConfig(rank=0)


def test_start_past_record_end():
    w, p = modal_signals([5.0], [0.1], [-0.1 + 4j], [[0.01]], n=40)
    ds = make_dataset(w, p, DT, clear_time=0.0)
    with pytest.raises(ValueError):
        dmd.estimate(ds, DmdConfig(start_index=39))
