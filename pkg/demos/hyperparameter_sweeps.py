"""How each estimator reacts to its main tuning knob.

One simulation of the three-area fixture is shared by all sweeps:

* polynomial order used to read the initial slope of the identified step response,
* first snapshot handed to DMD (how long after the disturbance the fit starts),
* bandwidth of the spectral estimator.

    python3 demos/hyperparameter_sweeps.py
"""

from areainertia import bench

cfg = bench.load_fixture("three_area")
raw = bench.simulate_scenario(cfg)


def show(sw, unit=""):
    print(f"\n{sw.parameter}")
    for v, m in zip(sw.values, sw.mee):
        mark = "  <- best" if v == sw.best() else ""
        print(f"  {v!s:>5}{unit}  MEE {'n/a' if m is None else f'{m:7.2f}%'}{mark}")


show(bench.sweep(cfg, "sysid.N_p", list(range(1, 9)), raw=raw))
show(bench.sweep(cfg, "dmd.start_index", [1, 2, 5, 10, 15, 20, 25, 30], raw=raw))
show(bench.sweep(cfg, "osc.B", [0.5, 1, 2, 4, 8], raw=raw), " Hz")
