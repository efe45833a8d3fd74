"""Smoke test for the irsloc Python bindings.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml --features extension-module`.
"""

import math

import irsloc_py as irs


def main():
    cfg = irs.SystemConfig()
    assert cfg.bandwidth_hz == 400e6
    assert math.isclose(cfg.range_bin_width, 0.375)
    assert irs.delay_bin(30.0, "ata") == 80

    scene = irs.Scenario((-100.0, 0.0), (100.0, 0.0), (0.0, 40.0), [(10.0, 50.0)])
    d = scene.distances()
    assert abs(d["d_at"][0][0] - 120.8305) < 1e-4

    d_at, d_aita = irs.oracle_ranges(scene)
    fit = irs.localize(scene, d_at, d_aita)
    x, y = fit["positions"][0]["x"], fit["positions"][0]["y"]
    assert math.hypot(x - 10.0, y - 50.0) < 1.0, fit

    x, iters = irs.solve_lasso([[2.0 + 0j]], [4.0 + 0j], 1.0)
    assert abs(x[0] - 1.75) < 1e-6, (x, iters)

    assert irs.error_probability([[True, False, False], [False, False, True], [False, True, False], [False] * 3]) == 0.25

    rec = irs.run_trial(7, k=2, oracle=True)
    assert rec["failure"] is None and not any(rec["error_flags"]), rec

    sampled = irs.sample_scenario(3, 3)
    assert len(sampled.targets) == 3

    summary = irs.run_sweep("sweep.n_trials = 4\ntrial.range_source = \"oracle\"\n")
    assert summary["n_trials"] == 4
    print("irsloc_py smoke test passed")


if __name__ == "__main__":
    main()
