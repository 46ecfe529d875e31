"""Charge jumps from impinging charges: electrostatics, rates and detection.

Run: python3 demos/03_jumps.py
"""

import warnings

import numpy as np

from chargenoise import (
    GeometryGrid,
    build_trace,
    compose_environment,
    default_noise_specs,
    detect_jumps,
    fit_scans,
    preset,
    run_slow_scans,
    sample_jump_distribution,
    solve_laplace,
)

# induced charge on the island for uniform impingement over the gap region
field = solve_laplace(GeometryGrid.island_in_cavity())
dist = sample_jump_distribution(field, 50_000, seed=0)
print(f"fraction of jumps with |dq| > 0.1 e: {dist.fraction_above(0.1):.2f}")

p = preset("qubitA")
sp = default_noise_specs(p)
print(f"jump rate {sp['jumps'].rate:.2e} /s (one every {1 / sp['jumps'].rate:.0f} s)")

# a 6 h slow trace with jumps and parity switching only
n_scans = 6 * 3600 // int(p.scan_period)
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    env = compose_environment(p, n_scans * p.scan_period + 1, 0.2, 3, telegraph=sp["telegraph"], jumps=sp["jumps"])
trace = build_trace(fit_scans(run_slow_scans(env, p, n_scans, 3)))
cat = detect_jumps(trace, 0.1)
print(f"{len(env.jumps.times)} true events, {len(cat)} detected above 0.1 e")
_, inc = trace.increments()
print(f"increment core width {1.4826 * np.median(np.abs(inc)):.3f} e")
