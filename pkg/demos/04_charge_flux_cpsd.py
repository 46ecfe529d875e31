"""Bound the correlation between charge and flux noise with a cross-spectrum.

Run: python3 demos/04_charge_flux_cpsd.py
"""

import warnings

import numpy as np

from chargenoise import FluxNoiseSpec, compose_environment, default_noise_specs, preset, run_low_bandwidth_cpsd

p = preset("qubitA")
sp = default_noise_specs(p)
n_spec = 25
for c in (0.0, 1.0):
    flux = FluxNoiseSpec(sp["flux"].amplitude_at_1hz, sp["flux"].exponent, c)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        env = compose_environment(p, n_spec * 200 + 10, 0.05, 0, powerlaw=sp["powerlaw"], jumps=sp["jumps"], flux=flux)
    rep = run_low_bandwidth_cpsd(env, p, n_spec, seed=0).report
    print(f"c={c:.0f}: mean normalized |S_qPhi| {np.mean(rep.normalized):.3f}, floor {rep.floor[0]:.3f}")
