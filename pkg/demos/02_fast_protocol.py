"""Fast two-shot protocol: parity switching and the high-frequency charge spectrum.

Run: python3 demos/02_fast_protocol.py
"""

import warnings

import numpy as np

from chargenoise import (
    compose_environment,
    default_noise_specs,
    fit_lorentzian,
    interleaved_cross_psd,
    log_bin,
    preset,
    reconstruct_fast_charge,
    run_fast_protocol,
    welch_psd,
)

p = preset("qubitA")
T = 30.0
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    env = compose_environment(p, T + 1, 1 / p.shot_rate, seed=0, **default_noise_specs(p))

res = run_fast_protocol(env, p, T, seed=0)
print(f"{res.n_cycles} cycles, {len(res.records)} shots, {len(res.recal_times)} recalibration scans")

# parity shots: the telegraph process shows up as a Lorentzian
s = 2.0 * res.records.select("parity").outcome - 1.0
psd = log_bin(welch_psd(s, res.cycle, segment_len=2**13), 20)
knee = fit_lorentzian(psd, band=(5, 4000)).fc
print(f"parity knee {knee:.0f} Hz (switching rate / 2 pi = {p.parity_rate_gamma / (2 * np.pi):.0f} Hz)")

# parity-conditioned charge series; interleaving removes the projection-noise floor
t, q, orphans = reconstruct_fast_charge(res, p)
direct = welch_psd(q, res.cycle, segment_len=2**14)
inter = interleaved_cross_psd(q, res.cycle, segment_len=2**13)
for f in (1.0, 10.0, 100.0):
    print(f"S_q({f:>5g} Hz): direct {direct.at(f):.2e}  interleaved {inter.at(f):+.2e} e^2/Hz")
