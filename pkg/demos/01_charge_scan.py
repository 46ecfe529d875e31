"""Sweep the gate charge on a frozen environment and fit the offset charge.

Run: python3 demos/01_charge_scan.py
"""

import numpy as np

from chargenoise import EnvironmentTrace, fit_charge_scan, preset, run_charge_scan

p = preset("qubitA")
true_offset = 0.27  # e
n = int(p.scan_period / 0.1) + 2
env = EnvironmentTrace(0.1, np.full(n, true_offset), np.ones(n, dtype=np.int8), np.zeros(n), 0, 0.0)

# one 20 s scan: 25 bias points x 8 shots, parity frozen at +1
scan = run_charge_scan(env, p, 0.0, seed=1)
fit = fit_charge_scan(scan)
print(f"true offset   {true_offset:+.3f} e")
print(f"fitted offset {fit.delta_e:+.3f} +- {fit.sigma_e:.3f} e  (d={fit.d_hat:.2f}, nu={fit.nu_hat:.2f})")

# the statistical error from repeating the scan matches the reported sigma
est = [fit_charge_scan(run_charge_scan(env, p, 0.0, seed=s)).delta_e for s in range(100)]
print(f"scatter over 100 scans {np.std(est):.4f} e")
