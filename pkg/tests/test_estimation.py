import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chargenoise.core import alias_charge_delta, preset
from chargenoise.estimation import (
    ChargeFit,
    build_trace,
    detect_jumps,
    false_positive_rate,
    fit_charge_scan,
    fit_scans,
    normalization_factor,
    normalize_external_spectrum,
    realias_to_half_e,
    to_frequency_noise,
)
from chargenoise.pulses import ScanResult, run_charge_scan, run_slow_scans, scan_grid
from chargenoise.spectral import Spectrum
from conftest import static_env


def _noiseless_scan(params, delta_e, d=0.9, nu=0.8, n=25):
    x = scan_grid(n)
    p = 0.5 * (d + nu * np.cos(np.pi * np.cos(2 * np.pi * (x + 0.5 * delta_e))))
    return ScanResult(x, p, np.full(n, 10**6), 0.0, 20.0)


@given(st.floats(-0.49, 0.49), st.floats(0.6, 1.2), st.floats(0.4, 0.9))
def test_noiseless_fit_recovers_offset(delta, d, nu):
    p = preset("qubitA")
    fit = fit_charge_scan(_noiseless_scan(p, delta, d, nu))
    assert fit.converged
    assert abs(alias_charge_delta(fit.delta_e - delta)) < 1e-6
    assert fit.d_hat == pytest.approx(d, abs=1e-6)
    assert fit.nu_hat == pytest.approx(nu, abs=1e-6)


def test_fit_error_tracks_scatter(params):
    rng_seeds = range(60)
    est, sig = [], []
    for s in rng_seeds:
        f = fit_charge_scan(run_charge_scan(static_env(0.17, n=300), params, 0.0, seed=s))
        est.append(alias_charge_delta(f.delta_e - 0.17))
        sig.append(f.sigma_e)
    assert np.std(est) == pytest.approx(np.median(sig), rel=0.35)


def test_too_few_points():
    x = np.array([0.0, 0.1, 0.2])
    with pytest.raises(ValueError):
        fit_charge_scan(ScanResult(x, x, np.ones(3), 0.0, 1.0))


def test_fit_scans_chains_prior(params):
    env = static_env(0.3, n=2000, dt=0.5)
    fits = fit_scans(run_slow_scans(env, params, 5, seed=1))
    assert all(f.converged for f in fits)
    assert np.allclose([f.delta_e for f in fits], 0.3, atol=0.1)


def _fit(t, v, ok=True):
    return ChargeFit(v, 0.02, 0.9, 0.8, 0.0, ok, t)


def test_trace_unwraps_and_gaps():
    vals = [0.4, -0.45, -0.3, 0.0, 0.45]
    fits = [_fit(i * 20.0, v, ok=(i != 3)) for i, v in enumerate(vals)]
    tr = build_trace(fits)
    assert np.isnan(tr.values[3])
    assert tr.values[1] == pytest.approx(0.55)
    assert tr.values[2] == pytest.approx(0.7)
    assert tr.values[4] == pytest.approx(0.45 + 0.0)
    filled = tr.filled()
    assert np.isfinite(filled).all()
    assert filled[3] == pytest.approx(0.5 * (0.7 + 0.45))


def test_empty_trace():
    tr = build_trace([])
    assert len(tr) == 0
    assert len(detect_jumps(tr)) == 0


def test_detect_jumps_threshold():
    vals = np.cumsum([0.0, 0.01, 0.3, -0.02, -0.2, 0.05])
    tr = build_trace([_fit(i * 20.0, alias_charge_delta(v)) for i, v in enumerate(vals)])
    cat = detect_jumps(tr, 0.1)
    assert len(cat) == 2
    assert np.allclose(cat.sizes, [0.3, -0.2])
    assert cat.mean_interval(duration=100.0) == 50.0
    with pytest.raises(ValueError):
        detect_jumps(tr, 0.0)


def test_false_positive_rate():
    assert false_positive_rate(0.02) < 1e-3
    assert false_positive_rate(1.0) > 0.9
    # two-fit Gaussian at threshold = 1 sigma of the difference
    assert false_positive_rate(0.1 / np.sqrt(2)) == pytest.approx(0.3173, abs=1e-3)


@given(st.floats(0.0, 0.5))
def test_realias_inverts_frequency_map(q):
    p = preset("qubitA")
    assert realias_to_half_e(to_frequency_noise(q, p), p) == pytest.approx(q, abs=1e-7)


def test_realias_folds_into_half_e(params):
    q = np.linspace(-3, 3, 301)
    r = realias_to_half_e(to_frequency_noise(q, params), params)
    assert r.min() >= 0 and r.max() <= 0.5
    assert np.allclose(r, np.abs(alias_charge_delta(q)), atol=1e-7)


def test_normalization_conventions():
    s = Spectrum(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    q = normalize_external_spectrum(s, 100.0, 300.0)
    assert np.allclose(q.values, [27.0, 36.0])
    assert np.allclose(normalize_external_spectrum(s.values, 100.0, 300.0, "linear"), [9.0, 12.0])
    assert normalization_factor(2.0, 1.0) == 0.25
    with pytest.raises(ValueError):
        normalization_factor(1.0, 1.0, "cubic")
    with pytest.raises(ValueError):
        normalization_factor(0.0, 1.0)
