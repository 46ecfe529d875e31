import warnings

import numpy as np
import pytest

from chargenoise.core import preset
from chargenoise.cpsd import (
    FluxReadout,
    _flux_phase,
    correlation_bound,
    leak_level,
    run_flux_ramsey,
    run_high_bandwidth_cpsd,
    run_low_bandwidth_cpsd,
)
from chargenoise.noise import FluxNoiseSpec, compose_environment, default_noise_specs
from chargenoise.rng import substream
from conftest import static_env


def _env(p, T, dt, seed, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compose_environment(p, T, dt, seed, **kw)


def test_readout_validation():
    with pytest.raises(ValueError):
        FluxReadout(slope=0.0)
    with pytest.raises(ValueError):
        FluxReadout(n_phases=2)


def test_leak_is_even_and_branch_signed():
    r = FluxReadout()
    x = np.linspace(-0.45, 0.45, 19)
    a = _flux_phase(r, 1e-6, 0.0, 1, x)
    assert np.allclose(a, _flux_phase(r, 1e-6, 0.0, 1, -x))
    # a whole-electron slip swaps the parity bands
    assert np.allclose(_flux_phase(r, 1e-6, 0.0, 1, x + 1.0), -a)
    assert np.allclose(_flux_phase(r, 1e-6, 0.0, -1, x), -a)
    assert _flux_phase(r, 1e-6, 0.0, 1, 0.0) == 0.0


@pytest.mark.parametrize("flux", [-2e-5, 0.0, 1.5e-5])
def test_flux_ramsey_recovers_static_phase(params, flux):
    ro = FluxReadout(shots_per_phase=4000)
    env = static_env(0.0, flux=flux, n=400)
    phi = run_flux_ramsey(env, params, ro, 0.0, 0.0, substream(0, "flux"))
    assert phi == pytest.approx(ro.gain(ro.idle_low) * flux, abs=0.03)


def test_low_band_floor_and_bound(params):
    sp = default_noise_specs(params)
    env = _env(params, 20 * 200.0 + 10, 0.05, 2, powerlaw=sp["powerlaw"], flux=sp["flux"])
    rep = run_low_bandwidth_cpsd(env, params, 20, seed=2).report
    assert rep.floor[0] == pytest.approx(1 / np.sqrt(20))
    assert np.mean(rep.normalized) < 2.5 * rep.floor[0]
    for f in (5e-3, 2e-2, 0.1):
        assert correlation_bound(rep, f) >= rep.floor[0]


def test_low_band_detects_correlation(params):
    sp = default_noise_specs(params)
    flux = FluxNoiseSpec(sp["flux"].amplitude_at_1hz, sp["flux"].exponent, 1.0)
    env = _env(params, 10 * 200.0 + 10, 0.05, 3, powerlaw=sp["powerlaw"], flux=flux)
    rep = run_low_bandwidth_cpsd(env, params, 10, seed=3).report
    assert np.max(rep.normalized / rep.floor) > 2.0


def test_high_band_floor_without_charge_noise(params):
    sp = default_noise_specs(params)
    env = _env(params, 31.0, 1e-4, 4, telegraph=sp["telegraph"], flux=sp["flux"])
    rep = run_high_bandwidth_cpsd(env, params, 30.0, seed=4).report
    assert np.all(rep.band == "high")
    assert np.mean(rep.normalized / rep.floor) == pytest.approx(np.sqrt(np.pi) / 2, rel=0.3)


def test_high_band_short_duration(params):
    with pytest.raises(ValueError):
        run_high_bandwidth_cpsd(static_env(n=100_000, dt=1e-4), params, 5.0)


@pytest.mark.slow
def test_leak_scales_quadratically(params):
    """Doubling the charge amplitude raises the coherent leak about fourfold."""
    sp = default_noise_specs(params)
    levels = []
    for scale in (0.25, 0.5):
        env = _env(params, 301.0, 1e-4, 0, charge_scale=scale, **sp)
        levels.append(leak_level(run_high_bandwidth_cpsd(env, params, 300.0, seed=0).report))
    assert levels[1] / levels[0] >= 3.0
