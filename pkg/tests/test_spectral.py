import warnings

import numpy as np
import pytest

from chargenoise.noise import PowerLawSpec, TelegraphSpec, synth_power_law, synth_telegraph
from chargenoise.spectral import (
    Spectrum,
    StitchWarning,
    cross_psd,
    fit_lorentzian,
    fit_power_law_plus_lorentzian,
    interleaved_cross_psd,
    log_bin,
    stitch_spectra,
    welch_psd,
)


def test_welch_white_level():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.5, 2**16)
    s = welch_psd(x, 1e-3, segment_len=1024)
    assert np.mean(s.values) == pytest.approx(2 * 0.25 * 1e-3, rel=0.03)


def test_welch_segment_checks():
    with pytest.raises(ValueError):
        welch_psd(np.zeros(10), 1.0, segment_len=20)


def test_interleaved_rejects_white_keeps_signal():
    rng = np.random.default_rng(1)
    n, dt = 2**18, 1e-3
    white = rng.normal(0, 1, n)
    direct = welch_psd(white, dt, segment_len=2048)
    inter = interleaved_cross_psd(white, dt, segment_len=1024)
    assert abs(np.mean(inter.values)) < 0.05 * np.mean(direct.values)
    t = np.arange(n) * dt
    sig = np.sin(2 * np.pi * 3.0 * t)
    s = interleaved_cross_psd(sig + white, dt, segment_len=1024)
    ref = welch_psd(sig[::2], 2 * dt, segment_len=1024)
    assert s.at(3.0) == pytest.approx(ref.at(3.0), rel=0.2)


def test_log_bin_preserves_mean_level():
    f = np.arange(1, 1001, dtype=float)
    s = log_bin(Spectrum(f, np.full(1000, 2.0), 4), 10)
    assert np.allclose(s.values, 2.0)
    assert s.n_eff.sum() == pytest.approx(4000)
    assert np.all(np.diff(np.log10(s.f)) > 0)


def test_power_law_lorentzian_recovery():
    dt, n = 1e-3, 2**20
    x = synth_power_law(PowerLawSpec(1e-4, 1.8), n, dt, 3) + 0.05 * synth_telegraph(TelegraphSpec(2 * np.pi * 50.0), n, dt, 4)
    fit = fit_power_law_plus_lorentzian(log_bin(welch_psd(x, dt, segment_len=2**15), 20), band=(0.1, 400))
    assert fit.alpha == pytest.approx(1.8, abs=0.1)
    assert fit.S_1hz == pytest.approx(1e-4, rel=0.3)
    assert fit.fc == pytest.approx(50.0, rel=0.15)


def test_fit_lorentzian_knee():
    dt = 1e-4
    x = synth_telegraph(TelegraphSpec(2 * np.pi * 255.0), 2**20, dt, 5)
    fit = fit_lorentzian(log_bin(welch_psd(x, dt, segment_len=2**14), 20), band=(5, 4000))
    assert fit.identifiable
    assert fit.fc == pytest.approx(255.0, rel=0.1)


def test_stitch_warns_on_mismatch():
    lo = Spectrum(np.array([0.1, 0.5, 1.0]), np.ones(3))
    hi = Spectrum(np.array([0.5, 1.0, 5.0]), np.full(3, 10.0))
    with pytest.warns(StitchWarning):
        s = stitch_spectra(lo, hi)
    assert list(s.f) == [0.1, 0.5, 1.0, 5.0]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        stitch_spectra(lo, Spectrum(hi.f, np.full(3, 1.5)))


@pytest.mark.parametrize("n_avg", [25, 100, 400])
def test_cpsd_floor_scaling(n_avg):
    rng = np.random.default_rng(n_avg)
    seg = 256
    a, b = rng.normal(size=(2, n_avg * seg))
    cs = cross_psd(a, b, 1.0, segment_len=seg)
    assert cs.n_avg == n_avg
    # mean |coherence| of independent series is sqrt(pi)/2 / sqrt(N)
    assert np.mean(cs.normalized) == pytest.approx(np.sqrt(np.pi) / 2 / np.sqrt(n_avg), rel=0.25)
    assert np.mean(cs.normalized) == pytest.approx(cs.floor[0], rel=0.25)


def test_cpsd_detects_common_signal():
    rng = np.random.default_rng(9)
    common = rng.normal(size=40 * 128)
    cs = cross_psd(common + 0.1 * rng.normal(size=common.size), common, 1.0, segment_len=128)
    assert np.mean(cs.normalized) > 0.9


def test_cpsd_length_mismatch():
    with pytest.raises(ValueError):
        cross_psd(np.zeros(10), np.zeros(11), 1.0)
