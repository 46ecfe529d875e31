"""Scaled reproduction drivers with machine-readable verdicts.

Each driver runs one experiment end to end, writes its CSVs under
``out/<figure>/`` and returns a verdict dict ``{"figure", "passed", "checks"}``.
``scale`` multiplies every duration (and event or spectrum count) so the same
pipeline can run at desk scale in tests.
"""

from __future__ import annotations

import warnings
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import RunConfig
from .core import preset
from .cpsd import FluxReadout, correlation_bound, run_high_bandwidth_cpsd, run_low_bandwidth_cpsd
from .electrostatics import default_sampler, histogram_model, jump_probability, sample_jump_distribution
from .estimation import build_trace, detect_jumps, fit_scans, realias_to_half_e, to_frequency_noise
from .io import write_distribution_csv, write_histogram_csv, write_json, write_spectrum_csv, write_trace_csv
from .noise import FluxNoiseSpec, compose_environment, default_noise_specs
from .pulses import reconstruct_fast_charge, run_fast_protocol, run_slow_scans
from .spectral import (
    StitchWarning,
    fit_lorentzian,
    fit_power_law_plus_lorentzian,
    interleaved_cross_psd,
    log_bin,
    lorentzian,
    stitch_spectra,
    welch_psd,
)

FIGURES = ("fig3b", "fig3c", "fig4", "figS1", "figS4")

# targets and tolerances
KNEE_HZ, KNEE_TOL = 255.0, 0.10
ALPHA, ALPHA_TOL = 1.93, 0.10
S_Q_1HZ, S_Q_FACTOR = 2.9e-4, 1.5
JUMP_INTERVAL, JUMP_TOL, MIN_EVENTS = 250.0, 0.15, 400
CORE_WIDTH, CORE_TOL = 0.02, 0.30
REALIAS_ALPHA, REALIAS_TOL = 1.76, 0.08
DROP_RANGE = (30.0, 300.0)
WHITE_BELOW = 3e-4
S_DF_1HZ, S_DF_FACTOR = 5.9e7, 2.0
FLOOR_250, FLOOR_TOL = 0.06, 0.02
DETECT_FACTOR = 5.0
BOUND_1HZ, BOUND_TOL = 0.1, 0.04

SLOW_HOURS = 18.0
FAST_SECONDS = 600.0
PARITY_SECONDS = 60.0
JUMP_SECONDS = 110_000.0
LOW_SPECTRA = 250
HIGH_SECONDS = 300.0


def _check(name, value, passed, target):
    return name, {"value": value, "target": target, "passed": bool(passed)}


def _verdict(figure, checks, **extra):
    checks = dict(checks)
    return {"figure": figure, "passed": all(c["passed"] for c in checks.values()), "checks": checks, **extra}


def _env(*args, **kw):
    """compose_environment with the coarse-sampling telegraph warning silenced."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return compose_environment(*args, **kw)


def _within_factor(x, target, factor):
    return target / factor <= x <= target * factor


@lru_cache(maxsize=4)
def slow_trace(device: str, seed: int, scale: float):
    """Slow-scan charge trace at one scan per ``scan_period`` over the scaled 18 h."""
    p = preset(device)
    sp = default_noise_specs(p)
    n_scans = max(16, int(round(SLOW_HOURS * 3600 / p.scan_period * scale)))
    env = _env(p, n_scans * p.scan_period + 1, 0.2, seed, powerlaw=sp["powerlaw"], telegraph=sp["telegraph"], jumps=sp["jumps"])
    return build_trace(fit_scans(run_slow_scans(env, p, n_scans, seed)))


def _slow_spectrum(trace, period):
    v = trace.filled()
    return welch_psd(v, period, segment_len=len(v) // 2)


def fig3b(cfg: RunConfig, out: Path) -> dict:
    """Parity Lorentzian from a fast-protocol run."""
    p, scale = cfg.params(), cfg.reproduce["scale"]
    T = max(2.0, PARITY_SECONDS * scale)
    sp = default_noise_specs(p)
    env = _env(p, T + 1, 1.0 / p.shot_rate, cfg.seed, powerlaw=sp["powerlaw"], telegraph=sp["telegraph"], jumps=sp["jumps"])
    res = run_fast_protocol(env, p, T, cfg.seed)
    s = 2.0 * res.records.select("parity").outcome - 1.0
    psd = log_bin(welch_psd(s, res.cycle, segment_len=min(2**14, len(s) // 2)), 20)
    fit = fit_lorentzian(psd, band=(5.0, 4000.0))
    write_spectrum_csv(psd, out / "parity_psd.csv")
    target = p.parity_rate_gamma / (2 * np.pi)
    return _verdict(
        "fig3b",
        [_check("knee_hz", fit.fc, abs(fit.fc / target - 1) <= KNEE_TOL, f"{target:g} +-{KNEE_TOL:.0%}")],
        fit={"fc": fit.fc, "L0": fit.L0, "white": fit.white},
    )


def charge_spectrum(cfg: RunConfig, out: Path = None):
    """Stitched slow + fast charge spectrum and its power-law + Lorentzian fit."""
    p, scale = cfg.params(), cfg.reproduce["scale"]
    trace = slow_trace(cfg.device, cfg.seed, scale)
    low = log_bin(_slow_spectrum(trace, p.scan_period), 10)
    T = max(10.0, FAST_SECONDS * scale)
    sp = default_noise_specs(p)
    env = _env(p, T + 1, 1.0 / p.shot_rate, cfg.seed, powerlaw=sp["powerlaw"], telegraph=sp["telegraph"], jumps=sp["jumps"])
    res = run_fast_protocol(env, p, T, cfg.seed)
    _, q, _ = reconstruct_fast_charge(res, p)
    high = log_bin(interleaved_cross_psd(q, res.cycle, segment_len=min(2**16, len(q) // 4)), 10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StitchWarning)
        st = stitch_spectra(low, high)
    fit = fit_power_law_plus_lorentzian(st)
    if out is not None:
        write_trace_csv(trace, out / "slow_trace.csv")
        write_spectrum_csv(low, out / "slow_psd.csv")
        write_spectrum_csv(high, out / "fast_psd.csv")
        write_spectrum_csv(st, out / "stitched_psd.csv")
    return trace, st, fit


def fig3c(cfg: RunConfig, out: Path) -> dict:
    _, st, fit = charge_spectrum(cfg, out)
    f_hi = st.f[st.f > 10.0]
    qp = bool(len(f_hi) and np.all(lorentzian(f_hi, fit.L0, fit.fc) > fit.power_law(f_hi)))
    return _verdict(
        "fig3c",
        [
            _check("alpha", fit.alpha, abs(fit.alpha - ALPHA) <= ALPHA_TOL, f"{ALPHA} +-{ALPHA_TOL}"),
            _check("S_q_1hz", fit.S_1hz, _within_factor(fit.S_1hz, S_Q_1HZ, S_Q_FACTOR), f"{S_Q_1HZ:g} x/ {S_Q_FACTOR}"),
            _check("qp_dominates_above_10hz", qp, qp, True),
        ],
        fit={"A": fit.A, "alpha": fit.alpha, "L0": fit.L0, "fc": fit.fc},
    )


def aliasing_analysis(trace, p):
    """Original, frequency-noise and re-aliased spectra of a slow trace."""
    v = trace.filled()
    orig = _slow_spectrum(trace, p.scan_period)
    df = to_frequency_noise(v, p)
    realiased = realias_to_half_e(df, p)
    s_df = welch_psd(df, p.scan_period, segment_len=len(v) // 2)
    s_re = welch_psd(realiased, p.scan_period, segment_len=len(v) // 2)
    return orig, s_df, s_re


def figS1(cfg: RunConfig, out: Path) -> dict:
    p, scale = cfg.params(), cfg.reproduce["scale"]
    trace = slow_trace(cfg.device, cfg.seed, scale)
    orig, s_df, s_re = aliasing_analysis(trace, p)
    band = (WHITE_BELOW, 0.5 / p.scan_period)
    fit_o = fit_power_law_plus_lorentzian(log_bin(orig, 10), band=band, lorentzian_term=False)
    fit_r = fit_power_law_plus_lorentzian(log_bin(s_re, 10), band=band, lorentzian_term=False)
    fit_df = fit_power_law_plus_lorentzian(log_bin(s_df, 10), band=band, lorentzian_term=False)
    drop = float(orig.at(1e-3) / s_re.at(1e-3))
    low = s_re.band(0.0, WHITE_BELOW)
    if len(low) >= 3:
        slope = float(np.polyfit(np.log(low.f), np.log(low.values), 1)[0])
    else:
        slope = float("nan")
    for name, s in (("original_psd", orig), ("freq_noise_psd", s_df), ("realiased_psd", s_re)):
        write_spectrum_csv(log_bin(s, 10), out / f"{name}.csv")
    return _verdict(
        "figS1",
        [
            _check("alpha_original", fit_o.alpha, True, "reported"),
            _check("alpha_realiased", fit_r.alpha, abs(fit_r.alpha - REALIAS_ALPHA) <= REALIAS_TOL, f"{REALIAS_ALPHA} +-{REALIAS_TOL}"),
            _check("power_drop_1e-3hz", drop, DROP_RANGE[0] <= drop <= DROP_RANGE[1], f"[{DROP_RANGE[0]:g}, {DROP_RANGE[1]:g}]"),
            _check("white_slope_below_3e-4hz", slope, np.isfinite(slope) and abs(slope) < 0.5, "|slope| < 0.5"),
            _check("S_df_1hz", fit_df.S_1hz, _within_factor(fit_df.S_1hz, S_DF_1HZ, S_DF_FACTOR), f"{S_DF_1HZ:g} x/ {S_DF_FACTOR}"),
        ],
    )


def fig4(cfg: RunConfig, out: Path) -> dict:
    """Jump catalogue and increment histogram from a jumps-only environment."""
    p, scale = cfg.params(), cfg.reproduce["scale"]
    sp = default_noise_specs(p)
    T = max(10 * p.scan_period, JUMP_SECONDS * scale)
    n_scans = int(T // p.scan_period)
    env = _env(p, n_scans * p.scan_period + 1, 0.2, cfg.seed, telegraph=sp["telegraph"], jumps=sp["jumps"])
    trace = build_trace(fit_scans(run_slow_scans(env, p, n_scans, cfg.seed)))
    _, inc = trace.increments()
    inc = np.asarray(inc)
    events = len(env.jumps.times)
    interval = env.duration / events if events else float("inf")
    core = float(1.4826 * np.median(np.abs(inc - np.median(inc)))) if len(inc) else float("nan")
    tails = bool(np.any(np.abs(inc) > 0.1))
    confined = bool(np.all((inc >= -0.5) & (inc < 0.5)))
    edges = np.linspace(-0.5, 0.5, 101)
    counts, _ = np.histogram(inc, edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    write_histogram_csv(centers, counts, out / "increment_histogram.csv")
    dist = sample_jump_distribution(default_sampler().field, 20_000, seed=cfg.seed)
    write_distribution_csv(dist, out / "jump_sizes.csv")
    weight = jump_probability(sp["jumps"].rate, p.scan_period)
    model = histogram_model(dist, core if core > 0 else CORE_WIDTH, weight, n_scans=len(inc))
    write_histogram_csv(model.bin_centers, model.counts, out / "model_histogram.csv")
    detected = detect_jumps(trace, 0.1)
    detected.to_csv(out / "detected_jumps.csv")
    return _verdict(
        "fig4",
        [
            _check("mean_interval_s", interval, abs(interval / JUMP_INTERVAL - 1) <= JUMP_TOL and events >= MIN_EVENTS, f"{JUMP_INTERVAL:g} +-{JUMP_TOL:.0%} over >= {MIN_EVENTS}"),
            _check("events", events, events >= MIN_EVENTS, f">= {MIN_EVENTS}"),
            _check("core_width_e", core, abs(core / CORE_WIDTH - 1) <= CORE_TOL, f"{CORE_WIDTH} +-{CORE_TOL:.0%}"),
            _check("tails_beyond_0.1e", tails, tails, True),
            _check("confined_half_e", confined, confined, True),
        ],
        detected_interval_s=detected.mean_interval(env.duration),
    )


def figS4(cfg: RunConfig, out: Path) -> dict:
    """Low-band floor and correlated detection, high-band 1 Hz bound."""
    p, scale = cfg.params(), cfg.reproduce["scale"]
    sp = default_noise_specs(p)
    readout = FluxReadout()
    n_spec = max(2, int(round(LOW_SPECTRA * scale)))
    T_low = n_spec * 200.0 + 10.0
    reports = {}
    for c in (0.0, 1.0):
        env = _env(p, T_low, 0.05, cfg.seed, powerlaw=sp["powerlaw"], telegraph=sp["telegraph"], jumps=sp["jumps"], flux=FluxNoiseSpec(sp["flux"].amplitude_at_1hz, sp["flux"].exponent, c))
        reports[c] = run_low_bandwidth_cpsd(env, p, n_spec, seed=cfg.seed, readout=readout).report
    T_high = max(20.0, HIGH_SECONDS * scale)
    env = _env(p, T_high + 1, 1.0 / p.shot_rate, cfg.seed, powerlaw=sp["powerlaw"], telegraph=sp["telegraph"], jumps=sp["jumps"], flux=sp["flux"])
    high = run_high_bandwidth_cpsd(env, p, T_high, cfg.seed, readout=readout).report
    uncorrelated = reports[0.0].stitch(high)
    uncorrelated.to_csv(out / "cpsd_uncorrelated.csv")
    reports[1.0].to_csv(out / "cpsd_correlated_low.csv")
    floor_mean = float(np.mean(reports[0.0].normalized))
    detect = float(np.max(reports[1.0].normalized / reports[1.0].floor))
    bound = correlation_bound(uncorrelated, 1.0)
    return _verdict(
        "figS4",
        [
            _check("low_band_normalized_mean", floor_mean, abs(floor_mean - FLOOR_250) <= FLOOR_TOL, f"{FLOOR_250} +-{FLOOR_TOL}"),
            _check("correlated_over_floor", detect, detect >= DETECT_FACTOR, f">= {DETECT_FACTOR:g}"),
            _check("bound_1hz", bound, abs(bound - BOUND_1HZ) <= BOUND_TOL, f"{BOUND_1HZ} +-{BOUND_TOL}"),
        ],
        n_spectra=n_spec,
        bound_10mhz=correlation_bound(uncorrelated, 1e-2),
    )


DRIVERS = {"fig3b": fig3b, "fig3c": fig3c, "fig4": fig4, "figS1": figS1, "figS4": figS4}


def run_figure(figure: str, cfg: RunConfig, out_dir) -> dict:
    """Run one driver, write its verdict and manifest, return the verdict."""
    if figure not in DRIVERS:
        raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    out = Path(out_dir) / figure
    out.mkdir(parents=True, exist_ok=True)
    verdict = DRIVERS[figure](cfg, out)
    write_json(verdict, out / "verdict.json")
    write_json(cfg.manifest(figure=figure), out / "manifest.json")
    cfg.write_resolved(out)
    return verdict
