"""Acceptance criteria, one test and one summary line each."""

import time
import warnings

import numpy as np
import pytest

from chargenoise import reproduce
from chargenoise.config import RunConfig
from chargenoise.core import preset, ramsey_population
from chargenoise.electrostatics import GeometryGrid, induced_charge, sample_jump_distribution, solve_laplace
from chargenoise.estimation import fit_charge_scan
from chargenoise.noise import TelegraphSpec, synth_telegraph
from chargenoise.pulses import charge_scan_sequence, evolve_bloch, idle_detuning, run_charge_scan
from chargenoise.spectral import interleaved_cross_psd, welch_psd
from conftest import record_criterion, static_env

pytestmark = pytest.mark.acceptance


def _checks_line(verdict):
    return "; ".join(f"{k}={_fmt(c['value'])} ({c['target']}{'' if c['passed'] else ' MISSED'})" for k, c in verdict["checks"].items())


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


@pytest.fixture(scope="module")
def out_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def cfg():
    return RunConfig(seed=0)


def _run(fig, cfg, out_dir, n):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v = reproduce.run_figure(fig, cfg, out_dir)
    record_criterion(n, v["passed"], f"{fig}: {_checks_line(v)}")
    return v


def test_c1_scan_expectation_exact():
    p = preset("qubitA")
    t0 = time.perf_counter()
    ng = np.linspace(-1.0, 1.0, 1000)
    seq = charge_scan_sequence(p)
    target = ramsey_population(p, ng)
    err = 0.0
    for s in (np.ones(1000, int), -np.ones(1000, int), synth_telegraph(TelegraphSpec(p.parity_rate_gamma), 1000, 1e-4, 0)):
        got = evolve_bloch(seq, idle_detuning(p, ng, s), p.decay_d, p.visibility_nu)
        err = max(err, float(np.max(np.abs(got - target))))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-12 and elapsed < 1.0
    record_criterion(1, ok, f"max |scan - closed form| = {err:.2e} (<= 1e-12), {elapsed * 1e3:.0f} ms (< 1 s)")
    assert ok


def test_c2_charge_psd_round_trip(cfg, out_dir):
    v = _run("fig3c", cfg, out_dir, 2)
    assert v["passed"]


def test_c3_parity_knee(cfg, out_dir):
    v = _run("fig3b", cfg, out_dir, 3)
    assert v["passed"]


def _fit_sigma(device, n=80):
    p = preset(device)
    sig, err = [], []
    for s in range(n):
        env = static_env(0.123, n=int(p.scan_period * 10) + 2)
        f = fit_charge_scan(run_charge_scan(env, p, 0.0, seed=s))
        sig.append(f.sigma_e)
        err.append(f.delta_e - 0.123)
    return float(np.median(sig)), float(np.std(err))


def test_c4_fit_precision():
    sa, ea = _fit_sigma("qubitA")
    sb, eb = _fit_sigma("qubitB")
    ok = abs(sa / 0.02 - 1) <= 0.3 and abs(sb / 0.01 - 1) <= 0.3
    record_criterion(4, ok, f"qubitA sigma={sa:.4f} e (scatter {ea:.4f}), qubitB sigma={sb:.4f} e (scatter {eb:.4f}); targets 0.02/0.01 +-30%")
    assert ok


def test_c5_jump_statistics(cfg, out_dir):
    v = _run("fig4", cfg, out_dir, 5)
    assert v["passed"]


def test_c6_electrostatics():
    # long thin island: far from its ends the gap potential is the parallel-plate ramp
    long = solve_laplace(GeometryGrid.island_in_cavity(20, 400, 20, 1.0))
    x = np.arange(1, 20)
    row = long.phi[210]
    strip_err = float(np.max(np.abs(row[1:20] - x / 20) / (x / 20)))
    mid = float(induced_charge(long, 10.0, 210.0))
    strip_err = max(strip_err, abs(mid / -0.5 - 1))
    field = solve_laplace(GeometryGrid.island_in_cavity())
    rng = np.random.default_rng(0)
    q = induced_charge(field, rng.uniform(0, 80, 5000), rng.uniform(0, 220, 5000))
    in_range = bool(np.all((q >= -1.0) & (q <= 0.0)))
    fr = [sample_jump_distribution(solve_laplace(GeometryGrid.island_in_cavity(h=h)), 40_000, seed=1).fraction_above(0.1) for h in (2.0, 1.0)]
    drift = abs(fr[0] / fr[1] - 1)
    ok = strip_err < 0.01 and in_range and drift < 0.02
    record_criterion(6, ok, f"strip max rel err={strip_err:.2e} (< 1%, midpoint {mid:+.4f} e), induced in [-1, 0]: {in_range}, refinement drift={drift:.2e} (< 0.02)")
    assert ok


def test_c7_aliasing(cfg, out_dir):
    v = _run("figS1", cfg, out_dir, 7)
    assert v["passed"]


def test_c8_projection_noise_suppression():
    rng = np.random.default_rng(8)
    dt = 1e-4
    shots = 2.0 * (rng.random(6_000_000) < 0.5) - 1.0  # 600 s at 10 kHz
    white = 2.0 * np.var(shots) * dt
    seg = 2**13
    direct = welch_psd(shots, dt, segment_len=seg)
    levels = {}
    for k in (1, 2, 4):
        s = interleaved_cross_psd(shots, dt, segment_len=seg // k, overlap=0.0)
        levels[s.n_avg] = float(np.sqrt(np.mean(s.values**2))) / white
    ns = sorted(levels)
    suppression = np.mean(direct.values) / (levels[ns[0]] * white)
    scale_ok = all(abs(levels[ns[0]] / levels[n] / np.sqrt(n / ns[0]) - 1) <= 0.25 for n in ns[1:])
    ok = suppression >= 5 and scale_ok
    detail = ", ".join(f"N={n}: {levels[n]:.4f}" for n in ns)
    record_criterion(8, ok, f"direct/interleaved = {suppression:.1f} (>= 5); rms floor/white {detail} (1/sqrt(N) +-25%: {scale_ok})")
    assert ok


def test_c9_cpsd_floor(cfg, out_dir):
    v = _run("figS4", cfg, out_dir, 9)
    assert v["passed"]


def test_c10_determinism(tmp_path):
    small = RunConfig(seed=11, reproduce={"scale": 0.02})
    same = True
    bad = []
    for fig in reproduce.FIGURES:
        digests = []
        for run in ("a", "b"):
            reproduce.slow_trace.cache_clear()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                reproduce.run_figure(fig, small, tmp_path / run)
            files = sorted((tmp_path / run / fig).glob("*.csv"))
            digests.append({f.name: f.read_bytes() for f in files})
        if digests[0] != digests[1] or not digests[0]:
            same = False
            bad.append(fig)
    record_criterion(10, same, f"re-run CSVs byte-identical for {', '.join(reproduce.FIGURES)} at scale 0.02" + (f"; differ: {bad}" if bad else ""))
    assert same
