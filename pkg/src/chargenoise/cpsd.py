"""Charge-flux cross-spectrum experiment.

Two bands are assembled. The low band alternates a short charge scan with a
flux Ramsey of equal span (several final-gate phases, phase from the first
harmonic).
The high band runs a three-shot cycle (flux, parity, charge) at the fast
duty cycle and cross-correlates the flux stream with the parity-conditioned
charge stream.

At the flux-sensitive bias the idle is chosen so both parity bands land on
the same state at the charge sweet spot. A residual charge ``r`` away from
that spot adds a parity-signed second-order phase ``s * curvature * r**2``.
Through the parity telegraph this leaks into the conditioned charge stream,
which carries a small parity-signed error of its own, and sets the floor of
the uncorrelated cross-spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DeviceParams, alias_charge_delta
from .estimation import build_trace, fit_charge_scan
from .noise import EnvironmentTrace
from .pulses import (
    IDLE,
    MEASURE,
    ROT,
    X2,
    PulseSequence,
    charge_transfer_gain,
    conditioned_offset,
    evolve_bloch,
    fast_charge_sequence,
    idle_detuning,
    parity_sequence,
    run_charge_scan,
)
from .rng import substream
from .spectral import CrossSpectrum, cross_psd


@dataclass(frozen=True)
class FluxReadout:
    """Flux-sensitive operating point.

    ``slope`` is d(omega)/d(Phi) in rad/s per Phi0. ``leak_curvature`` is the
    parity-signed phase (rad) per e^2 of residual charge. The default
    ``pi**3 / 2`` follows from a charge phase ``s * pi * cos(pi * r)``, the
    idle that maps both parity bands onto one state at ``r = 0``.
    """

    slope: float = 2 * np.pi * 5e9
    idle_low: float = 1e-6
    idle_high: float = 0.5e-6
    n_phases: int = 8
    shots_per_phase: int = 25
    leak_curvature: float = np.pi**3 / 2
    bias: str = "flux-sensitive, charge sweet spot"

    def __post_init__(self):
        if self.slope == 0:
            raise ValueError("flux slope must be non-zero at the flux-sensitive bias")
        if not (self.idle_low > 0 and self.idle_high > 0):
            raise ValueError("flux idles must be positive")
        if self.n_phases < 3:
            raise ValueError("need at least three final-gate phases")

    def gain(self, idle: float) -> float:
        """Phase (rad) per Phi0 for an idle."""
        return self.slope * idle


@dataclass
class CpsdReport:
    """Normalized charge-flux CPSD magnitude with its statistical floor."""

    f: np.ndarray
    s_q: np.ndarray
    s_phi: np.ndarray
    s_qphi: np.ndarray
    n_eff: np.ndarray
    band: np.ndarray = field(default_factory=lambda: np.empty(0, dtype="<U4"))
    meta: dict = field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        den = np.sqrt(self.s_q * self.s_phi)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, np.abs(self.s_qphi) / den, 0.0)

    @property
    def floor(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.n_eff)

    @property
    def s_qphi_mag(self) -> np.ndarray:
        return np.abs(self.s_qphi)

    @classmethod
    def from_cross(cls, cs: CrossSpectrum, band: str, meta=None) -> "CpsdReport":
        return cls(cs.f, cs.s_a, cs.s_b, cs.s_ab, cs.n_eff, np.full(len(cs.f), band), dict(meta or {}))

    def select(self, band: str) -> "CpsdReport":
        m = self.band == band
        return CpsdReport(self.f[m], self.s_q[m], self.s_phi[m], self.s_qphi[m], self.n_eff[m], self.band[m], self.meta)

    def stitch(self, other: "CpsdReport") -> "CpsdReport":
        """Concatenate with a higher band; bins of ``other`` below the top of ``self`` are dropped."""
        keep = other.f > self.f[-1] if len(self.f) else np.ones(len(other.f), bool)
        cat = lambda a, b: np.concatenate([a, b[keep]])  # noqa: E731
        return CpsdReport(
            cat(self.f, other.f),
            cat(self.s_q, other.s_q),
            cat(self.s_phi, other.s_phi),
            cat(self.s_qphi, other.s_qphi),
            cat(self.n_eff, other.n_eff),
            cat(self.band, other.band),
            {**self.meta, **other.meta},
        )

    def to_csv(self, path):
        from .io import write_cpsd_csv

        write_cpsd_csv(self, path)


def correlation_bound(report: CpsdReport, f: float) -> float:
    """Upper bound on the charge-flux correlation at ``f``: max(measured, floor)."""
    if len(report.f) == 0:
        raise ValueError("empty report")
    i = int(np.argmin(np.abs(np.log(report.f / f))))
    return float(max(report.normalized[i], report.floor[i]))


def leak_level(report: CpsdReport, f_min: float = 2.0) -> float:
    """Magnitude of the band-averaged complex cross-spectrum above ``f_min``.

    Averaging across bins keeps the coherent parity-signed leak and suppresses
    the random-phase statistical part.
    """
    m = report.f >= f_min
    if not m.any():
        raise ValueError("no bins above f_min")
    return float(np.abs(np.mean(report.s_qphi[m])))


def _flux_ramsey_sequence(idle: float, theta: float, gate_duration: float) -> PulseSequence:
    return PulseSequence((X2, (IDLE, idle), (ROT, theta), MEASURE), gate_duration=gate_duration)


def _flux_phase(readout: FluxReadout, idle, flux, parity, offset_e):
    """Flux phase plus the second-order charge leak.

    ``offset_e`` is the true charge minus the bias estimate. A whole-electron
    error in the estimate moves the bias by half a period in 2e units, which
    swaps the parity bands, so the leak sign follows ``cos(pi * offset)``.
    """
    r = alias_charge_delta(offset_e)
    branch = np.where(np.cos(np.pi * np.asarray(offset_e)) >= 0, 1, -1)
    return readout.gain(idle) * flux + parity * branch * readout.leak_curvature * r**2


def run_flux_ramsey(env: EnvironmentTrace, params: DeviceParams, readout: FluxReadout, t_start: float, delta_e: float, rng, span: Optional[float] = None):
    """Phase (rad) from a Ramsey with stepped final-gate phase.

    Returns the first-harmonic phase estimate in (-pi, pi].
    """
    span = params.scan_period if span is None else span
    M, n = readout.n_phases, readout.shots_per_phase
    if not env.covers(t_start, t_start + span):
        raise ValueError("environment does not cover the flux Ramsey")
    thetas = 2 * np.pi * np.arange(M) / M
    t = t_start + span * np.arange(M * n) / (M * n)
    k = env.index(t)
    th = np.tile(thetas, n)
    phi = _flux_phase(readout, readout.idle_low, env.flux[k], env.parity[k], env.charge_e[k] - delta_e)
    # evolve each distinct final phase with its own sequence
    p = np.empty(M * n)
    for j, theta in enumerate(thetas):
        m = th == theta
        seq = _flux_ramsey_sequence(readout.idle_low, theta, params.gate_duration)
        p[m] = evolve_bloch(seq, phi[m] / readout.idle_low, params.decay_d, params.visibility_nu)
    out = rng.random(M * n) < p
    p_hat = np.array([out[th == theta].mean() for theta in thetas])
    return float(np.arctan2(np.sum(p_hat * np.sin(thetas)), np.sum(p_hat * np.cos(thetas))))


@dataclass
class LowBandRun:
    report: CpsdReport
    t: np.ndarray
    charge_e: np.ndarray
    flux: np.ndarray


def low_band_cycles(n_spectra: int, segment_len: int = 40) -> int:
    return int(n_spectra) * int(segment_len)


def run_low_bandwidth_cpsd(
    env: EnvironmentTrace,
    params: DeviceParams,
    n_spectra: int = 250,
    seed=0,
    readout: Optional[FluxReadout] = None,
    cycle_period: float = 5.0,
    segment_len: int = 40,
) -> LowBandRun:
    """Alternate charge scans and flux Ramseys, then average ``n_spectra`` CPSDs.

    Each cycle is a charge scan followed by a flux Ramsey of equal span. With
    the defaults one spectrum is acquired every 200 s (5e-3 Hz) and covers
    5e-3 to 0.1 Hz; the short cycle keeps scan-to-scan charge changes well
    inside the +-0.5 e tracking window.
    """
    readout = FluxReadout() if readout is None else readout
    cycle = float(cycle_period)
    half = 0.5 * cycle
    n_cycles = low_band_cycles(n_spectra, segment_len)
    if not env.covers(env.t0, env.t0 + n_cycles * cycle):
        raise ValueError(f"environment shorter than {n_cycles} cycles of {cycle} s")
    fits, phases = [], []
    prior = None
    for i in range(n_cycles):
        t0 = env.t0 + i * cycle
        scan = run_charge_scan(env, params, t0, seed=substream(seed, "scan", i), span=half)
        fit = fit_charge_scan(scan, prior=prior)
        if fit.converged:
            prior = fit.delta_e
        fits.append(fit)
        ref = prior if prior is not None else 0.0
        phases.append(run_flux_ramsey(env, params, readout, t0 + half, ref, substream(seed, "flux", i), span=half))
    trace = build_trace(fits)
    q = trace.filled()
    flux = np.unwrap(np.asarray(phases)) / readout.gain(readout.idle_low)
    cs = cross_psd(q, flux, cycle, segment_len=segment_len)
    meta = {"cycle_s": cycle, "n_spectra": n_spectra, "segment_len": segment_len}
    return LowBandRun(CpsdReport.from_cross(cs, "low", meta), trace.t, q, flux)


@dataclass
class HighBandRun:
    report: CpsdReport
    charge_e: np.ndarray
    flux: np.ndarray
    cycle: float


def run_high_bandwidth_cpsd(
    env: EnvironmentTrace,
    params: DeviceParams,
    duration: float,
    seed=0,
    readout: Optional[FluxReadout] = None,
    segment_s: float = 10.0,
    bins_per_decade: int = 10,
    band=(0.1, 100.0),
) -> HighBandRun:
    """Three-shot cycle (flux, parity, charge) with recalibration blocks.

    Each recal block starts with an instantaneous charge scan; the flux bias
    phase is re-zeroed from the previous block's mean flux reading.
    """
    readout = FluxReadout() if readout is None else readout
    cycle = 1.0 / params.shot_rate
    if env.dt > cycle * (1 + 1e-9):
        raise ValueError("environment sampling is coarser than the shot cycle")
    n_cycles = int(np.floor(duration / cycle + 1e-9))
    per_block = max(1, int(round(params.recal_period / cycle)))
    g_flux = readout.gain(readout.idle_high)
    d, nu = params.decay_d, params.visibility_nu
    par_seq, chg_seq = parity_sequence(params), fast_charge_sequence(params)
    par_dur = par_seq.duration + params.readout_time + params.dead_time
    flux_dur = readout.idle_high + 2 * params.gate_duration + params.readout_time + params.dead_time
    off = np.array([0.0, flux_dur, flux_dur + par_dur])
    gain_q = charge_transfer_gain(params)
    y0 = conditioned_offset(params)
    rng = substream(seed, "shots")
    q_out = np.empty(n_cycles)
    f_out = np.empty(n_cycles)
    delta_prev = None
    psi = 0.0
    start, block = 0, 0
    while start < n_cycles:
        stop = min(start + per_block, n_cycles)
        t_blk = env.t0 + start * cycle
        fit = fit_charge_scan(run_charge_scan(env, params, t_blk, seed=substream(seed, "scan", block), span=0.0), prior=delta_prev)
        if delta_prev is None:
            delta = fit.delta_e if fit.converged else 0.0
        else:
            delta = delta_prev + (alias_charge_delta(fit.delta_e - delta_prev) if fit.converged else 0.0)
        delta_prev = delta
        m = stop - start
        tc = env.t0 + cycle * np.arange(start, stop)
        k = env.index(tc[:, None] + off[None, :])
        s = env.parity[k]
        q = env.charge_e[k]
        # flux shot: X/2 - idle - R(pi/2 + psi)/2 reads sin(phase - psi)
        phase = _flux_phase(readout, readout.idle_high, env.flux[k[:, 0]], s[:, 0], q[:, 0] - delta) - psi
        p_f = 0.5 * (d + nu * np.sin(phase))
        # parity and charge shots
        det_p = idle_detuning(params, -0.5 * delta + 0.5 * q[:, 1], s[:, 1])
        det_c = idle_detuning(params, -0.25 - 0.5 * delta + 0.5 * q[:, 2], s[:, 2])
        p_p = evolve_bloch(par_seq, det_p, d, nu)
        p_c = evolve_bloch(chg_seq, det_c, d, nu)
        u = rng.random((m, 3))
        o_f = u[:, 0] < p_f
        o_p = u[:, 1] < p_p
        o_c = u[:, 2] < p_c
        y = (2.0 * o_c - 1.0) * (2.0 * o_p - 1.0)
        q_out[start:stop] = delta + (y - y0) / gain_q
        phi_hat = psi + (2.0 * o_f - d) / nu
        f_out[start:stop] = phi_hat / g_flux
        psi = float(np.mean(phi_hat))
        start = stop
        block += 1
    seg = int(round(segment_s / cycle))
    if n_cycles < seg:
        raise ValueError("duration shorter than one CPSD segment")
    cs = cross_psd(q_out, f_out, cycle, segment_len=seg).band(*band).log_binned(bins_per_decade)
    meta = {"cycle_s": cycle, "segment_s": segment_s, "duration_s": duration}
    return HighBandRun(CpsdReport.from_cross(cs, "high", meta), q_out, f_out, cycle)
