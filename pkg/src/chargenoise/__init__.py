"""Offset-charge noise in charge-sensitive transmons: simulation and analysis."""

__version__ = "0.1.0"

from .core import DeviceParams, alias_charge_delta, preset, ramsey_population, transition_frequency
from .cpsd import CpsdReport, FluxReadout, correlation_bound, run_high_bandwidth_cpsd, run_low_bandwidth_cpsd
from .electrostatics import GeometryGrid, induced_charge, sample_jump_distribution, solve_laplace
from .estimation import ChargeTrace, build_trace, detect_jumps, fit_charge_scan, fit_scans, realias_to_half_e, to_frequency_noise
from .noise import (
    EnvironmentTrace,
    FluxNoiseSpec,
    JumpProcessSpec,
    PowerLawSpec,
    TelegraphSpec,
    compose_environment,
    default_noise_specs,
)
from .pulses import PulseSequence, evolve_bloch, reconstruct_fast_charge, run_charge_scan, run_fast_protocol, run_slow_scans
from .spectral import (
    Spectrum,
    cross_psd,
    fit_lorentzian,
    fit_power_law_plus_lorentzian,
    interleaved_cross_psd,
    log_bin,
    stitch_spectra,
    welch_psd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
