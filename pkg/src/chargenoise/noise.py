"""Synthetic charge environment: 1/f^alpha charge noise, QP parity telegraph,
Poisson charge impingement, and flux noise."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import DeviceParams
from .rng import as_generator, substream

MAX_SAMPLES = 2**31

# Sea-level cosmic-ray flux (per cm^2 s), reported only for comparison.
COSMIC_RAY_FLUX = 0.025


@dataclass(frozen=True)
class PowerLawSpec:
    """One-sided PSD ``amplitude_at_1hz / f**exponent`` on ``[f_min, f_max]``."""

    amplitude_at_1hz: float
    exponent: float
    f_min: float = 0.0
    f_max: float = np.inf

    def __post_init__(self):
        if not self.amplitude_at_1hz > 0:
            raise ValueError("power-law amplitude must be positive")
        if not 0.0 <= self.exponent < 3.0:
            raise ValueError("power-law exponent must lie in [0, 3)")
        if not self.f_min < self.f_max:
            raise ValueError("f_min must be below f_max")


@dataclass(frozen=True)
class TelegraphSpec:
    """Symmetric +-1 telegraph with correlation exp(-gamma |tau|).

    Each direction switches at ``gamma / 2`` so the PSD knee sits at
    ``gamma / 2 pi``.
    """

    gamma: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("telegraph rate must be non-negative")

    @property
    def switch_rate(self) -> float:
        return 0.5 * self.gamma

    @property
    def knee_hz(self) -> float:
        return self.gamma / (2 * np.pi)


@dataclass(frozen=True)
class JumpProcessSpec:
    """Poisson impingement of charges over a sensing area.

    ``size_sampler(rng, n)`` returns ``n`` signed induced charges in e. When
    it is None the default island geometry is solved once and sampled.
    """

    flux: float
    sensing_area: float
    size_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    polarity: str = "symmetric"

    def __post_init__(self):
        if self.flux < 0 or self.sensing_area < 0:
            raise ValueError("flux and sensing area must be non-negative")
        if self.polarity not in ("symmetric", "positive", "negative"):
            raise ValueError(f"unknown polarity {self.polarity!r}")

    @property
    def rate(self) -> float:
        return self.flux * self.sensing_area


@dataclass(frozen=True)
class FluxNoiseSpec:
    """Flux noise ``amplitude_at_1hz / f**exponent`` (Phi0^2/Hz).

    ``correlation`` mixes in the power-law charge component: the flux becomes
    ``sqrt(1-c^2) * independent + c * kappa * powerlaw`` with kappa matching
    the two 1 Hz amplitudes, so ``c`` is the coherence with the 1/f charge
    where the exponents agree.
    """

    amplitude_at_1hz: float
    exponent: float = 1.0
    correlation: float = 0.0

    def __post_init__(self):
        if self.amplitude_at_1hz < 0:
            raise ValueError("flux noise amplitude must be non-negative")
        if abs(self.correlation) > 1:
            raise ValueError("correlation must lie in [-1, 1]")
        if not 0.0 <= self.exponent < 3.0:
            raise ValueError("flux noise exponent must lie in [0, 3)")


@dataclass
class JumpEvents:
    times: np.ndarray
    sizes: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass
class EnvironmentTrace:
    """Sampled environment; sample ``k`` covers ``[t0 + k dt, t0 + (k+1) dt)``."""

    dt: float
    charge_e: np.ndarray
    parity: np.ndarray
    flux: np.ndarray
    seed: int
    t0: float = 0.0
    jumps: JumpEvents = field(default_factory=lambda: JumpEvents(np.empty(0), np.empty(0)))

    def __post_init__(self):
        n = len(self.charge_e)
        if len(self.parity) != n or len(self.flux) != n:
            raise ValueError("environment series must share one length")

    def __len__(self):
        return len(self.charge_e)

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def index(self, t):
        """Sample index holding time ``t`` (sample-and-hold lookup)."""
        k = np.floor((np.asarray(t, dtype=float) - self.t0) / self.dt + 1e-9).astype(np.int64)
        if np.any(k < 0) or np.any(k >= len(self)):
            raise ValueError("requested time lies outside the environment trace")
        return k

    def covers(self, t_start: float, t_stop: float) -> bool:
        return t_start >= self.t0 - 1e-12 and t_stop <= self.t0 + self.duration + 1e-9

    def to_csv(self, path):
        from .io import write_environment_csv

        write_environment_csv(self, path)


def _check_n(n, dt):
    if n < 2:
        raise ValueError("need at least two samples")
    if not dt > 0:
        raise ValueError("dt must be positive")


def synth_power_law(spec: PowerLawSpec, n: int, dt: float, seed) -> np.ndarray:
    """Gaussian series with one-sided PSD ``A / f**alpha`` by spectral shaping.

    Independent complex Gaussian Fourier bins are scaled so the expected
    one-sided periodogram equals the target on every bin, then inverse
    transformed. The DC bin is zero, so the output has zero mean.
    """
    _check_n(n, dt)
    rng = as_generator(seed, "powerlaw")
    f = np.fft.rfftfreq(n, dt)
    target = np.zeros_like(f)
    band = (f > 0) & (f >= spec.f_min) & (f <= spec.f_max)
    target[band] = spec.amplitude_at_1hz * f[band] ** (-spec.exponent)
    # E|X_k|^2 = S n / (2 dt) for interior bins, S n / dt at Nyquist
    scale = np.sqrt(target * n / (4.0 * dt))
    X = (rng.standard_normal(len(f)) + 1j * rng.standard_normal(len(f))) * scale
    X[0] = 0.0
    if n % 2 == 0:
        X[-1] = rng.standard_normal() * np.sqrt(target[-1] * n / dt)
    return np.fft.irfft(X, n)


def synth_telegraph(spec: TelegraphSpec, n: int, dt: float, seed) -> np.ndarray:
    """Two-level Markov chain in {+1, -1}, exact at the sampling instants."""
    _check_n(n, dt)
    if dt * spec.knee_hz >= 0.5:
        warnings.warn(
            f"telegraph knee {spec.knee_hz:.3g} Hz is at or above Nyquist for dt={dt:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = as_generator(seed, "telegraph")
    start = 1 if rng.random() < 0.5 else -1
    p_flip = 0.5 * (1.0 - np.exp(-spec.gamma * dt))
    flips = rng.random(n - 1) < p_flip
    n_flips = np.concatenate(([0], np.cumsum(flips)))
    return np.where(n_flips % 2 == 0, start, -start).astype(np.int8)


def default_size_sampler():
    from .electrostatics import default_sampler

    return default_sampler()


def synth_jumps(spec: JumpProcessSpec, n: int, dt: float, seed):
    """Cumulative charge staircase from Poisson impingement events.

    Returns ``(series, JumpEvents)``; event ``j`` at time ``t_j`` affects every
    sample whose start time is at or after ``t_j``.
    """
    _check_n(n, dt)
    rng = as_generator(seed, "jumps")
    duration = n * dt
    count = rng.poisson(spec.rate * duration) if spec.rate > 0 else 0
    if count == 0:
        return np.zeros(n), JumpEvents(np.empty(0), np.empty(0))
    times = np.sort(rng.uniform(0.0, duration, count))
    sampler = spec.size_sampler or default_size_sampler()
    sizes = np.asarray(sampler(rng, count), dtype=float)
    if spec.polarity == "symmetric":
        sizes = sizes * rng.choice(np.array([-1.0, 1.0]), size=count)
    elif spec.polarity == "negative":
        sizes = -np.abs(sizes)
    else:
        sizes = np.abs(sizes)
    cumulative = np.concatenate(([0.0], np.cumsum(sizes)))
    k = np.searchsorted(times, dt * np.arange(n), side="right")
    return cumulative[k], JumpEvents(times, sizes)


def default_noise_specs(params: DeviceParams) -> dict:
    """Noise specs matching the named device preset."""
    from .electrostatics import rate_to_flux

    area = sensing_area_cm2()
    if params.name == "qubitB":
        powerlaw = PowerLawSpec(1.6e-4, 1.87)
        flux = rate_to_flux(1 / 290.0, area)
    else:
        powerlaw = PowerLawSpec(2.9e-4, 1.93)
        flux = 17.0
    return {
        "powerlaw": powerlaw,
        "telegraph": TelegraphSpec(params.parity_rate_gamma),
        "jumps": JumpProcessSpec(flux=flux, sensing_area=area),
        "flux": FluxNoiseSpec(1e-12, 1.0, 0.0),
    }


def sensing_area_cm2(jump_interval: float = 250.0, flux: float = 17.0) -> float:
    """Area that turns ``flux`` into one event per ``jump_interval`` seconds."""
    return 1.0 / (jump_interval * flux)


def compose_environment(
    params: DeviceParams,
    duration: float,
    dt: float,
    seed: int,
    powerlaw: Optional[PowerLawSpec] = None,
    telegraph: Optional[TelegraphSpec] = None,
    jumps: Optional[JumpProcessSpec] = None,
    flux: Optional[FluxNoiseSpec] = None,
    t0: float = 0.0,
    charge_scale: float = 1.0,
) -> EnvironmentTrace:
    """Assemble an environment from independent labelled substreams.

    Components left as None contribute nothing (parity stays +1).
    ``charge_scale`` multiplies the whole charge series. A non-zero flux
    ``correlation`` mixes in the unscaled power-law charge component, so the
    flux spectrum keeps its own amplitude.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n_float = duration / dt
    if n_float > MAX_SAMPLES:
        raise OverflowError(f"{n_float:.3g} samples exceeds the {MAX_SAMPLES} sample limit")
    n = int(round(n_float))
    if n < 2:
        empty = np.zeros(n)
        return EnvironmentTrace(dt, empty, np.ones(n, dtype=np.int8), empty.copy(), seed, t0)

    charge = np.zeros(n)
    smooth = None
    if powerlaw is not None:
        smooth = synth_power_law(powerlaw, n, dt, substream(seed, "powerlaw"))
        charge += smooth
    events = JumpEvents(np.empty(0), np.empty(0))
    if jumps is not None:
        staircase, events = synth_jumps(jumps, n, dt, substream(seed, "jumps"))
        charge += staircase
        events = JumpEvents(events.times + t0, events.sizes)
    charge *= charge_scale

    if telegraph is not None:
        parity = synth_telegraph(telegraph, n, dt, substream(seed, "telegraph"))
    else:
        parity = np.ones(n, dtype=np.int8)

    flux_series = np.zeros(n)
    if flux is not None:
        c = flux.correlation
        if flux.amplitude_at_1hz > 0 and abs(c) < 1:
            own = PowerLawSpec(flux.amplitude_at_1hz, flux.exponent)
            flux_series += np.sqrt(1 - c * c) * synth_power_law(own, n, dt, substream(seed, "flux"))
        if c != 0:
            if powerlaw is None:
                raise ValueError("charge-flux correlation needs a power-law charge spectrum")
            # correlate with the 1/f component only; jumps stay charge-only
            kappa = np.sqrt(flux.amplitude_at_1hz / powerlaw.amplitude_at_1hz)
            flux_series += c * kappa * smooth
    return EnvironmentTrace(dt, charge, parity, flux_series, seed, t0, events)


def analytic_psd(spec) -> Callable[[np.ndarray], np.ndarray]:
    """Closed-form one-sided PSD of a noise spec as a function of f (Hz).

    The telegraph Lorentzian ``4 G / (G^2 + (2 pi f)^2)`` integrates to the
    unit variance of a +-1 process.
    """
    if isinstance(spec, (PowerLawSpec, FluxNoiseSpec)):
        A, alpha = spec.amplitude_at_1hz, spec.exponent

        def psd(f):
            return A * np.asarray(f, dtype=float) ** (-alpha)

        return psd
    if isinstance(spec, TelegraphSpec):
        g = spec.gamma

        def psd(f):
            w = 2 * np.pi * np.asarray(f, dtype=float)
            return 4.0 * g / (g * g + w * w)

        return psd
    raise TypeError(f"no analytic PSD for {type(spec).__name__}")
