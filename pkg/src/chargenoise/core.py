"""Device constants, charge arithmetic and the Ramsey charge-tomography law.

Conventions
-----------
Offset charge ``ng`` is dimensionless in units of 2e, so the qubit frequency
is ``omega_bar + s * dispersion * cos(2 pi ng)``. Every user-facing charge
(traces, histograms, spectra) is in units of e, i.e. ``2 * ng``.
Parity is a sign ``s`` in {+1, -1}; flipping it is the same as shifting
``ng`` by 0.5 (one electron).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DeviceParams:
    """Static constants of one charge-sensitive qubit and its readout.

    Frequencies named ``*_over_h`` are in GHz; ``omega_bar``, ``dispersion``
    and ``parity_rate_gamma`` are angular (rad/s). ``dispersion`` is the full
    amplitude of the cosine charge dependence.
    """

    ej_over_h: float = 10.8
    ec_over_h: float = 0.39
    omega_bar: float = TWO_PI * 5.38e9
    dispersion: float = TWO_PI * 600e3
    visibility_nu: float = 0.8
    decay_d: float = 0.9
    parity_rate_gamma: float = TWO_PI * 255.0
    shot_rate: float = 10e3
    scan_period: float = 20.0
    recal_period: float = 15.0
    scan_points: int = 25
    scan_shots: int = 8
    gate_duration: float = 40e-9
    readout_time: float = 1e-6
    dead_time: float = 1e-6
    # idle of the fast charge shot, as a fraction of pi/dispersion
    fast_charge_idle_fraction: float = 1.0 / np.pi**2
    name: str = "custom"

    def __post_init__(self):
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")
        if not 0.0 < self.visibility_nu <= 1.0:
            raise ValueError("visibility_nu must lie in (0, 1]")
        if not 0.0 < self.decay_d < 2.0:
            raise ValueError("decay_d must lie in (0, 2)")
        # P1 = (d +/- nu)/2 must stay a probability
        if self.decay_d - self.visibility_nu < 0 or self.decay_d + self.visibility_nu > 2:
            raise ValueError("decay_d and visibility_nu give probabilities outside [0, 1]")
        if self.parity_rate_gamma < 0:
            raise ValueError("parity_rate_gamma must be non-negative")
        for field in ("shot_rate", "scan_period", "recal_period"):
            if not getattr(self, field) > 0:
                raise ValueError(f"{field} must be positive")
        if self.scan_points < 2 or self.scan_shots < 1:
            raise ValueError("scan budget needs >= 2 points and >= 1 shot per point")

    @property
    def ej_over_ec(self) -> float:
        return self.ej_over_h / self.ec_over_h

    @property
    def ramsey_idle(self) -> float:
        """Idle time pi / dispersion used by the charge-scan sequence."""
        return np.pi / self.dispersion

    @property
    def fast_charge_idle(self) -> float:
        return self.fast_charge_idle_fraction * self.ramsey_idle

    @property
    def parity_idle(self) -> float:
        """Idle mapping the two parity bands to opposite poles (phase pi/2)."""
        return 0.5 * self.ramsey_idle

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "DeviceParams":
        return replace(self, **changes)


PRESETS = {
    "qubitA": DeviceParams(name="qubitA"),
    # Same dispersion as A (not derived from EJ/EC); 30 s cycle with a larger
    # shot budget per point gives the 0.01e fit width.
    "qubitB": DeviceParams(ej_over_h=9.9, scan_period=30.0, scan_shots=20, name="qubitB"),
}


def preset(name: str) -> DeviceParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown device preset {name!r}; choose from {sorted(PRESETS)}") from None


def ng_to_e(ng):
    """Offset charge in 2e units -> units of e."""
    return 2.0 * np.asarray(ng, dtype=float)


def e_to_ng(q_e):
    return 0.5 * np.asarray(q_e, dtype=float)


def check_parity(parity):
    s = np.asarray(parity)
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("parity states must be +1 or -1")
    return s


def transition_frequency(params: DeviceParams, ng, parity=1):
    """Qubit 0-1 angular frequency on the parity band ``parity``."""
    s = check_parity(parity)
    return params.omega_bar + s * params.dispersion * np.cos(TWO_PI * np.asarray(ng, dtype=float))


def ramsey_population(params: DeviceParams, ng_total):
    """Excited-state probability of the X/2 - idle(pi/dispersion) - X/2 scan.

    ``ng_total`` is the summed applied and intrinsic offset charge (2e units).
    The result is even in the accumulated phase and so identical for both
    parity bands.
    """
    ng_total = np.asarray(ng_total, dtype=float)
    return 0.5 * (params.decay_d + params.visibility_nu * np.cos(np.pi * np.cos(TWO_PI * ng_total)))


def alias_charge_delta(delta_e):
    """Wrap a charge change (units of e) into [-0.5, 0.5).

    >>> float(alias_charge_delta(0.6))
    -0.4
    """
    delta_e = np.asarray(delta_e, dtype=float)
    wrapped = delta_e - np.floor(delta_e + 0.5)
    # floating residue can land exactly on +0.5
    wrapped = np.where(wrapped >= 0.5, wrapped - 1.0, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped
