"""YAML run configuration with strict key checking and a reproducible hash.

Schema (every key optional; unknown keys are rejected)::

    device: qubitA              # preset name
    device_overrides: {}        # any DeviceParams field
    noise:
      powerlaw: default         # default | off | {amplitude_at_1hz, exponent}
      telegraph: default        # default | off | {gamma}
      jumps: default            # default | off | {flux, sensing_area, polarity}
      flux: default             # default | off | {amplitude_at_1hz, exponent, correlation}
      charge_scale: 1.0
    geometry: {island_w: 40, island_h: 180, gap: 20, h: 1.0}
    protocol: fast              # fast | slow | none
    duration_s: 1.0
    dt_s: null                  # null picks the protocol default
    seed: 0
    out: out
    stream_threshold: 1000000   # shots; larger runs stream to disk in chunks
    normalization: quadratic    # quadratic | linear
    reproduce: {scale: 1.0}     # duration multiplier for reproduce drivers
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .core import PRESETS, DeviceParams, preset
from .noise import FluxNoiseSpec, JumpProcessSpec, PowerLawSpec, TelegraphSpec, default_noise_specs

PROTOCOLS = ("fast", "slow", "none")
NOISE_KEYS = {
    "powerlaw": {"amplitude_at_1hz", "exponent"},
    "telegraph": {"gamma"},
    "jumps": {"flux", "sensing_area", "polarity"},
    "flux": {"amplitude_at_1hz", "exponent", "correlation"},
}
DEFAULT_GEOMETRY = {"island_w": 40, "island_h": 180, "gap": 20, "h": 1.0}
DEFAULT_NOISE = {"powerlaw": "default", "telegraph": "default", "jumps": "default", "flux": "default", "charge_scale": 1.0}


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


@dataclass
class RunConfig:
    device: str = "qubitA"
    device_overrides: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))
    geometry: dict = field(default_factory=lambda: dict(DEFAULT_GEOMETRY))
    protocol: str = "fast"
    duration_s: float = 1.0
    dt_s: Optional[float] = None
    seed: int = 0
    out: str = "out"
    stream_threshold: int = 1_000_000
    normalization: str = "quadratic"
    reproduce: dict = field(default_factory=lambda: {"scale": 1.0})

    def __post_init__(self):
        if self.device not in PRESETS:
            raise ConfigError(f"unknown device {self.device!r}; choose from {sorted(PRESETS)}")
        _check_keys(self.device_overrides, {f.name for f in fields(DeviceParams)} - {"name"}, "device_overrides")
        noise = dict(DEFAULT_NOISE)
        _check_keys(self.noise, DEFAULT_NOISE, "noise")
        noise.update(self.noise)
        for k, allowed in NOISE_KEYS.items():
            v = noise[k]
            if v is None:
                noise[k] = "off"
            elif isinstance(v, str):
                if v not in ("default", "off"):
                    raise ConfigError(f"noise.{k} must be 'default', 'off' or a mapping")
            else:
                _check_keys(v, allowed, f"noise.{k}")
        if not float(noise["charge_scale"]) > 0:
            raise ConfigError("noise.charge_scale must be positive")
        self.noise = noise
        _check_keys(self.geometry, DEFAULT_GEOMETRY, "geometry")
        self.geometry = {**DEFAULT_GEOMETRY, **self.geometry}
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        if self.duration_s < 0:
            raise ConfigError("duration_s must be non-negative")
        if self.dt_s is not None and not self.dt_s > 0:
            raise ConfigError("dt_s must be positive")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed must be an integer in [0, 2**64)")
        if self.stream_threshold < 1:
            raise ConfigError("stream_threshold must be positive")
        if self.normalization not in ("quadratic", "linear"):
            raise ConfigError("normalization must be 'quadratic' or 'linear'")
        _check_keys(self.reproduce, {"scale"}, "reproduce")
        self.reproduce = {"scale": 1.0, **self.reproduce}
        if not float(self.reproduce["scale"]) > 0:
            raise ConfigError("reproduce.scale must be positive")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "RunConfig":
        d = {} if d is None else d
        _check_keys(d, {f.name for f in fields(cls)}, "config")
        return cls(**copy.deepcopy(d))

    def to_dict(self) -> dict:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)

    def params(self) -> DeviceParams:
        return preset(self.device).with_(**self.device_overrides)

    @property
    def dt(self) -> float:
        if self.dt_s is not None:
            return float(self.dt_s)
        p = self.params()
        return 1.0 / p.shot_rate if self.protocol == "fast" else 0.05

    def noise_specs(self) -> dict:
        """Spec objects for compose_environment; disabled components are None."""
        p = self.params()
        base = default_noise_specs(p)
        types = {"powerlaw": PowerLawSpec, "telegraph": TelegraphSpec, "jumps": JumpProcessSpec, "flux": FluxNoiseSpec}
        out = {}
        for k, typ in types.items():
            v = self.noise[k]
            if v == "off":
                out[k] = None
            elif v == "default":
                out[k] = base[k]
            else:
                kw = dict(v)
                if k == "jumps":
                    kw.setdefault("flux", base[k].flux)
                    kw.setdefault("sensing_area", base[k].sensing_area)
                try:
                    out[k] = typ(**kw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"noise.{k}: {exc}") from exc
        if out["jumps"] is not None and self.geometry != DEFAULT_GEOMETRY:
            from dataclasses import replace

            out["jumps"] = replace(out["jumps"], size_sampler=self.jump_sampler())
        return out

    def jump_sampler(self):
        from .electrostatics import default_sampler

        return default_sampler(**{k: float(v) for k, v in self.geometry.items()})

    def config_hash(self) -> str:
        """sha256 of the resolved config; the output directory is excluded."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def manifest(self, **extra) -> dict:
        from . import __version__

        return {"seed": self.seed, "config_sha256": self.config_hash(), "version": __version__, **extra}

    def write_resolved(self, out_dir) -> Path:
        path = Path(out_dir) / "resolved_config.yaml"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        return path


def load_config(path=None, **overrides) -> RunConfig:
    """Read a YAML config (or defaults when ``path`` is None) and apply overrides."""
    d = {}
    if path is not None:
        try:
            d = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    d.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(d)
