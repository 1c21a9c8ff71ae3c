"""Run configuration: one TOML file, flag overrides, named seed streams.

Every tool run resolves to a single RunConfig; its JSON form is echoed
into the header of every output artifact so results stay auditable.
Randomness flows from the one top-level seed through named sub-streams
(derive_seed), keeping the corpus, the measurement noise, and the rally
draws independently reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .corpus import HitZone, LaunchRanges
from .dynamics import AeroParams
from .rally import CourtSpec
from .stream import SessionConfig

__all__ = [
    "ConfigError",
    "NoiseConfig",
    "StreamConfig",
    "RunConfig",
    "derive_seed",
    "load_config",
    "parse_override",
]


class ConfigError(ValueError):
    """Unusable configuration: unknown key, bad value, unreadable file."""


def derive_seed(seed: int, name: str) -> int:
    """Stable 63-bit sub-seed for a named stream under one master seed."""
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = 0.005
    rate: float = 210.0
    sigma_a: float = 0.5

    def __post_init__(self):
        if self.sigma < 0 or self.rate <= 0 or self.sigma_a < 0:
            raise ConfigError("noise: sigma/sigma_a must be >= 0 and rate > 0")


@dataclass(frozen=True)
class StreamConfig:
    host: str = "127.0.0.1"
    port: int = 0
    publish_rate: float = 50.0
    reorder_depth: int = 3
    min_measurements: int = 5
    intercept_z: float = 1.55
    idle_timeout: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs, resolved and validated."""

    seed: int = 0
    aero: AeroParams = field(default_factory=AeroParams)
    ranges: LaunchRanges = field(default_factory=LaunchRanges)
    zone: HitZone = field(default_factory=HitZone)
    court: CourtSpec = field(default_factory=CourtSpec)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)

    def sub_seed(self, name: str) -> int:
        return derive_seed(self.seed, name)

    def session_config(self) -> SessionConfig:
        return SessionConfig(
            reorder_depth=self.stream.reorder_depth,
            min_measurements=self.stream.min_measurements,
            sigma=self.noise.sigma, sigma_a=self.noise.sigma_a,
            intercept_z=self.stream.intercept_z,
            idle_timeout=self.stream.idle_timeout,
            params=self.aero)

    def as_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> str:
        """Canonical one-line form embedded in output headers."""
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))


# TOML section -> (dataclass, RunConfig field). "zone"/"ranges" need tuple
# massaging, handled below.
_SECTIONS = {
    "aero": AeroParams,
    "ranges": LaunchRanges,
    "zone": HitZone,
    "court": CourtSpec,
    "noise": NoiseConfig,
    "stream": StreamConfig,
}

_ZONE_KEYS = {"x": "x_range", "y": "y_range", "z": "z_range", "t_min": "t_min"}


def _build_section(name: str, cls, data: dict):
    allowed = {f.name for f in fields(cls)}
    if name == "zone":
        data = {_ZONE_KEYS.get(k, k): v for k, v in data.items()}
    clean = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"[{name}] has no key {key!r}")
        if isinstance(value, list):
            value = tuple(value)
        clean[key] = value
    try:
        return cls(**clean)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{name}]: {e}") from e


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """RunConfig from an optional TOML file plus dotted-key overrides.

    overrides maps "seed" or "section.key" to already-typed values and is
    applied after the file, mirroring --set flags on the command line.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"config file {path}: {e}") from e

    for dotted, value in (overrides or {}).items():
        parts = dotted.split(".")
        if len(parts) == 1:
            raw[parts[0]] = value
        elif len(parts) == 2:
            raw.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise ConfigError(f"override key {dotted!r} nests too deep")

    kwargs = {}
    for key, value in raw.items():
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"seed must be an integer, got {value!r}")
            kwargs["seed"] = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            kwargs[key] = _build_section(key, _SECTIONS[key], value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return RunConfig(**kwargs)


def parse_override(text: str):
    """Split one --set KEY=VALUE argument; VALUE is parsed as JSON when it
    looks like it (numbers, lists, booleans), else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"--set needs KEY=VALUE, got {text!r}")
    key, _, raw = text.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"--set needs a non-empty key in {text!r}")
    raw = raw.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value
