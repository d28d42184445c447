"""Flat ``key = value`` run configuration and named experiment presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .core import EngineConfig
from .detector import DetectorConfig


@dataclass(frozen=True)
class SceneConfig:
    T60: float = 0.5
    switch_time: float = 10.0
    duration: float = 20.0
    room_x: float = 6.5
    room_y: float = 5.1
    room_z: float = 3.8
    angle_a: float = 25.0
    angle_b: float = -25.0
    distance: float = 2.2
    mic_spacing: float = 0.05
    sir_db: float | None = None  # None: no interfering talker


PRESETS: dict[str, dict[str, str]] = {
    "paper-t60-0.5": {"T60": "0.5", "switch_time": "10.0", "duration": "20.0"},
    "paper-t60-1.0": {"T60": "1.0", "switch_time": "10.0", "duration": "20.0"},
}


class ConfigError(ValueError):
    """Malformed config text, unknown key or out-of-range value."""


@dataclass
class RunConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)


_SECTIONS = {"engine": EngineConfig, "detector": DetectorConfig, "scene": SceneConfig}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        values[key] = value
    return values


def read_config_file(path) -> dict[str, str]:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


def _coerce(raw: str, default):
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if default is None:
        try:
            return int(raw)
        except ValueError:
            return float(raw)
    return float(raw)


def _owner(key: str):
    for section, cls in _SECTIONS.items():
        if key in {f.name for f in dataclasses.fields(cls)}:
            return section, cls
    raise ConfigError(f"unknown config key {key!r}")


def build_run_config(*layers: dict[str, str]) -> RunConfig:
    """Merge value layers (later wins) over the defaults and validate."""
    merged: dict[str, str] = {}
    for layer in layers:
        merged.update(layer)
    kwargs: dict[str, dict] = {s: {} for s in _SECTIONS}
    for key, raw in merged.items():
        section, cls = _owner(key)
        default = next(f.default for f in dataclasses.fields(cls) if f.name == key)
        try:
            kwargs[section][key] = _coerce(raw, default)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    try:
        return RunConfig(**{s: cls(**kwargs[s]) for s, cls in _SECTIONS.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def preset(name: str) -> dict[str, str]:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
