"""Run configuration and its plain-text file format.

Config files are INI-style with two optional sections::

    # comments start with '#'
    [run]
    tau_d_ini = 0.01
    K = 100
    N = 10
    tighten_delta_m = 0.001
    close_speed_mps = 0.0015
    reverse_on_slip = true
    slip_reaction = true
    task_speed_mps = 0.01
    timeout_steps = 10000
    seed = 0
    dt = 0.0333333

    [scenario]
    base = egg               # preset to start from
    load_force = 1.5         # any SimObject / world field may be overridden

Unknown keys are errors.  When no path is given the file named by the
``TACTOSLIP_CONFIG`` environment variable is used, if set.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .detector import DetectionConfig
from .errors import ConfigurationError

CONFIG_ENV_VAR = "TACTOSLIP_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    tau_d_ini: float = 0.01
    K: int = 100
    N: int = 10
    tighten_delta_m: float = 0.001
    close_speed_mps: float = 0.0015
    reverse_on_slip: bool = True
    # when false, slips are still detected and logged but never acted on
    slip_reaction: bool = True
    task_speed_mps: float = 0.01
    task_direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    timeout_steps: int = 10_000
    seed: int = 0
    dt: float = 1.0 / 30.0
    # log-only actuation (replay): initial width and pull distance to finish
    start_width_m: float = 0.08
    task_distance_m: float = 0.02
    scenario: str | None = None
    archive: str | None = None

    def __post_init__(self) -> None:
        self.detection  # validates tau_d_ini, K, N
        if self.tighten_delta_m <= 0 or self.close_speed_mps <= 0 or self.task_speed_mps <= 0:
            raise ConfigurationError("speeds and tighten step must be positive")
        if self.timeout_steps < 1 or self.dt <= 0:
            raise ConfigurationError("timeout_steps and dt must be positive")
        norm = sum(c * c for c in self.task_direction) ** 0.5
        if abs(norm - 1.0) > 1e-9:
            raise ConfigurationError(f"task_direction must be a unit vector, norm={norm}")

    @property
    def detection(self) -> DetectionConfig:
        return DetectionConfig(self.tau_d_ini, self.K, self.N)

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class ConfigFile:
    run: RunConfig = field(default_factory=RunConfig)
    scenario: dict[str, str] = field(default_factory=dict)


def _coerce(name: str, raw: str, target: Any) -> Any:
    raw = raw.strip()
    try:
        if isinstance(target, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(target, int):
            return int(raw)
        if isinstance(target, float):
            return float(raw)
        if isinstance(target, tuple):
            return tuple(float(x) for x in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigurationError(f"bad value for {name!r}: {raw!r}") from None
    return raw or None


def parse_config(text: str) -> ConfigFile:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep K and N case-sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    extra = set(parser.sections()) - {"run", "scenario"}
    if extra:
        raise ConfigurationError(f"unknown config sections: {sorted(extra)}")
    defaults = RunConfig()
    values: dict[str, Any] = {}
    if parser.has_section("run"):
        known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(RunConfig)}
        for key, raw in parser.items("run"):
            if key not in known:
                raise ConfigurationError(f"unknown [run] key {key!r}")
            values[key] = _coerce(key, raw, known[key])
    scenario = dict(parser.items("scenario")) if parser.has_section("scenario") else {}
    return ConfigFile(RunConfig(**values), scenario)


def load_config(path: str | os.PathLike[str] | None = None) -> ConfigFile:
    """Read a config file; fall back to ``$TACTOSLIP_CONFIG`` and then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return ConfigFile()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text)
