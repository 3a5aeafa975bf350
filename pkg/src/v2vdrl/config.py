"""Run configuration: INI-style ``key = value`` file with one section per component.

Sections are ``[geometry]``, ``[channel]``, ``[env]``, ``[net]``,
``[trainer]`` and ``[run]``. Every key is optional; unknown sections or
keys are errors. Tuples are written comma-separated.
"""

from __future__ import annotations

import configparser
import io
import typing
from dataclasses import dataclass, field, fields, replace

from .channel import ChannelConfig
from .dqn_agent import NetConfig, TrainerConfig
from .environment import ConfigError, EnvConfig, GeometryConfig

POLICIES = ("dqn", "random", "cluster")


@dataclass(frozen=True)
class RunSettings:
    policy: str = "dqn"
    policies: tuple[str, ...] = POLICIES
    k_list: tuple[int, ...] = (4, 8, 12, 16, 20)
    episodes: int = 200
    seed: int = 0
    out_dir: str = "out"
    checkpoint: str = ""
    cluster_max_iters: int = 100

    def __post_init__(self):
        for p in (self.policy, *self.policies):
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; expected one of {POLICIES}")
        if self.episodes < 0:
            raise ConfigError("episodes must be non-negative")
        if any(k < 1 for k in self.k_list):
            raise ConfigError("k_list entries must be positive")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    net: NetConfig = field(default_factory=NetConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def with_k(self, k: int) -> RunConfig:
        return replace(self, env=replace(self.env, n_v2v=k))


SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}


def _convert(raw: str, hint, where: str):
    origin = typing.get_origin(hint)
    try:
        if origin is tuple:
            (inner, *_rest) = typing.get_args(hint)
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(_convert(p, inner, where) for p in parts)
        if hint is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {hint}") from exc
    raise ConfigError(f"{where}: unsupported field type {hint}")


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, factory in SECTIONS.items():
        default = factory()
        cls = type(default)
        if not parser.has_section(name):
            parts[name] = default
            continue
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            values[key] = _convert(raw, hints[key], f"[{name}] {key}")
        try:
            parts[name] = cls(**values) if values else default
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())


def serialize_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {f.name: _format(getattr(section, f.name)) for f in fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
