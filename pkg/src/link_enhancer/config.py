"""Run configuration: dataclasses plus a ``section.key = value`` text format.

Example file::

    mode = enhanced
    line_rate = 2048000
    rs.n = 255
    rs.k = 235
    sync.h_tol = 2
    channel.mode = bsc
    channel.p_e = 1e-3
    channel.seed = 7
    traffic.utilization = 0.5
    traffic.cells = 1000000
    metrics.block_size = 16384
    io.output = results/run.csv

Precedence, lowest first: defaults, config file, environment
(``LINK_ENHANCER_SEED``, ``LINK_ENHANCER_OUTPUT``), command-line overrides.
"""
from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field, replace

from .channel import ChannelConfig
from .framing import E1_LINE_RATE, H_TOL, L_LOSS, M_CONFIRM
from .gf256 import RsCodeParams, make_params
from .measurement import BLOCK_SIZE, SECB_THRESHOLD, TrafficConfig
from .pipeline import DRAIN_SLOTS, FIFO_DEPTH

ENV_SEED = "LINK_ENHANCER_SEED"
ENV_OUTPUT = "LINK_ENHANCER_OUTPUT"
MODES = ("baseline", "enhanced", "duplex")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RsSection:
    n: int = 255
    k: int = 235

    def params(self) -> RsCodeParams:
        return make_params(self.n, self.k)


@dataclass(frozen=True)
class SyncSection:
    h_tol: int = H_TOL
    m_confirm: int = M_CONFIRM
    l_loss: int = L_LOSS


@dataclass(frozen=True)
class MetricsSection:
    block_size: int = BLOCK_SIZE
    secb_threshold: int = SECB_THRESHOLD


@dataclass(frozen=True)
class IoSection:
    output: str = "-"          # metrics CSV destination, "-" for stdout
    summary: bool = True


@dataclass(frozen=True)
class RunConfig:
    mode: str = "enhanced"
    line_rate: float = E1_LINE_RATE
    fifo_depth: int = FIFO_DEPTH
    drain_slots: int = DRAIN_SLOTS
    parallel: bool = False
    rs: RsSection = field(default_factory=RsSection)
    sync: SyncSection = field(default_factory=SyncSection)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    reverse: ChannelConfig | None = None     # duplex B->A channel; defaults to channel with seed + 1
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    io: IoSection = field(default_factory=IoSection)

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.line_rate <= 0:
            raise ConfigError("line_rate must be positive")
        if self.fifo_depth < 1:
            raise ConfigError("fifo_depth must be >= 1")
        if self.drain_slots < 0:
            raise ConfigError("drain_slots must be >= 0")
        try:
            self.rs.params()
        except ValueError as exc:
            raise ConfigError(f"rs: {exc}") from None
        if not 0 <= self.sync.h_tol <= 32:
            raise ConfigError("sync.h_tol must lie in [0, 32]")
        if self.sync.m_confirm < 0:
            raise ConfigError("sync.m_confirm must be >= 0")
        if self.sync.l_loss < 1:
            raise ConfigError("sync.l_loss must be >= 1")
        if self.metrics.block_size < 1:
            raise ConfigError("metrics.block_size must be >= 1")
        if self.metrics.secb_threshold < 0:
            raise ConfigError("metrics.secb_threshold must be >= 0")
        if self.traffic.line_rate != self.line_rate:
            raise ConfigError("traffic.line_rate must equal line_rate")
        if self.traffic.cells is not None and self.traffic.cells < 1:
            raise ConfigError("traffic.cells must be >= 1")
        if self.traffic.cells is None and (self.traffic.duration is None or self.traffic.duration <= 0):
            raise ConfigError("traffic.duration must be positive when traffic.cells is unset")
        return self

    @property
    def reverse_channel(self) -> ChannelConfig:
        if self.reverse is not None:
            return self.reverse
        return replace(self.channel, seed=(self.channel.seed + 1) % 2 ** 64)

    def run_kwargs(self) -> dict:
        return dict(params=self.rs.params(), fifo_depth=self.fifo_depth, h_tol=self.sync.h_tol,
                    m_confirm=self.sync.m_confirm, l_loss=self.sync.l_loss,
                    block_size=self.metrics.block_size, secb_threshold=self.metrics.secb_threshold,
                    drain_slots=self.drain_slots)


_SECTIONS = {"rs", "sync", "channel", "reverse", "traffic", "metrics", "io"}


def _coerce(raw: str, hint, key: str):
    origin = typing.get_origin(hint)
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    if origin is typing.Union or (origin is not None and type(None) in typing.get_args(hint)):
        if raw.strip().lower() in ("", "none", "null"):
            return None
        hint = args[0]
    raw = raw.strip()
    try:
        if hint is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            try:
                return int(raw, 0)
            except ValueError:
                value = float(raw)          # accepts 1e6
                if not value.is_integer():
                    raise
                return int(value)
        if hint is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {hint.__name__}") from None
    return raw


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def apply_overrides(cfg: RunConfig, items: dict[str, str]) -> RunConfig:
    """Apply dotted ``key -> raw string`` overrides with type coercion."""
    top: dict = {}
    nested: dict[str, dict] = {}
    top_hints = _hints(RunConfig)
    for key, raw in items.items():
        parts = key.strip().split(".")
        if len(parts) == 1:
            name = parts[0]
            if name not in top_hints or name in _SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            top[name] = _coerce(raw, top_hints[name], key)
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            nested.setdefault(parts[0], {})[parts[1]] = raw
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        cfg = replace(cfg, **top)
        for section, values in nested.items():
            current = getattr(cfg, section)
            if current is None:
                current = cfg.channel
            cls = type(current)
            hints = _hints(cls)
            kw = {}
            for name, raw in values.items():
                if name not in hints:
                    raise ConfigError(f"unknown config key {section}.{name!r}")
                kw[name] = _coerce(raw, hints[name], f"{section}.{name}")
            if section == "traffic" and "cells" in kw and "duration" not in kw:
                kw["duration"] = None
            cfg = replace(cfg, **{section: replace(current, **kw)})
        if "line_rate" in top:
            cfg = replace(cfg, traffic=replace(cfg.traffic, line_rate=cfg.line_rate))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_config_text(text: str) -> dict[str, str]:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def env_overrides(environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    if environ.get(ENV_SEED):
        out["channel.seed"] = environ[ENV_SEED]
    if environ.get(ENV_OUTPUT):
        out["io.output"] = environ[ENV_OUTPUT]
    return out


def load_config(path: str | None = None, overrides: dict[str, str] | None = None,
                environ=None) -> RunConfig:
    cfg = RunConfig()
    if path:
        with open(path) as fh:
            cfg = apply_overrides(cfg, parse_config_text(fh.read()))
    cfg = apply_overrides(cfg, env_overrides(environ))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    """Inverse of ``parse_config_text`` for every set field."""
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            for sf in dataclasses.fields(value):
                sv = getattr(value, sf.name)
                lines.append(f"{f.name}.{sf.name} = {'none' if sv is None else sv}")
        elif value is not None:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
