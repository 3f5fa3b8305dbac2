"""Run configuration: a flat ``key = value`` file with dotted section prefixes.

Example::

    # paths are relative to this file
    paths.prices = prices.csv
    paths.benchmark = benchmark.csv
    span = 2022-03-15:2023-03-15
    detection.epsilon = 0.01
    strategy.buy_threshold = 1.02
    sweep.buy_thresholds = 1.00:1.15:0.01
    sweep.trailing_stops = 0.05, 0.10, 0.20

Blank lines and ``#`` comments are ignored. Lists take either comma
separated values or an inclusive ``start:stop:step`` range.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Callable

from .backtest import StopMode, StrategyParams
from .errors import ConfigError
from .ingest import GapPolicy
from .leadlag import DetectionParams
from .scoring import CapmParams, SelectionParams
from .sweep import SweepSpec


@dataclass(frozen=True)
class SynthConfig:
    tickers: int = 10
    days: int = 500
    drift: float = 0.0005
    volatility: float = 0.015
    seed: int = 1
    start: date = date(2022, 1, 3)


@dataclass(frozen=True)
class RunConfig:
    prices: Path | None = None
    benchmark: Path | None = None
    out: Path = Path("out")
    span: tuple[date | None, date | None] = (None, None)
    stride: int = 1
    gaps: GapPolicy = GapPolicy()
    detection: DetectionParams = DetectionParams()
    capm: CapmParams = CapmParams()
    selection: SelectionParams = SelectionParams()
    strategy: StrategyParams = StrategyParams()
    sweep: SweepSpec = field(default_factory=SweepSpec)
    synth: SynthConfig = SynthConfig()


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_span(text: str) -> tuple[date | None, date | None]:
    if ":" not in text:
        raise ValueError("span must look like START:END (either side may be empty)")
    left, right = (part.strip() for part in text.split(":", 1))
    start = date.fromisoformat(left) if left else None
    end = date.fromisoformat(right) if right else None
    if start and end and end < start:
        raise ValueError("span end precedes start")
    return start, end


def parse_float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("range must be start:stop:step with step > 0")
        lo, hi, step = parts
        n = int(round((hi - lo) / step))
        values = [round(lo + k * step, 10) for k in range(n + 1)]
        return tuple(v for v in values if v <= hi + 1e-12)
    return tuple(float(p) for p in text.split(",") if p.strip())


# key -> (section attribute or None for top level, field name, parser)
_KEYS: dict[str, tuple[str | None, str, Callable[[str], Any]]] = {
    "paths.prices": (None, "prices", Path),
    "paths.benchmark": (None, "benchmark", Path),
    "paths.out": (None, "out", Path),
    "span": (None, "span", parse_span),
    "detection.stride": (None, "stride", int),
    "gaps.max_forward_fill": ("gaps", "max_forward_fill", int),
    "gaps.drop_ticker_above": ("gaps", "drop_ticker_above", float),
    "detection.lag": ("detection", "lag", int),
    "detection.epsilon": ("detection", "epsilon", float),
    "detection.window": ("detection", "window", int),
    "capm.risk_free_rate": ("capm", "risk_free_rate", float),
    "capm.beta_lookback": ("capm", "beta_lookback", int),
    "capm.periods_per_year": ("capm", "periods_per_year", int),
    "selection.capm_weight": ("selection", "capm_weight", float),
    "selection.outdeg_weight": ("selection", "outdeg_weight", float),
    "selection.candidate_count": ("selection", "candidate_count", int),
    "selection.select_count": ("selection", "select_count", int),
    "selection.lookback_slices": ("selection", "lookback_slices", int),
    "selection.signed_blend": ("selection", "signed_blend", parse_bool),
    "strategy.buy_threshold": ("strategy", "buy_threshold", float),
    "strategy.trailing_stop": ("strategy", "trailing_stop", float),
    "strategy.initial_capital": ("strategy", "initial_capital", float),
    "strategy.commission_per_trade": ("strategy", "commission_per_trade", float),
    "strategy.stop_mode": ("strategy", "stop_mode", StopMode),
    "strategy.fractional_shares": ("strategy", "fractional_shares", parse_bool),
    "sweep.buy_thresholds": ("sweep", "buy_thresholds", parse_float_list),
    "sweep.trailing_stops": ("sweep", "trailing_stops", parse_float_list),
    "synth.tickers": ("synth", "tickers", int),
    "synth.days": ("synth", "days", int),
    "synth.drift": ("synth", "drift", float),
    "synth.volatility": ("synth", "volatility", float),
    "synth.seed": ("synth", "seed", int),
    "synth.start": ("synth", "start", date.fromisoformat),
}

_PATH_FIELDS = ("prices", "benchmark", "out")


def parse_config_text(text: str, base_dir: Path | None = None, source: str = "<config>") -> dict[str, tuple[Any, int]]:
    """Parse lines into ``{key: (value, line_number)}``."""
    values: dict[str, tuple[Any, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: key {key!r} repeated")
        parser = _KEYS[key][2]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        if _KEYS[key][1] in _PATH_FIELDS and base_dir is not None and not parsed.is_absolute():
            parsed = base_dir / parsed
        values[key] = (parsed, lineno)
    return values


def build_config(values: dict[str, tuple[Any, int]], source: str = "<config>") -> RunConfig:
    """Assemble a :class:`RunConfig`, validating each section."""
    cfg = RunConfig()
    sections: dict[str | None, dict[str, Any]] = {}
    lines: dict[str | None, list[str]] = {}
    for key, (value, lineno) in values.items():
        section, name, _ = _KEYS[key]
        sections.setdefault(section, {})[name] = value
        lines.setdefault(section, []).append(f"{key} (line {lineno})" if lineno else key)

    top = sections.pop(None, {})
    for section, overrides in sections.items():
        current = getattr(cfg, section)
        try:
            updated = dataclasses.replace(current, **overrides)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: invalid {section} settings "
                              f"[{', '.join(lines[section])}]: {exc}") from None
        cfg = dataclasses.replace(cfg, **{section: updated})
    try:
        cfg = dataclasses.replace(cfg, **top)
        # the sweep varies (b, s) on top of the configured strategy
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, base=cfg.strategy))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read ``path`` (if given) and apply ``overrides`` given as raw strings."""
    values: dict[str, tuple[Any, int]] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values = parse_config_text(text, path.resolve().parent, str(path))
    for key, raw in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        try:
            values[key] = (_KEYS[key][2](raw), 0)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return build_config(values, str(path) if path else "<flags>")
