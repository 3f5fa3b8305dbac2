"""Loading, validating and aligning daily close panels.

Prices arrive as a long-form CSV (``date,ticker,close``) and the benchmark
index as ``date,close``. Everything downstream works on the dense
:class:`PricePanel` produced here.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, ValidationError

logger = logging.getLogger(__name__)

PRICE_HEADER = ["date", "ticker", "close"]
BENCHMARK_HEADER = ["date", "close"]


@dataclass(frozen=True)
class GapPolicy:
    """How to treat missing cells in the long-form price file.

    A ticker missing more than ``drop_ticker_above`` of all dates is dropped
    outright. Remaining holes are forward-filled, at most ``max_forward_fill``
    consecutive days; a ticker with a hole that still cannot be filled (a
    leading gap, or a run longer than the limit) is dropped as well.
    """

    max_forward_fill: int = 5
    drop_ticker_above: float = 0.1

    def __post_init__(self):
        if self.max_forward_fill < 0:
            raise ValueError("max_forward_fill must be >= 0")
        if not 0.0 <= self.drop_ticker_above <= 1.0:
            raise ValueError("drop_ticker_above must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class PricePanel:
    """Date-aligned matrix of closing prices, rows are dates, columns tickers."""

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    closes: np.ndarray
    benchmark: np.ndarray | None = None
    dropped: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        closes = np.asarray(self.closes, dtype=np.float64)
        object.__setattr__(self, "closes", closes)
        if closes.shape != (len(self.dates), len(self.tickers)):
            raise ValidationError(
                f"closes shape {closes.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("dates must be strictly increasing")
        if len(set(self.tickers)) != len(self.tickers):
            raise ValidationError("duplicate tickers in panel")
        bad = ~(np.isfinite(closes) & (closes > 0))
        if bad.any():
            t, i = np.argwhere(bad)[0]
            raise ValidationError(
                f"non-positive or non-finite close for {self.tickers[i]} "
                f"on {self.dates[t].isoformat()}"
            )
        if self.benchmark is not None:
            bench = np.asarray(self.benchmark, dtype=np.float64)
            object.__setattr__(self, "benchmark", bench)
            if bench.shape != (len(self.dates),):
                raise ValidationError("benchmark must cover exactly the panel dates")
            if not (np.isfinite(bench) & (bench > 0)).all():
                raise ValidationError("benchmark levels must be finite and > 0")

    def __eq__(self, other):
        if not isinstance(other, PricePanel):
            return NotImplemented
        if self.dates != other.dates or self.tickers != other.tickers:
            return False
        if not np.array_equal(self.closes, other.closes):
            return False
        if (self.benchmark is None) != (other.benchmark is None):
            return False
        return self.benchmark is None or np.array_equal(self.benchmark, other.benchmark)

    __hash__ = None

    def __len__(self):
        return len(self.dates)

    def column(self, ticker: str) -> np.ndarray:
        return self.closes[:, self.ticker_index(ticker)]

    def ticker_index(self, ticker: str) -> int:
        try:
            return self.tickers.index(ticker)
        except ValueError:
            raise DataError(f"ticker {ticker!r} not in panel") from None

    def date_slice(self, start: int, stop: int) -> PricePanel:
        """Rows ``start:stop`` as a new panel."""
        bench = None if self.benchmark is None else self.benchmark[start:stop]
        return PricePanel(self.dates[start:stop], self.tickers,
                          self.closes[start:stop], bench, self.dropped)


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """Simple daily returns; row ``t`` is the return from close ``t`` to ``t+1``
    of the source panel and is stamped with the later date."""

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray
    benchmark_returns: np.ndarray | None = None

    def __len__(self):
        return len(self.dates)


def _parse_date(text: str, line: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"invalid ISO date {text!r}", line) from None


def _parse_close(text: str, line: int) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"invalid close {text!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite close {text!r}", line)
    return value


def _read_rows(path: Path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if [h.strip() for h in first] != header:
            raise ParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", 1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            yield reader.line_num, row


def _forward_fill(column: np.ndarray, limit: int) -> np.ndarray:
    out = column.copy()
    run = 0
    for t in range(1, len(out)):
        if np.isnan(out[t]):
            run += 1
            if run <= limit:
                out[t] = out[t - 1]
        else:
            run = 0
    return out


def load_price_panel(path: str | Path, gap_policy: GapPolicy | None = None) -> PricePanel:
    """Read a long-form ``date,ticker,close`` file into a validated panel.

    Tickers are kept in order of first appearance and dates are sorted.
    Tickers removed by the gap policy are listed in ``panel.dropped``.

    Raises:
        ParseError: malformed row (carries the line number).
        ValidationError: a non-positive price survives gap handling.
        DataError: every ticker was dropped.
    """
    gap_policy = gap_policy or GapPolicy()
    cells: dict[tuple[date, str], float | None] = {}
    tickers: dict[str, None] = {}
    for line, (d_text, ticker, c_text) in _read_rows(Path(path), PRICE_HEADER):
        d = _parse_date(d_text, line)
        ticker = ticker.strip()
        if not ticker:
            raise ParseError("empty ticker", line)
        if (d, ticker) in cells:
            raise ParseError(f"duplicate row for {ticker} on {d.isoformat()}", line)
        cells[(d, ticker)] = _parse_close(c_text, line)
        tickers.setdefault(ticker)
    if not cells:
        raise DataError(f"{path}: no price rows")

    dates = sorted({d for d, _ in cells})
    names = list(tickers)
    row_of = {d: t for t, d in enumerate(dates)}
    col_of = {s: i for i, s in enumerate(names)}
    raw = np.full((len(dates), len(names)), np.nan)
    for (d, s), value in cells.items():
        if value is not None:
            raw[row_of[d], col_of[s]] = value

    keep, dropped = [], []
    missing_frac = np.isnan(raw).mean(axis=0)
    for i, name in enumerate(names):
        if missing_frac[i] > gap_policy.drop_ticker_above:
            logger.warning("dropping %s: %.1f%% of cells missing", name, 100 * missing_frac[i])
            dropped.append(name)
            continue
        filled = _forward_fill(raw[:, i], gap_policy.max_forward_fill)
        if np.isnan(filled).any():
            logger.warning("dropping %s: gap cannot be forward-filled", name)
            dropped.append(name)
            continue
        raw[:, i] = filled
        keep.append(i)

    if not keep:
        raise DataError(f"{path}: universe empty after applying gap policy")
    closes = raw[:, keep]
    nonpos = closes <= 0
    if nonpos.any():
        t, i = np.argwhere(nonpos)[0]
        raise ValidationError(
            f"non-positive close for {names[keep[i]]} on {dates[t].isoformat()}"
        )
    return PricePanel(tuple(dates), tuple(names[i] for i in keep), closes,
                      dropped=tuple(dropped))


def load_benchmark(path: str | Path) -> dict[date, float]:
    """Read a ``date,close`` index file into an ordered ``{date: level}`` map."""
    series: dict[date, float] = {}
    for line, (d_text, c_text) in _read_rows(Path(path), BENCHMARK_HEADER):
        d = _parse_date(d_text, line)
        if d in series:
            raise ParseError(f"duplicate benchmark row for {d.isoformat()}", line)
        value = _parse_close(c_text, line)
        if value is None or value <= 0:
            raise ValidationError(f"benchmark level on {d.isoformat()} must be > 0 (line {line})")
        series[d] = value
    if not series:
        raise DataError(f"{path}: no benchmark rows")
    return dict(sorted(series.items()))


def write_price_panel(panel: PricePanel, path: str | Path) -> None:
    """Long-form writer; ``load_price_panel`` reads the file back unchanged."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PRICE_HEADER)
        for t, d in enumerate(panel.dates):
            for i, ticker in enumerate(panel.tickers):
                writer.writerow([d.isoformat(), ticker, repr(float(panel.closes[t, i]))])


def write_benchmark(panel: PricePanel, path: str | Path) -> None:
    if panel.benchmark is None:
        raise DataError("panel has no benchmark to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCHMARK_HEADER)
        for d, level in zip(panel.dates, panel.benchmark):
            writer.writerow([d.isoformat(), repr(float(level))])


def compute_returns(panel: PricePanel) -> ReturnsPanel:
    if len(panel.dates) < 2:
        raise DataError("need at least two dates to compute returns")
    closes = panel.closes
    returns = closes[1:] / closes[:-1] - 1.0
    bench = None
    if panel.benchmark is not None:
        bench = panel.benchmark[1:] / panel.benchmark[:-1] - 1.0
    return ReturnsPanel(panel.dates[1:], panel.tickers, returns, bench)


def align_calendars(panel: PricePanel, benchmark_series: Mapping[date, float]) -> PricePanel:
    """Restrict ``panel`` to the dates it shares with the benchmark and attach it."""
    if not len(panel.dates) or not len(benchmark_series):
        raise DataError("cannot align empty inputs")
    levels = {as_date(k): float(v) for k, v in benchmark_series.items()}
    rows = [t for t, d in enumerate(panel.dates) if d in levels]
    if not rows:
        raise DataError("panel and benchmark share no trading dates")
    dates = tuple(panel.dates[t] for t in rows)
    return PricePanel(dates, panel.tickers, panel.closes[rows],
                      np.array([levels[d] for d in dates]), panel.dropped)


def as_date(value) -> date:
    # pandas Timestamps and datetimes are date subclasses carrying a time part
    if hasattr(value, "date") and callable(value.date):
        return value.date()
    return value


def _per_ticker(value: float | Sequence[float], n: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (n,)).copy()
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr


def generate_synthetic_panel(
    n_tickers: int,
    n_days: int,
    drift: float | Sequence[float] = 0.0005,
    volatility: float | Sequence[float] = 0.015,
    seed: int = 1,
    start: date = date(2022, 1, 3),
) -> PricePanel:
    """Geometric random walk panel on a Monday-Friday calendar.

    Each day a ticker's close is multiplied by
    ``(1 + drift) * exp(vol * z - vol**2 / 2)`` with ``z`` standard normal, so
    prices stay positive and a zero-volatility ticker grows by exactly
    ``drift`` per day. The benchmark compounds the cross-sectional mean of
    the daily simple returns from a level of 1000.
    """
    if n_tickers < 1 or n_days < 1:
        raise ValueError("n_tickers and n_days must be >= 1")
    mu = _per_ticker(drift, n_tickers, "drift")
    sigma = _per_ticker(volatility, n_tickers, "volatility")
    if (sigma < 0).any() or (mu <= -1).any():
        raise ValueError("volatility must be >= 0 and drift > -1")

    rng = np.random.default_rng(seed)
    first = rng.uniform(20.0, 200.0, size=n_tickers)
    shocks = rng.standard_normal(size=(n_days - 1, n_tickers))
    factors = (1.0 + mu) * np.exp(sigma * shocks - 0.5 * sigma**2)

    closes = np.empty((n_days, n_tickers))
    closes[0] = first
    for t in range(1, n_days):
        closes[t] = closes[t - 1] * factors[t - 1]

    bench = np.empty(n_days)
    bench[0] = 1000.0
    if n_days > 1:
        mean_ret = (closes[1:] / closes[:-1] - 1.0).mean(axis=1)
        for t in range(1, n_days):
            bench[t] = bench[t - 1] * (1.0 + mean_ret[t - 1])

    first_day = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    days = np.busday_offset(first_day, np.arange(n_days))
    dates = tuple(d.item() for d in days)
    tickers = tuple(f"S{i:03d}" for i in range(n_tickers))
    return PricePanel(dates, tickers, closes, bench)
