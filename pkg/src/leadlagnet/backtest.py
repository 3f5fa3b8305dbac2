"""Day-by-day simulation of the leader-triggered lagger strategy.

Each selected lagger owns a cash bucket. A leader closing at least
``buy_threshold`` times its previous close moves the whole bucket into the
lagger; the leader falling through its stop level moves it back to cash.
All fills happen at the same day's close.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, InvariantViolation
from .ingest import PricePanel, as_date
from .scoring import QuarterSelection

LEDGER_HEADER = ["date", "action", "lagger", "leader", "shares", "price", "commission", "trigger"]
VALUES_HEADER = ["date", "portfolio_value", "benchmark_value", "portfolio_cum_return", "benchmark_cum_return"]


class StopMode(str, enum.Enum):
    TRAILING_MAX = "trailing-max"
    PREV_CLOSE = "prev-close"


@dataclass(frozen=True)
class StrategyParams:
    buy_threshold: float = 1.02
    trailing_stop: float = 0.10
    initial_capital: float = 500_000.0
    commission_per_trade: float = 0.0
    stop_mode: StopMode = StopMode.TRAILING_MAX
    fractional_shares: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stop_mode", StopMode(self.stop_mode))
        if not self.buy_threshold > 0:
            raise ValueError("buy_threshold must be > 0")
        if not 0.0 <= self.trailing_stop <= 1.0:
            raise ValueError("trailing_stop must lie in [0, 1]")
        if not self.initial_capital > 0:
            raise ValueError("initial_capital must be > 0")
        if not self.commission_per_trade >= 0:
            raise ValueError("commission_per_trade must be >= 0")


@dataclass
class Bucket:
    lagger: str
    leaders: list[str] = field(default_factory=list)
    cash: float = 0.0
    shares: float = 0.0
    entry_price: float | None = None
    leader_trailing_max: dict[str, float] = field(default_factory=dict)

    @property
    def holding(self) -> bool:
        return self.shares > 0


@dataclass
class PortfolioState:
    buckets: dict[str, Bucket] = field(default_factory=dict)
    idle_cash: float = 0.0

    def value(self, price_of: Callable[[str], float]) -> float:
        total = self.idle_cash
        for b in self.buckets.values():
            total += b.cash + b.shares * price_of(b.lagger)
        return total

    def cash(self) -> float:
        return self.idle_cash + sum(b.cash for b in self.buckets.values())


@dataclass(frozen=True)
class Trade:
    date: date
    action: str  # buy | sell | skip
    lagger: str
    leader: str
    shares: float
    price: float
    commission: float
    trigger: str  # threshold | stop | rebalance-liquidation | final-liquidation


@dataclass(frozen=True, eq=False)
class BacktestResult:
    dates: tuple[date, ...]
    daily_values: np.ndarray
    daily_cash: np.ndarray
    trades: tuple[Trade, ...]
    initial_capital: float
    benchmark_values: np.ndarray | None = None

    @property
    def final_value(self) -> float:
        return float(self.daily_values[-1])

    @property
    def portfolio_return(self) -> float:
        return (self.final_value - self.initial_capital) / self.initial_capital

    @property
    def benchmark_return(self) -> float | None:
        if self.benchmark_values is None:
            return None
        return float(self.benchmark_values[-1] / self.benchmark_values[0] - 1.0)

    @property
    def buy_count(self) -> int:
        return sum(1 for t in self.trades if t.action == "buy")


@dataclass(frozen=True, eq=False)
class PerformanceReport:
    dates: tuple[date, ...]
    portfolio_values: np.ndarray
    benchmark_values: np.ndarray
    portfolio_growth: np.ndarray
    benchmark_growth: np.ndarray
    portfolio_return: float
    benchmark_return: float

    @property
    def excess_return(self) -> float:
        return self.portfolio_return - self.benchmark_return


@dataclass(frozen=True)
class Fill:
    shares: float
    price: float
    commission: float


def buy_signal(leader_close_today: float, leader_close_prev: float, b: float) -> bool:
    """True when the leader's day-over-day ratio reaches ``b`` (inclusive)."""
    return leader_close_today / leader_close_prev >= b


def sell_signal(bucket: Bucket, leader: str, leader_close_today: float,
                params: StrategyParams, leader_close_prev: float | None = None) -> bool:
    """True when ``leader`` closes strictly below its stop level.

    Trailing-max mode measures the drawdown from the highest leader close
    since the bucket was bought; prev-close mode from yesterday's close.
    """
    if params.stop_mode is StopMode.PREV_CLOSE:
        if leader_close_prev is None:
            raise ValueError("prev-close stop needs the previous leader close")
        ref = leader_close_prev
    else:
        ref = bucket.leader_trailing_max[leader]
    return leader_close_today < (1.0 - params.trailing_stop) * ref


def execute_buy(bucket: Bucket, lagger_close: float, commission: float = 0.0,
                fractional: bool = True) -> Fill | None:
    """Spend the whole bucket on the lagger. Returns None if the buy is skipped."""
    if bucket.holding or bucket.cash <= commission:
        return None
    budget = bucket.cash - commission
    if fractional:
        shares = budget / lagger_close
        residue = 0.0
    else:
        shares = math.floor(budget / lagger_close)
        if shares * lagger_close > budget:
            shares -= 1
        if shares < 1:
            return None
        shares = float(shares)
        residue = budget - shares * lagger_close
    bucket.shares = shares
    bucket.cash = residue
    bucket.entry_price = lagger_close
    return Fill(shares, lagger_close, commission)


def execute_sell(bucket: Bucket, lagger_close: float, commission: float = 0.0) -> Fill:
    """Turn every share back into cash.

    Commission is capped at what the bucket can pay so cash never goes
    negative on a dust position.
    """
    if not bucket.holding:
        raise ValueError(f"bucket {bucket.lagger} holds no shares")
    shares = bucket.shares
    proceeds = shares * lagger_close
    charged = min(commission, bucket.cash + proceeds)
    bucket.cash = bucket.cash + proceeds - charged
    bucket.shares = 0.0
    bucket.entry_price = None
    bucket.leader_trailing_max.clear()
    return Fill(shares, lagger_close, charged)


def _check(state: PortfolioState, day: date) -> None:
    if state.idle_cash < 0:
        raise InvariantViolation(f"negative idle cash on {day}")
    for b in state.buckets.values():
        if b.cash < 0 or b.shares < 0:
            raise InvariantViolation(
                f"negative balance in {b.lagger} bucket on {day}: cash={b.cash}, shares={b.shares}"
            )


def run_backtest(
    panel: PricePanel,
    selections: Sequence[QuarterSelection],
    params: StrategyParams | None = None,
    observer: Callable[[int, PortfolioState], None] | None = None,
) -> BacktestResult:
    """Simulate from the first selection's row to the last panel row.

    Each day runs: rebalance (if scheduled), stop checks, buy checks; the
    last day then liquidates everything. ``observer`` is called with the
    row index and live state after every day.
    """
    params = params or StrategyParams()
    if not selections:
        raise ValueError("no selections to trade")
    schedule: dict[int, QuarterSelection] = {}
    for q in selections:
        if not 0 <= q.index < len(panel):
            raise DataError(f"selection row {q.index} outside the price panel")
        schedule[q.index] = q
        for s in q.pairs:
            for name in (s.leader, s.lagger):
                if name not in panel.tickers:
                    raise DataError(f"ticker {name} has no prices in the panel")

    col = {name: i for i, name in enumerate(panel.tickers)}
    closes = panel.closes
    first = min(schedule)
    last = len(panel) - 1
    fee = params.commission_per_trade
    state = PortfolioState(idle_cash=float(params.initial_capital))
    trades: list[Trade] = []
    values, cash = [], []

    for d in range(first, last + 1):
        today = panel.dates[d]
        px = closes[d]

        def close(name, _px=px):
            return float(_px[col[name]])

        def record(bucket, action, leader, fill, trigger):
            trades.append(Trade(today, action, bucket.lagger, leader,
                                fill.shares, fill.price, fill.commission, trigger))

        if d in schedule:
            _rebalance(state, schedule[d], close, fee, record)

        for name in sorted(state.buckets):
            bucket = state.buckets[name]
            if not bucket.holding:
                continue
            hit = None
            for leader in bucket.leaders:
                prev = float(closes[d - 1, col[leader]]) if d > 0 else None
                if prev is None and params.stop_mode is StopMode.PREV_CLOSE:
                    continue
                if sell_signal(bucket, leader, close(leader), params, prev):
                    hit = leader
                    break
            if hit is not None:
                record(bucket, "sell", hit, execute_sell(bucket, close(name), fee), "stop")
            else:
                for leader in bucket.leaders:
                    tmax = bucket.leader_trailing_max[leader]
                    bucket.leader_trailing_max[leader] = max(tmax, close(leader))

        if d > 0:
            for name in sorted(state.buckets):
                bucket = state.buckets[name]
                if bucket.holding:
                    continue
                hit = next((leader for leader in bucket.leaders
                            if buy_signal(close(leader), float(closes[d - 1, col[leader]]),
                                          params.buy_threshold)), None)
                if hit is None:
                    continue
                fill = execute_buy(bucket, close(name), fee, params.fractional_shares)
                if fill is None:
                    record(bucket, "skip", hit, Fill(0.0, close(name), 0.0), "threshold")
                    continue
                record(bucket, "buy", hit, fill, "threshold")
                bucket.leader_trailing_max = {leader: close(leader) for leader in bucket.leaders}

        if d == last:
            for name in sorted(state.buckets):
                bucket = state.buckets[name]
                if bucket.holding:
                    leader = bucket.leaders[0] if bucket.leaders else ""
                    record(bucket, "sell", leader, execute_sell(bucket, close(name), fee),
                           "final-liquidation")

        _check(state, today)
        values.append(state.value(close))
        cash.append(state.cash())
        if observer is not None:
            observer(d, state)

    bench = None
    if panel.benchmark is not None:
        bench = panel.benchmark[first:last + 1].copy()
    return BacktestResult(panel.dates[first:last + 1], np.array(values), np.array(cash),
                          tuple(trades), float(params.initial_capital), bench)


def _rebalance(state, selection, close, fee, record):
    """Liquidate dropped laggers, then pool all cash and split it evenly."""
    leaders: dict[str, list[str]] = {}
    for s in selection.pairs:
        leaders.setdefault(s.lagger, [])
        if s.leader not in leaders[s.lagger]:
            leaders[s.lagger].append(s.leader)

    for name in sorted(state.buckets):
        if name in leaders:
            continue
        bucket = state.buckets.pop(name)
        if bucket.holding:
            leader = bucket.leaders[0] if bucket.leaders else ""
            record(bucket, "sell", leader, execute_sell(bucket, close(name), fee),
                   "rebalance-liquidation")
        state.idle_cash += bucket.cash

    pool = state.idle_cash + sum(b.cash for b in state.buckets.values())
    if not leaders:
        state.idle_cash = pool
        return
    share = pool / len(leaders)
    state.idle_cash = 0.0
    for name, names in leaders.items():
        bucket = state.buckets.setdefault(name, Bucket(name))
        bucket.leaders = sorted(names)
        bucket.cash = share
        if bucket.holding:
            bucket.leader_trailing_max = {
                leader: bucket.leader_trailing_max.get(leader, close(leader))
                for leader in bucket.leaders
            }


def evaluate_performance(result: BacktestResult, benchmark: Mapping[date, float] | Sequence[float]) -> PerformanceReport:
    """Benchmark-relative report; both growth curves start at 1.0.

    ``benchmark`` is either a ``{date: level}`` mapping covering every
    backtest date or a level sequence of the same length as the result.
    """
    if hasattr(benchmark, "items"):
        levels = {as_date(k): float(v) for k, v in benchmark.items()}
        missing = [d for d in result.dates if d not in levels]
        if missing:
            raise ValueError(f"benchmark has no level for {missing[0].isoformat()}")
        bench = np.array([levels[d] for d in result.dates])
    else:
        bench = np.asarray(benchmark, dtype=np.float64)
        if bench.shape != (len(result.dates),):
            raise ValueError(
                f"benchmark has {bench.shape[0] if bench.ndim else 0} levels for "
                f"{len(result.dates)} backtest dates"
            )
    if not (bench > 0).all():
        raise ValueError("benchmark levels must be > 0")
    growth = result.daily_values / result.initial_capital
    bench_growth = bench / bench[0]
    return PerformanceReport(result.dates, result.daily_values.copy(), bench, growth, bench_growth,
                             result.portfolio_return, float(bench_growth[-1] - 1.0))


def write_ledger_csv(result: BacktestResult, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LEDGER_HEADER)
        for t in result.trades:
            writer.writerow([t.date.isoformat(), t.action, t.lagger, t.leader,
                             repr(t.shares), repr(t.price), repr(t.commission), t.trigger])
    return path


def write_values_csv(result: BacktestResult, path: str | Path,
                     report: PerformanceReport | None = None) -> Path:
    """Daily values plus cumulative returns (growth - 1) for plotting."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VALUES_HEADER)
        for t, d in enumerate(result.dates):
            value = float(result.daily_values[t])
            row = [d.isoformat(), repr(value), "", repr(value / result.initial_capital - 1.0), ""]
            if report is not None:
                row[2] = repr(float(report.benchmark_values[t]))
                row[4] = repr(float(report.benchmark_growth[t] - 1.0))
            writer.writerow(row)
    return path
