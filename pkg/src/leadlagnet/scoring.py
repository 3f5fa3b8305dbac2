"""Quarterly pair scoring: CAPM expected return blended with lagger out-degree."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .ingest import PricePanel, ReturnsPanel, compute_returns
from .leadlag import (
    DetectionParams,
    LeaderLaggerPair,
    LeadLagTensor,
    SummedLeadMatrix,
    build_tensor,
    out_degrees,
    top_pairs,
)

logger = logging.getLogger(__name__)

SELECTIONS_HEADER = ["quarter_start", "leader", "lagger", "strength", "beta", "capm", "odeg_norm", "blended"]


@dataclass(frozen=True)
class CapmParams:
    risk_free_rate: float = 0.02
    beta_lookback: int = 252
    periods_per_year: int = 252

    def __post_init__(self):
        if self.beta_lookback < 2:
            raise ValueError("beta_lookback must be >= 2")
        if self.periods_per_year < 1:
            raise ValueError("periods_per_year must be >= 1")


@dataclass(frozen=True)
class CapmEstimate:
    ticker: str
    beta: float
    expected_return: float


@dataclass(frozen=True)
class SelectionParams:
    capm_weight: float = 0.7
    outdeg_weight: float = 0.3
    candidate_count: int = 20
    select_count: int = 6
    lookback_slices: int = 63
    signed_blend: bool = False

    def __post_init__(self):
        if abs(self.capm_weight + self.outdeg_weight - 1.0) > 1e-12:
            raise ValueError("capm_weight and outdeg_weight must sum to 1")
        if not 1 <= self.select_count <= self.candidate_count:
            raise ValueError("need 1 <= select_count <= candidate_count")
        if self.lookback_slices < 1:
            raise ValueError("lookback_slices must be >= 1")


@dataclass(frozen=True)
class ScoredPair:
    pair: LeaderLaggerPair
    beta: float
    capm_component: float
    outdeg_component: float
    blended: float

    @property
    def leader(self) -> str:
        return self.pair.leader

    @property
    def lagger(self) -> str:
        return self.pair.lagger


@dataclass(frozen=True)
class QuarterSelection:
    """Pairs chosen at one rebalance; ``index`` is the row in the price panel."""

    index: int
    date: date
    pairs: tuple[ScoredPair, ...]


def estimate_beta(stock_returns: Sequence[float], market_returns: Sequence[float],
                  params: CapmParams | None = None) -> float:
    """Sample cov(stock, market) / var(market) over the trailing lookback."""
    params = params or CapmParams()
    n = params.beta_lookback
    x = np.asarray(stock_returns, dtype=np.float64)
    m = np.asarray(market_returns, dtype=np.float64)
    if len(x) < n or len(m) < n:
        raise ValueError(f"beta needs {n} observations, got {len(x)} and {len(m)}")
    x, m = x[-n:], m[-n:]
    dm = m - m.mean()
    var = np.dot(dm, dm)
    if var == 0.0:
        raise ValueError("market returns have zero variance; beta undefined")
    return float(np.dot(x - x.mean(), dm) / var)


def annualized_return(returns: Sequence[float], periods_per_year: int = 252) -> float:
    """Compound the per-period returns, then scale the growth to one year."""
    r = np.asarray(returns, dtype=np.float64)
    if len(r) == 0:
        raise ValueError("no returns to annualize")
    growth = float(np.prod(1.0 + r))
    return growth ** (periods_per_year / len(r)) - 1.0


def capm_expected_return(beta: float, realized_market_return: float,
                         params: CapmParams | None = None) -> float:
    rf = (params or CapmParams()).risk_free_rate
    return rf + beta * (realized_market_return - rf)


def normalize_out_degree(degrees: Sequence[int]) -> list[float]:
    """Inverted min-max scaling: the lowest degree scores 1, the highest 0."""
    if len(degrees) == 0:
        raise ValueError("no candidates to normalize")
    d = np.asarray(degrees, dtype=np.float64)
    lo, hi = d.min(), d.max()
    if hi == lo:
        return [1.0] * len(d)
    return [float(v) for v in 1.0 - (d - lo) / (hi - lo)]


def blend_and_select(
    candidates: Sequence[LeaderLaggerPair],
    capm: Mapping[str, CapmEstimate],
    odeg: Mapping[str, float],
    params: SelectionParams | None = None,
) -> list[ScoredPair]:
    """Score each candidate and keep the ``select_count`` best.

    ``capm`` and ``odeg`` are keyed by lagger ticker. The blended score is
    ``|w_capm * E[R] + w_odeg * odeg|`` (no absolute value with
    ``signed_blend``). A lagger may appear in several selected pairs.
    """
    params = params or SelectionParams()
    scored = []
    for pair in candidates:
        if pair.lagger not in capm:
            raise KeyError(f"no CAPM estimate for lagger {pair.lagger}")
        if pair.lagger not in odeg:
            raise KeyError(f"no out-degree score for lagger {pair.lagger}")
        est = capm[pair.lagger]
        raw = params.capm_weight * est.expected_return + params.outdeg_weight * odeg[pair.lagger]
        blended = raw if params.signed_blend else abs(raw)
        scored.append(ScoredPair(pair, est.beta, est.expected_return, odeg[pair.lagger], blended))
    scored.sort(key=lambda s: (-s.blended, s.lagger, s.leader))
    return scored[:params.select_count]


def quarterly_schedule(dates: Sequence[date]) -> list[int]:
    """Index of the first date, plus the first date on/after each quarter start."""
    if not dates:
        return []
    out = [0]
    for k in range(1, len(dates)):
        prev, cur = dates[k - 1], dates[k]
        if (cur.year, (cur.month - 1) // 3) != (prev.year, (prev.month - 1) // 3):
            out.append(k)
    return out


def usable_slices(tensor: LeadLagTensor, at_index: int) -> int:
    """How many leading slices of ``tensor`` are fully observed by price row ``at_index``.

    Return index ``t`` is the move into price row ``t + 1``, so a slice whose
    last return index is ``e`` is known once row ``e + 1`` has closed.
    """
    ends = np.asarray(tensor.window_starts) + tensor.params.span
    return int(np.searchsorted(ends, at_index, side="right"))


def summed_at(tensor: LeadLagTensor, at_index: int, lookback_slices: int) -> SummedLeadMatrix | None:
    """Diagonal-masked sum of the trailing slices known at price row ``at_index``.

    Shortens the lookback when less history is available; None if no slice
    is complete yet.
    """
    n_usable = usable_slices(tensor, at_index)
    if n_usable == 0:
        return None
    lookback = min(lookback_slices, n_usable)
    counts = tensor.slices[n_usable - lookback:n_usable].sum(axis=0, dtype=np.int64)
    return SummedLeadMatrix(tensor.tickers, counts, diagonal_masked=True)


def capm_estimates(returns: ReturnsPanel, tickers: Sequence[str], at_index: int,
                   params: CapmParams) -> dict[str, CapmEstimate]:
    """CAPM inputs from the returns known at price row ``at_index``.

    Uses the trailing ``beta_lookback`` returns, or all available history
    when less has accumulated (at least two returns are needed).
    """
    if returns.benchmark_returns is None:
        raise DataError("CAPM estimation needs a benchmark series")
    available = at_index  # returns 0..at_index-1 end on or before this row
    n = min(params.beta_lookback, available)
    if n < 2:
        raise DataError(f"only {available} returns before row {at_index}; CAPM needs 2")
    eff = CapmParams(params.risk_free_rate, n, params.periods_per_year)
    market = returns.benchmark_returns[available - n:available]
    market_annual = annualized_return(market, params.periods_per_year)
    out = {}
    for name in tickers:
        col = returns.tickers.index(name)
        beta = estimate_beta(returns.returns[available - n:available, col], market, eff)
        out[name] = CapmEstimate(name, beta, capm_expected_return(beta, market_annual, eff))
    return out


def select_at(
    tensor: LeadLagTensor,
    returns: ReturnsPanel,
    at_index: int,
    capm_params: CapmParams,
    selection: SelectionParams,
) -> tuple[SummedLeadMatrix | None, list[ScoredPair]]:
    """Candidate extraction, scoring and selection for a single rebalance."""
    summed = summed_at(tensor, at_index, selection.lookback_slices)
    if summed is None:
        return None, []
    candidates = top_pairs(summed, selection.candidate_count)
    if not candidates:
        return summed, []
    degree = dict(zip(tensor.tickers, out_degrees(summed.masked()).tolist()))
    laggers = sorted({p.lagger for p in candidates})
    scores = normalize_out_degree([degree[name] for name in laggers])
    odeg = dict(zip(laggers, scores))
    capm = capm_estimates(returns, laggers, at_index, capm_params)
    return summed, blend_and_select(candidates, capm, odeg, selection)


def build_selections(
    panel: PricePanel,
    start: int,
    detection: DetectionParams | None = None,
    capm_params: CapmParams | None = None,
    selection: SelectionParams | None = None,
    stride: int = 1,
) -> list[QuarterSelection]:
    """Quarterly selections for the backtest running from panel row ``start``.

    Rows before ``start`` are history only. Each rebalance sees data up to
    and including its own close.
    """
    detection = detection or DetectionParams()
    capm_params = capm_params or CapmParams()
    selection = selection or SelectionParams()
    if not 0 <= start < len(panel):
        raise ValueError(f"start row {start} outside panel of {len(panel)} rows")
    returns = compute_returns(panel)
    tensor = build_tensor(returns, detection, stride)
    out = []
    for k in quarterly_schedule(panel.dates[start:]):
        idx = start + k
        _, pairs = select_at(tensor, returns, idx, capm_params, selection)
        if not pairs:
            logger.warning("no lead-lag pairs at %s", panel.dates[idx].isoformat())
        out.append(QuarterSelection(idx, panel.dates[idx], tuple(pairs)))
    return out


def write_selections_csv(selections: Sequence[QuarterSelection], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SELECTIONS_HEADER)
        for q in selections:
            for s in q.pairs:
                writer.writerow([q.date.isoformat(), s.leader, s.lagger, s.pair.strength,
                                 repr(s.beta), repr(s.capm_component),
                                 repr(s.outdeg_component), repr(s.blended)])
    return path
