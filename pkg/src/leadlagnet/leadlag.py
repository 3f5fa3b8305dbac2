"""Lead-lag detection and the directed leader/lagger network.

Ticker ``j`` leads ticker ``i`` over a window of ``k`` days starting at ``t0``
when, for every ``t`` in ``[t0, t0 + k)``,

    |r_i(t + lag) - r_j(t)| <= epsilon

Adjacency matrices are oriented row = lagger, column = leader.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import ReturnsPanel


@dataclass(frozen=True)
class DetectionParams:
    lag: int = 1
    epsilon: float = 0.01
    window: int = 5

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError("lag must be >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def span(self) -> int:
        """Return days one window placement consumes."""
        return self.window + self.lag


@dataclass(frozen=True, eq=False)
class LeadLagTensor:
    """Stack of boolean adjacency slices, one per window placement.

    ``slices[w, i, j]`` is true iff ``tickers[j]`` leads ``tickers[i]`` over
    the window starting at return index ``window_starts[w]``.
    """

    tickers: tuple[str, ...]
    window_starts: tuple[int, ...]
    slices: np.ndarray
    params: DetectionParams

    def __len__(self):
        return len(self.window_starts)

    def window_end(self, w: int) -> int:
        """Last return index read by slice ``w``."""
        return self.window_starts[w] + self.params.span - 1


@dataclass(frozen=True, eq=False)
class SummedLeadMatrix:
    tickers: tuple[str, ...]
    counts: np.ndarray
    diagonal_masked: bool = True

    def masked(self) -> np.ndarray:
        """Counts with the diagonal zeroed when masking is on."""
        out = self.counts.copy()
        if self.diagonal_masked:
            np.fill_diagonal(out, 0)
        return out


@dataclass(frozen=True, order=False)
class LeaderLaggerPair:
    leader: str
    lagger: str
    strength: int

    def __post_init__(self):
        if self.leader == self.lagger:
            raise ValueError(f"self-pair for {self.leader}")
        if self.strength < 1:
            raise ValueError("pair strength must be >= 1")


def detect_lead(
    leader_returns: Sequence[float],
    lagger_returns: Sequence[float],
    window_start: int,
    params: DetectionParams,
) -> bool:
    n = min(len(leader_returns), len(lagger_returns))
    if window_start < 0 or window_start + params.span > n:
        raise IndexError(
            f"window at {window_start} (window={params.window}, lag={params.lag}) "
            f"exceeds series of length {n}"
        )
    for t in range(window_start, window_start + params.window):
        if not abs(lagger_returns[t + params.lag] - leader_returns[t]) <= params.epsilon:
            return False
    return True


def window_placements(n_returns: int, params: DetectionParams, stride: int = 1) -> range:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return range(0, n_returns - params.span + 1, stride)


def build_tensor(returns: ReturnsPanel, params: DetectionParams, stride: int = 1) -> LeadLagTensor:
    """Evaluate ``detect_lead`` for every ordered ticker pair and window.

    Runs one pass over time keeping, per (lagger, leader) cell, the length
    of the current run of in-band days; a window is satisfied when that run
    covers all of its ``window`` days.
    """
    r = np.asarray(returns.returns, dtype=np.float64)
    n_days, n = r.shape
    starts = window_placements(n_days, params, stride)
    if len(starts) == 0:
        raise ValueError(
            f"{n_days} return days cannot hold a window of {params.window} with lag {params.lag}"
        )
    # a window starting at w is complete once leader day w + window - 1 is seen
    check_at = {w + params.window - 1: k for k, w in enumerate(starts)}
    slices = np.zeros((len(starts), n, n), dtype=bool)
    run = np.zeros((n, n), dtype=np.int64)
    last_leader_day = starts[-1] + params.window - 1
    for t in range(last_leader_day + 1):
        # rows: lagger at t + lag, columns: leader at t
        ok = np.abs(r[t + params.lag][:, None] - r[t][None, :]) <= params.epsilon
        run = np.where(ok, run + 1, 0)
        k = check_at.get(t)
        if k is not None:
            slices[k] = run >= params.window
    return LeadLagTensor(tuple(returns.tickers), tuple(starts), slices, params)


def sum_and_mask(tensor: LeadLagTensor, lookback_slices: int) -> SummedLeadMatrix:
    """Sum the trailing ``lookback_slices`` slices of the tensor."""
    if lookback_slices < 1:
        raise ValueError("lookback_slices must be >= 1")
    if lookback_slices > len(tensor):
        raise ValueError(
            f"lookback of {lookback_slices} slices exceeds tensor of {len(tensor)}"
        )
    counts = tensor.slices[-lookback_slices:].sum(axis=0, dtype=np.int64)
    return SummedLeadMatrix(tensor.tickers, counts, diagonal_masked=True)


def top_pairs(summed: SummedLeadMatrix, count: int = 20) -> list[LeaderLaggerPair]:
    """Strongest off-diagonal cells, strongest first.

    Ties are broken by (lagger, leader) ascending; zero cells are never edges.
    """
    if not summed.diagonal_masked:
        raise ValueError("top_pairs requires a diagonal-masked matrix")
    counts = summed.masked()
    rows, cols = np.nonzero(counts > 0)
    names = summed.tickers
    cells = sorted(
        ((-int(counts[i, j]), names[i], names[j]) for i, j in zip(rows, cols))
    )
    return [LeaderLaggerPair(leader=j, lagger=i, strength=-neg)
            for neg, i, j in cells[:max(count, 0)]]


def out_degrees(matrix: np.ndarray) -> np.ndarray:
    """Per-ticker count of distinct laggers led, diagonal excluded."""
    positive = np.asarray(matrix) > 0
    positive = positive & ~np.eye(positive.shape[0], dtype=bool)
    return positive.sum(axis=0)


def out_degree(matrix: SummedLeadMatrix | np.ndarray, ticker: str,
               tickers: Sequence[str] | None = None) -> int:
    """Number of laggers ``ticker`` leads in a slice or summed matrix.

    ``tickers`` is required when ``matrix`` is a bare array.
    """
    if isinstance(matrix, SummedLeadMatrix):
        tickers, matrix = matrix.tickers, matrix.counts
    if tickers is None:
        raise ValueError("tickers required for a bare matrix")
    tickers = list(tickers)
    if ticker not in tickers:
        raise KeyError(f"unknown ticker {ticker!r}")
    return int(out_degrees(matrix)[tickers.index(ticker)])


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def graph_dot(pairs: Sequence[LeaderLaggerPair], name: str = "leadlag") -> str:
    """DOT text for the pair network: leaders red, laggers blue.

    A ticker that is a lagger in any pair is drawn blue even if it also leads.
    """
    laggers = {p.lagger for p in pairs}
    nodes = sorted({p.leader for p in pairs} | laggers)
    lines = [f"digraph {name} {{"]
    for node in nodes:
        color = "blue" if node in laggers else "red"
        lines.append(f"  {_dot_id(node)} [color={color}];")
    for p in sorted(pairs, key=lambda p: (p.leader, p.lagger)):
        lines.append(f"  {_dot_id(p.leader)} -> {_dot_id(p.lagger)} [weight={p.strength}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(pairs: Sequence[LeaderLaggerPair], path: str | Path) -> Path:
    if not pairs:
        raise ValueError("no lead-lag pairs to export")
    path = Path(path)
    path.write_text(graph_dot(pairs), encoding="utf-8", newline="\n")
    return path


def write_adjacency_csv(summed: SummedLeadMatrix, path: str | Path) -> Path:
    """Counts matrix with ticker header row and column (rows laggers, columns leaders)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lagger\\leader", *summed.tickers])
        for name, row in zip(summed.tickers, summed.counts):
            writer.writerow([name, *(int(v) for v in row)])
    return path
