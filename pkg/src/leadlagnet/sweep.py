"""Buy-threshold x trailing-stop grid evaluation."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backtest import StrategyParams, run_backtest
from .errors import LeadLagError
from .ingest import PricePanel
from .scoring import QuarterSelection

CONTOUR_HEADER = ["trailing_stop", "buy_threshold", "portfolio_return", "trade_count"]

HOLD_THRESHOLD = "hold-threshold"
HOLD_STOP = "hold-stop"


def default_thresholds() -> list[float]:
    return [round(1.0 + 0.01 * k, 2) for k in range(16)]


def default_stops() -> list[float]:
    return [round(0.05 * k, 2) for k in range(21)]


class SweepError(LeadLagError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    buy_thresholds: tuple[float, ...] = tuple(default_thresholds())
    trailing_stops: tuple[float, ...] = tuple(default_stops())
    base: StrategyParams = StrategyParams()

    def __post_init__(self):
        for name in ("buy_thresholds", "trailing_stops"):
            values = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ValueError(f"{name} must not be empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.trailing_stops), len(self.buy_thresholds)

    def params_at(self, i: int, j: int) -> StrategyParams:
        return dataclasses.replace(self.base, trailing_stop=self.trailing_stops[i],
                                   buy_threshold=self.buy_thresholds[j])


@dataclass(frozen=True, eq=False)
class SweepGrid:
    """Rows follow ``trailing_stops``, columns ``buy_thresholds``."""

    trailing_stops: tuple[float, ...]
    buy_thresholds: tuple[float, ...]
    returns: np.ndarray
    trade_counts: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.returns.shape


@dataclass(frozen=True, eq=False)
class CrossSection:
    axis: str
    held_value: float
    coords: tuple[float, ...]
    returns: np.ndarray
    trade_counts: np.ndarray


def evaluate_cell(spec: SweepSpec, panel: PricePanel, selections: Sequence[QuarterSelection],
                  i: int, j: int) -> tuple[float, int]:
    """Portfolio return and buy count for stop ``i``, threshold ``j``."""
    result = run_backtest(panel, selections, spec.params_at(i, j))
    return result.portfolio_return, result.buy_count


def run_sweep(spec: SweepSpec, panel: PricePanel, selections: Sequence[QuarterSelection],
              order: Iterable[tuple[int, int]] | None = None) -> SweepGrid:
    """Backtest every grid cell. ``order`` overrides the evaluation sequence."""
    n_stop, n_thr = spec.shape
    returns = np.full((n_stop, n_thr), np.nan)
    counts = np.full((n_stop, n_thr), -1, dtype=np.int64)
    if order is None:
        order = ((i, j) for i in range(n_stop) for j in range(n_thr))
    for i, j in order:
        try:
            returns[i, j], counts[i, j] = evaluate_cell(spec, panel, selections, i, j)
        except Exception as exc:
            raise SweepError(
                f"cell (trailing_stop={spec.trailing_stops[i]}, "
                f"buy_threshold={spec.buy_thresholds[j]}) failed: {exc}"
            ) from exc
    if (counts < 0).any():
        raise SweepError("evaluation order did not cover every grid cell")
    return SweepGrid(spec.trailing_stops, spec.buy_thresholds, returns, counts)


def cross_section(grid: SweepGrid, axis: str, index: int) -> CrossSection:
    """One row (``hold-stop``) or column (``hold-threshold``) of the grid."""
    if axis == HOLD_STOP:
        if not 0 <= index < len(grid.trailing_stops):
            raise IndexError(f"stop index {index} out of range")
        return CrossSection(axis, grid.trailing_stops[index], grid.buy_thresholds,
                            grid.returns[index, :].copy(), grid.trade_counts[index, :].copy())
    if axis == HOLD_THRESHOLD:
        if not 0 <= index < len(grid.buy_thresholds):
            raise IndexError(f"threshold index {index} out of range")
        return CrossSection(axis, grid.buy_thresholds[index], grid.trailing_stops,
                            grid.returns[:, index].copy(), grid.trade_counts[:, index].copy())
    raise ValueError(f"axis must be {HOLD_STOP!r} or {HOLD_THRESHOLD!r}, got {axis!r}")


def write_contour_csv(grid: SweepGrid, path: str | Path) -> Path:
    """Long-form grid, sorted by stop then threshold, shape in a leading comment."""
    path = Path(path)
    n_stop, n_thr = grid.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# grid {n_stop}x{n_thr} (trailing_stops x buy_thresholds)\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CONTOUR_HEADER)
        for i, stop in enumerate(grid.trailing_stops):
            for j, thr in enumerate(grid.buy_thresholds):
                writer.writerow([repr(stop), repr(thr), repr(float(grid.returns[i, j])),
                                 int(grid.trade_counts[i, j])])
    return path
