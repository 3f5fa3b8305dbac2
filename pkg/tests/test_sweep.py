import random

import numpy as np
import pytest

from leadlagnet.backtest import StrategyParams, run_backtest
from leadlagnet.ingest import generate_synthetic_panel
from leadlagnet.scoring import build_selections
from leadlagnet.sweep import (
    SweepError,
    SweepSpec,
    cross_section,
    default_stops,
    default_thresholds,
    run_sweep,
    write_contour_csv,
)


@pytest.fixture(scope="module")
def market():
    panel = generate_synthetic_panel(8, 260, seed=7, volatility=0.02)
    return panel, build_selections(panel, 70)


def test_default_axes():
    assert default_thresholds() == [1.0, 1.01, 1.02, 1.03, 1.04, 1.05, 1.06, 1.07, 1.08, 1.09,
                                    1.1, 1.11, 1.12, 1.13, 1.14, 1.15]
    stops = default_stops()
    assert len(stops) == 21 and stops[0] == 0.0 and stops[-1] == 1.0


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(buy_thresholds=())
    with pytest.raises(ValueError):
        SweepSpec(trailing_stops=(0.1, 0.1))
    assert SweepSpec((1.01, 1.02), (0.1, 0.2, 0.3)).shape == (3, 2)


def test_one_by_one_equals_backtest(market):
    panel, sel = market
    grid = run_sweep(SweepSpec((1.02,), (0.10,)), panel, sel)
    direct = run_backtest(panel, sel, StrategyParams(buy_threshold=1.02, trailing_stop=0.10))
    assert grid.returns[0, 0] == direct.portfolio_return
    assert grid.trade_counts[0, 0] == direct.buy_count


def test_unreachable_threshold_column(market):
    panel, sel = market
    ratio = (panel.closes[1:] / panel.closes[:-1]).max()
    grid = run_sweep(SweepSpec((1.01, ratio * 1.001), (0.05, 0.5)), panel, sel)
    assert (grid.returns[:, 1] == 0.0).all()
    assert (grid.trade_counts[:, 1] == 0).all()


def test_three_by_three_matches_independent_runs(market):
    panel, sel = market
    spec = SweepSpec((1.0, 1.02, 1.04), (0.0, 0.1, 0.3))
    grid = run_sweep(spec, panel, sel)
    for i, s in enumerate(spec.trailing_stops):
        for j, b in enumerate(spec.buy_thresholds):
            r = run_backtest(panel, sel, StrategyParams(buy_threshold=b, trailing_stop=s))
            assert grid.returns[i, j] == r.portfolio_return
            assert grid.trade_counts[i, j] == r.buy_count


def test_order_does_not_matter(market):
    panel, sel = market
    spec = SweepSpec((1.0, 1.01, 1.03), (0.05, 0.2))
    cells = [(i, j) for i in range(2) for j in range(3)]
    random.Random(3).shuffle(cells)
    a, b = run_sweep(spec, panel, sel), run_sweep(spec, panel, sel, order=cells)
    assert np.array_equal(a.returns, b.returns)
    assert np.array_equal(a.trade_counts, b.trade_counts)


def test_incomplete_order_raises(market):
    panel, sel = market
    with pytest.raises(SweepError, match="cover"):
        run_sweep(SweepSpec((1.0, 1.01), (0.1,)), panel, sel, order=[(0, 0)])


def test_cross_sections(market):
    panel, sel = market
    grid = run_sweep(SweepSpec((1.0, 1.02, 1.04), (0.1, 0.2)), panel, sel)
    row = cross_section(grid, "hold-stop", 1)
    assert row.held_value == 0.2 and row.coords == (1.0, 1.02, 1.04)
    assert np.array_equal(row.returns, grid.returns[1])
    col = cross_section(grid, "hold-threshold", 2)
    assert col.held_value == 1.04 and col.coords == (0.1, 0.2)
    assert np.array_equal(col.trade_counts, grid.trade_counts[:, 2])
    with pytest.raises(IndexError):
        cross_section(grid, "hold-stop", 2)
    with pytest.raises(ValueError):
        cross_section(grid, "diagonal", 0)


def test_contour_csv(tmp_path, market):
    panel, sel = market
    grid = run_sweep(SweepSpec((1.0, 1.5), (0.1, 0.2, 0.3)), panel, sel)
    lines = write_contour_csv(grid, tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "# grid 3x2 (trailing_stops x buy_thresholds)"
    assert lines[1] == "trailing_stop,buy_threshold,portfolio_return,trade_count"
    assert len(lines) == 2 + 6
    assert lines[3].startswith("0.1,1.5,0.0,0")
    first = lines[2].split(",")
    assert float(first[2]) == grid.returns[0, 0] and int(first[3]) == grid.trade_counts[0, 0]
