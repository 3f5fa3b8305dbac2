"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that is printed immediately and
repeated in the terminal summary.
"""

import contextlib
import math
import random
import time

import numpy as np

from leadlagnet.backtest import StrategyParams, run_backtest
from leadlagnet.cli import main
from leadlagnet.ingest import ReturnsPanel, align_calendars, generate_synthetic_panel, load_benchmark, load_price_panel
from leadlagnet.leadlag import DetectionParams, LeadLagTensor, build_tensor, sum_and_mask, top_pairs
from leadlagnet.scoring import CapmParams, SelectionParams, build_selections, capm_expected_return, estimate_beta
from leadlagnet.sweep import SweepSpec, default_thresholds, run_sweep

from conftest import ACCEPTANCE_RESULTS, read_expected_table, selection


@contextlib.contextmanager
def criterion(number, title):
    started = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        line = f"[{status}] criterion {number}: {title} ({time.perf_counter() - started:.2f}s)"
        ACCEPTANCE_RESULTS.append(line)
        print(line)


# independent oracles


def oracle_tensor(r, lag, eps, k, stride):
    n_days, n = len(r), len(r[0])
    out, w = [], 0
    while w + k + lag <= n_days:
        out.append([[all(abs(r[t + lag][i] - r[t][j]) <= eps for t in range(w, w + k))
                     for j in range(n)] for i in range(n)])
        w += stride
    return out


def oracle_top(counts, tickers, k):
    cells = [(-int(counts[i][j]), tickers[i], tickers[j])
             for i in range(len(tickers)) for j in range(len(tickers)) if i != j and counts[i][j] > 0]
    return [(leader, lagger, -neg) for neg, lagger, leader in sorted(cells)[:k]]


def oracle_beta(x, m):
    n = len(x)
    mx, mm = math.fsum(x) / n, math.fsum(m) / n
    return (math.fsum((a - mx) * (b - mm) for a, b in zip(x, m))
            / math.fsum((b - mm) ** 2 for b in m))


def max_daily_ratio(panel):
    return float((panel.closes[1:] / panel.closes[:-1]).max())


def default_start():
    det, sel = DetectionParams(), SelectionParams()
    return det.window + det.lag + sel.lookback_slices - 1


# criteria


def test_1_tensor_matches_brute_force():
    rng = random.Random(2024)
    with criterion(1, "build_tensor equals brute-force oracle on 200 random universes"):
        started = time.perf_counter()
        for case in range(200):
            n, days = rng.randint(1, 5), rng.randint(2, 20)
            lag = rng.randint(1, days - 1)
            k = rng.randint(1, days - lag)
            stride = rng.randint(1, 3)
            eps = rng.choice([0.0, 0.005, 0.01, 0.02, rng.uniform(0, 0.03)])
            grid = [-0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.02]
            if case % 2:
                r = [[rng.choice(grid) for _ in range(n)] for _ in range(days)]
            else:
                r = [[rng.gauss(0, 0.01) for _ in range(n)] for _ in range(days)]
            panel = ReturnsPanel(tuple(range(days)), tuple(f"T{i}" for i in range(n)), np.array(r))
            got = build_tensor(panel, DetectionParams(lag, eps, k), stride).slices.tolist()
            assert got == oracle_tensor(r, lag, eps, k, stride), f"case {case}"
        assert time.perf_counter() - started < 10.0


def test_2_top_pairs_exhaustive():
    rng = np.random.default_rng(7)
    with criterion(2, "top_pairs equals exhaustive sort on 200 summed matrices"):
        for case in range(200):
            n = int(rng.integers(2, 8))
            tickers = tuple(f"X{i}" for i in range(n))
            # few distinct values force ties; the raw diagonal is dense on purpose
            slices = rng.random((int(rng.integers(1, 6)), n, n)) < rng.uniform(0.1, 0.9)
            slices[:, np.arange(n), np.arange(n)] = True
            tensor = LeadLagTensor(tickers, tuple(range(len(slices))), slices, DetectionParams())
            summed = sum_and_mask(tensor, len(slices))
            raw = slices.sum(axis=0)
            k = int(rng.integers(0, n * n + 2))
            got = [(p.leader, p.lagger, p.strength) for p in top_pairs(summed, k)]
            assert got == oracle_top(raw, tickers, k), f"case {case}"
            assert all(a != b for a, b, _ in got)


def test_3_capm():
    rng = np.random.default_rng(3)
    with criterion(3, "beta identities, two-pass oracle and CAPM formula"):
        m = rng.normal(0.0004, 0.012, 252)
        p = CapmParams()
        assert estimate_beta(m, m, p) == 1.0
        assert estimate_beta(2 * m, m, p) == 2.0
        for _ in range(100):
            n = int(rng.integers(5, 300))
            mk = rng.normal(0, 0.01, n)
            x = rng.uniform(-2, 3) * mk + rng.normal(0, 0.015, n)
            beta = estimate_beta(x, mk, CapmParams(beta_lookback=n))
            assert abs(beta - oracle_beta(list(x), list(mk))) <= 1e-12
        for _ in range(100):
            rf, beta, rm = rng.uniform(0, 0.08), rng.uniform(-2, 3), rng.uniform(-0.5, 0.5)
            got = capm_expected_return(beta, rm, CapmParams(risk_free_rate=rf))
            assert abs(got - (rf + beta * (rm - rf))) <= 1e-12


def test_4_zero_trade(fixtures_dir):
    with criterion(4, "threshold above max daily ratio gives empty ledger and zero return"):
        synth = generate_synthetic_panel(10, 500, seed=1)
        fixture = align_calendars(load_price_panel(fixtures_dir / "hand_sim_prices.csv"),
                                  load_benchmark(fixtures_dir / "hand_sim_benchmark.csv"))
        cases = [(synth, build_selections(synth, default_start())),
                 (fixture, [selection(fixture, 0, ("L1", "G1"), ("L2", "G2")),
                            selection(fixture, 5, ("L1", "G1"))])]
        for panel, sel in cases:
            assert any(q.pairs for q in sel)
            b = np.nextafter(max_daily_ratio(panel), np.inf)
            for mode in ("trailing-max", "prev-close"):
                result = run_backtest(panel, sel, StrategyParams(buy_threshold=b, stop_mode=mode,
                                                                 commission_per_trade=10.0))
                assert result.trades == ()
                assert result.portfolio_return == 0.0


def test_5_trade_count_monotone():
    with criterion(5, "buy counts non-increasing over the 16-point threshold sweep"):
        panel = generate_synthetic_panel(10, 500, seed=1)
        spec = SweepSpec(tuple(default_thresholds()), (StrategyParams().trailing_stop,))
        counts = run_sweep(spec, panel, build_selections(panel, default_start())).trade_counts[0]
        print("buy counts:", counts.tolist())
        assert counts[0] > 0
        assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_6_accounting():
    with criterion(6, "no negative cash/shares over 1000 days; idle strategy keeps 500,000"):
        panel = generate_synthetic_panel(10, 1000, seed=11, volatility=0.02)
        sel = build_selections(panel, default_start())

        def check(_, state):
            assert state.idle_cash >= 0
            for bucket in state.buckets.values():
                assert bucket.cash >= 0 and bucket.shares >= 0

        for params in (StrategyParams(), StrategyParams(buy_threshold=1.0, trailing_stop=0.01,
                                                        commission_per_trade=25.0),
                       StrategyParams(stop_mode="prev-close", fractional_shares=False,
                                      commission_per_trade=5.0)):
            result = run_backtest(panel, sel, params, observer=check)
            assert result.buy_count > 0
            assert (result.daily_cash >= 0).all()
        idle = run_backtest(panel, sel, StrategyParams(buy_threshold=max_daily_ratio(panel) * 1.01))
        assert idle.final_value == 500000.0
        assert (idle.daily_values == 500000.0).all()


def test_7_hand_simulation(fixtures_dir):
    with criterion(7, "hand-computed daily values reproduced to 1e-9"):
        panel = align_calendars(load_price_panel(fixtures_dir / "hand_sim_prices.csv"),
                                load_benchmark(fixtures_dir / "hand_sim_benchmark.csv"))
        sel = [selection(panel, 0, ("L1", "G1"), ("L2", "G2")), selection(panel, 5, ("L1", "G1"))]
        expected = read_expected_table(fixtures_dir / "hand_sim_expected.csv")
        for commission, column in ((0.0, "value_commission_0"), (10.0, "value_commission_10")):
            result = run_backtest(panel, sel, StrategyParams(commission_per_trade=commission))
            want = np.array([float(row[column]) for row in expected])
            assert np.abs(result.daily_values - want).max() <= 1e-9
            triggers = {t.trigger for t in result.trades}
            assert {"rebalance-liquidation", "stop"} <= triggers


def test_8_sweep_consistency():
    with criterion(8, "5x5 sweep equals independent backtests under any evaluation order"):
        started = time.perf_counter()
        panel = generate_synthetic_panel(10, 500, seed=1)
        sel = build_selections(panel, default_start())
        spec = SweepSpec((1.0, 1.01, 1.02, 1.03, 1.05), (0.0, 0.05, 0.1, 0.2, 0.5))
        grid = run_sweep(spec, panel, sel)
        for i, s in enumerate(spec.trailing_stops):
            for j, b in enumerate(spec.buy_thresholds):
                single = run_backtest(panel, sel, StrategyParams(buy_threshold=b, trailing_stop=s))
                assert grid.returns[i, j] == single.portfolio_return
                assert grid.trade_counts[i, j] == single.buy_count
        cells = [(i, j) for i in range(5) for j in range(5)]
        random.Random(8).shuffle(cells)
        shuffled = run_sweep(spec, panel, sel, order=cells)
        assert np.array_equal(grid.returns, shuffled.returns)
        assert np.array_equal(grid.trade_counts, shuffled.trade_counts)
        assert time.perf_counter() - started < 60.0


def pipeline(root):
    data = root / "data"
    assert main(["synth", "--out", str(data), "--seed", "1"]) == 0
    cfg = root / "run.cfg"
    cfg.write_text("paths.prices = data/prices.csv\n"
                   "paths.benchmark = data/benchmark.csv\n"
                   "paths.out = out\n"
                   "sweep.buy_thresholds = 1.00:1.04:0.01\n"
                   "sweep.trailing_stops = 0.05,0.1,0.2\n", encoding="utf-8")
    for command in ("network", "select", "backtest", "sweep"):
        assert main([command, "--config", str(cfg)]) == 0
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_9_determinism(tmp_path):
    with criterion(9, "two full pipeline runs are byte-identical, DOT colored red/blue"):
        first, second = pipeline(tmp_path / "a"), pipeline(tmp_path / "b")
        assert first == second
        names = {p.name for p in first}
        assert {"network.dot", "adjacency.csv", "selections.csv", "trades.csv",
                "daily_values.csv", "summary.txt", "sweep.csv"} <= names
        dot = next(v for p, v in first.items() if p.name == "network.dot").decode()
        assert "[color=red];" in dot and "[color=blue];" in dot
