"""Command-line entry point: ``leadlagnet {synth,network,select,backtest,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys
from bisect import bisect_left, bisect_right
from pathlib import Path

from .backtest import evaluate_performance, run_backtest, write_ledger_csv, write_values_csv
from .config import RunConfig, load_config
from .errors import ConfigError, DataError
from .ingest import (
    PricePanel,
    align_calendars,
    compute_returns,
    generate_synthetic_panel,
    load_benchmark,
    load_price_panel,
    write_benchmark,
    write_price_panel,
)
from .leadlag import build_tensor, export_graph, top_pairs, write_adjacency_csv
from .scoring import build_selections, summed_at, write_selections_csv
from .sweep import run_sweep, write_contour_csv

logger = logging.getLogger("leadlagnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _load_panel(cfg: RunConfig, need_benchmark: bool) -> PricePanel:
    if cfg.prices is None:
        raise ConfigError("paths.prices is not set")
    panel = load_price_panel(cfg.prices, cfg.gaps)
    if cfg.benchmark is not None:
        panel = align_calendars(panel, load_benchmark(cfg.benchmark))
    elif need_benchmark:
        raise ConfigError("paths.benchmark is required for CAPM scoring")
    return panel


def _resolve_span(cfg: RunConfig, panel: PricePanel) -> tuple[PricePanel, int]:
    """Trim the panel at the span end and find the first trading row.

    Without an explicit start the first row with a full lookback of lead-lag
    slices is used.
    """
    start, end = cfg.span
    if end is not None:
        panel = panel.date_slice(0, bisect_right(panel.dates, end))
    if len(panel) < 2:
        raise DataError("span leaves fewer than two trading days")
    if start is not None:
        idx = bisect_left(panel.dates, start)
    else:
        det = cfg.detection
        idx = det.window + det.lag + (cfg.selection.lookback_slices - 1) * cfg.stride
    if idx >= len(panel):
        raise DataError("span start lies beyond the available data")
    return panel, max(idx, 0)


def cmd_synth(cfg: RunConfig) -> int:
    s = cfg.synth
    panel = generate_synthetic_panel(s.tickers, s.days, s.drift, s.volatility, s.seed, s.start)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_price_panel(panel, cfg.out / "prices.csv")
    write_benchmark(panel, cfg.out / "benchmark.csv")
    print(f"wrote {len(panel.tickers)} tickers x {len(panel)} days to {cfg.out}")
    return EXIT_OK


def cmd_network(cfg: RunConfig) -> int:
    panel, start = _resolve_span(cfg, _load_panel(cfg, need_benchmark=False))
    tensor = build_tensor(compute_returns(panel), cfg.detection, cfg.stride)
    summed = summed_at(tensor, start, cfg.selection.lookback_slices)
    if summed is None:
        raise DataError("no lead-lag pairs: not enough history before the span start")
    pairs = top_pairs(summed, cfg.selection.candidate_count)
    if not pairs:
        raise DataError("no lead-lag pairs")
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_adjacency_csv(summed, cfg.out / "adjacency.csv")
    export_graph(pairs, cfg.out / "network.dot")
    print(f"{len(pairs)} lead-lag pairs on {panel.dates[start].isoformat()}")
    return EXIT_OK


def _selections(cfg: RunConfig):
    panel, start = _resolve_span(cfg, _load_panel(cfg, need_benchmark=True))
    sel = build_selections(panel, start, cfg.detection, cfg.capm, cfg.selection, cfg.stride)
    return panel, sel


def cmd_select(cfg: RunConfig) -> int:
    _, selections = _selections(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_selections_csv(selections, cfg.out / "selections.csv")
    for q in selections:
        print(f"{q.date.isoformat()}: {len(q.pairs)} pairs")
    return EXIT_OK


def format_summary(portfolio: float, benchmark: float) -> str:
    return (f"portfolio_return = {portfolio:.10f}\n"
            f"benchmark_return = {benchmark:.10f}\n"
            f"excess_return = {portfolio - benchmark:.10f}\n")


def cmd_backtest(cfg: RunConfig) -> int:
    panel, selections = _selections(cfg)
    result = run_backtest(panel, selections, cfg.strategy)
    report = evaluate_performance(result, result.benchmark_values)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_ledger_csv(result, cfg.out / "trades.csv")
    write_values_csv(result, cfg.out / "daily_values.csv", report)
    summary = format_summary(report.portfolio_return, report.benchmark_return)
    (cfg.out / "summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    panel, selections = _selections(cfg)
    grid = run_sweep(cfg.sweep, panel, selections)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_contour_csv(grid, cfg.out / "sweep.csv")
    best = grid.returns.argmax()
    i, j = divmod(int(best), grid.shape[1])
    print(f"grid {grid.shape[0]}x{grid.shape[1]}; best return {grid.returns[i, j]:.6f} "
          f"at trailing_stop={grid.trailing_stops[i]}, buy_threshold={grid.buy_thresholds[j]}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "network": cmd_network,
    "select": cmd_select,
    "backtest": cmd_backtest,
    "sweep": cmd_sweep,
}


HELP = {
    "synth": "write a synthetic price panel and benchmark",
    "network": "export the lead-lag network at the span start (adjacency CSV + DOT)",
    "select": "write the quarterly pair selections",
    "backtest": "run the strategy; write ledger, daily values and summary",
    "sweep": "grid the backtest over buy threshold x trailing stop",
}


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand defaults from clobbering flags given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="key = value run configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--prices", help="long-form date,ticker,close CSV")
    common.add_argument("--benchmark", help="date,close benchmark CSV")
    common.add_argument("--span", help="START:END ISO dates, either side optional")
    common.add_argument("--stop-mode", choices=["trailing-max", "prev-close"])
    common.add_argument("--buy-threshold")
    common.add_argument("--trailing-stop")
    common.add_argument("--seed", help="synthetic data seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="leadlagnet", parents=[common],
                                     description="Lead-lag network trading pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


_FLAG_KEYS = {
    "out": "paths.out",
    "prices": "paths.prices",
    "benchmark": "paths.benchmark",
    "span": "span",
    "stop_mode": "strategy.stop_mode",
    "buy_threshold": "strategy.buy_threshold",
    "trailing_stop": "strategy.trailing_stop",
    "seed": "synth.seed",
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items()
                 if getattr(args, flag, None) is not None}
    try:
        cfg = load_config(getattr(args, "config", None), overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
