from __future__ import annotations

import csv
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from leadlagnet.ingest import PricePanel
from leadlagnet.leadlag import LeaderLaggerPair
from leadlagnet.scoring import QuarterSelection, ScoredPair

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def make_panel(columns: dict[str, list[float]], start: date = date(2022, 1, 3),
               benchmark: list[float] | None = None) -> PricePanel:
    """Panel on consecutive business days from plain close lists."""
    n = len(next(iter(columns.values())))
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    closes = np.column_stack([columns[k] for k in columns]).astype(float)
    bench = None if benchmark is None else np.asarray(benchmark, dtype=float)
    return PricePanel(tuple(d.item() for d in days), tuple(columns), closes, bench)


def pair(leader: str, lagger: str, strength: int = 1) -> ScoredPair:
    """ScoredPair whose scores are irrelevant to the backtest."""
    return ScoredPair(LeaderLaggerPair(leader, lagger, strength), 1.0, 0.1, 1.0, 0.37)


def selection(panel: PricePanel, index: int, *pairs: tuple[str, str]) -> QuarterSelection:
    return QuarterSelection(index, panel.dates[index], tuple(pair(a, b) for a, b in pairs))


def read_expected_table(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
