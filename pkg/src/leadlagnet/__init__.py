"""Lead-lag stock networks, CAPM/out-degree pair scoring and backtesting."""

from .backtest import (
    BacktestResult,
    PerformanceReport,
    StopMode,
    StrategyParams,
    Trade,
    evaluate_performance,
    run_backtest,
)
from .ingest import (
    GapPolicy,
    PricePanel,
    ReturnsPanel,
    align_calendars,
    compute_returns,
    generate_synthetic_panel,
    load_benchmark,
    load_price_panel,
)
from .leadlag import (
    DetectionParams,
    LeaderLaggerPair,
    LeadLagTensor,
    SummedLeadMatrix,
    build_tensor,
    detect_lead,
    export_graph,
    out_degree,
    sum_and_mask,
    top_pairs,
)
from .scoring import (
    CapmParams,
    QuarterSelection,
    ScoredPair,
    SelectionParams,
    blend_and_select,
    build_selections,
    estimate_beta,
    quarterly_schedule,
)
from .sweep import SweepGrid, SweepSpec, cross_section, run_sweep

__version__ = "0.1.0"
