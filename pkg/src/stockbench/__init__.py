"""stockbench: a benchmark engine for cross-sectional stock return forecasting.

Core surface: panel data model and leak-free preparation, movement-pattern
segmentation, sequence-quality characteristics, reference predictors,
TopK/TopK-Drop backtesting with transaction costs, the eleven-metric report,
a seeded synthetic market generator and the config-driven pipeline behind the
service and CLI.
"""

__version__ = "0.1.0"

from .backtest import BacktestConfig, PortfolioState, run_backtest, select_topk
from .characteristics import adf_statistic, autocorrelation, forecastability, pattern_aggregates
from .config import RunConfig, load_run_config
from .io import load_panel, load_panel_cache, save_panel, save_panel_cache
from .metrics import MetricsReport, compute_report, daily_ic_series, portfolio_metrics
from .panel import (
    DatasetSplit,
    PanelError,
    PricePanel,
    ReturnPanel,
    ScorePanel,
    compute_returns,
    cross_sectional_normalize,
    split_chronological,
)
from .predictors import (
    PredictorSpec,
    TrainedModel,
    composite_loss,
    fit_ridge,
    predict_blsw,
    predict_csm,
    train_linear_ranker,
    train_predictor,
)
from .segments import MovementPattern, SegmentLabeling, classify_segment, cut_segments, flag_black_swans
from .synth import DEFAULT_REGIMES, RegimeSpec, generate_labeled_panel, generate_panel

__all__ = [
    "__version__",
    "BacktestConfig",
    "PortfolioState",
    "run_backtest",
    "select_topk",
    "adf_statistic",
    "autocorrelation",
    "forecastability",
    "pattern_aggregates",
    "RunConfig",
    "load_run_config",
    "load_panel",
    "load_panel_cache",
    "save_panel",
    "save_panel_cache",
    "MetricsReport",
    "compute_report",
    "daily_ic_series",
    "portfolio_metrics",
    "DatasetSplit",
    "PanelError",
    "PricePanel",
    "ReturnPanel",
    "ScorePanel",
    "compute_returns",
    "cross_sectional_normalize",
    "split_chronological",
    "PredictorSpec",
    "TrainedModel",
    "composite_loss",
    "fit_ridge",
    "predict_blsw",
    "predict_csm",
    "train_linear_ranker",
    "train_predictor",
    "MovementPattern",
    "SegmentLabeling",
    "classify_segment",
    "cut_segments",
    "flag_black_swans",
    "DEFAULT_REGIMES",
    "RegimeSpec",
    "generate_labeled_panel",
    "generate_panel",
]
