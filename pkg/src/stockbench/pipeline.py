"""End-to-end orchestration: synth, build, characterize, run, report.

A run flows through four stages - data, preparation (returns + leak-free
per-day normalization), training, backtesting/scoring - and archives every
artifact in a timestamped directory that is reproducible from the archived
config snapshot plus the seed alone. Archive writes are atomic
(write-temp-then-rename).
"""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .backtest import (
    BacktestConfig,
    PortfolioState,
    run_backtest,
    save_equity_csv,
    save_trades_csv,
)
from .characteristics import pattern_aggregates
from .config import RunConfig
from .io import load_panel, save_panel
from .metrics import REPORT_FIELDS, MetricsReport, compute_report
from .panel import (
    DatasetSplit,
    PricePanel,
    ReturnPanel,
    compute_returns,
    cross_sectional_normalize,
    split_chronological,
    subset_panel,
)
from .predictors import PredictorSpec, TrainedModel, predict_scores, save_model, train_predictor
from .segments import (
    MovementPattern,
    classify_segment,
    cut_segments,
    save_labelings,
)
from .synth import DEFAULT_REGIMES, generate_labeled_panel, regime_with

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage tag for diagnostics."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc


def _regimes_from_overrides(overrides) -> dict:
    regimes = dict(DEFAULT_REGIMES)
    for pattern_name, params in (overrides or {}).items():
        pattern = MovementPattern(pattern_name)
        fields = {
            k: v
            for k, v in params.model_dump().items()
            if v is not None
        }
        regimes[pattern] = regime_with(pattern, **fields)
    return regimes


@dataclass
class SynthResult:
    panel_csv: str
    labels_csv: str
    n_stocks: int
    n_days: int


def cmd_synth(
    out_dir: Union[str, Path],
    seed: int,
    cohort_size: int = 10,
    n_days: int = 250,
    regime_overrides=None,
) -> SynthResult:
    """Generate and persist a synthetic panel plus its ground-truth labels."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    regimes = _regimes_from_overrides(regime_overrides)
    panel, truth = _stage(
        "synth", generate_labeled_panel, cohort_size, seed, n_days, regimes
    )
    panel_csv = out / "panel.csv"
    labels_csv = out / "truth_labels.csv"
    save_panel(panel, panel_csv)
    with open(labels_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stock_id", "pattern"])
        for stock in sorted(truth):
            writer.writerow([stock, truth[stock].value])
    return SynthResult(
        panel_csv=str(panel_csv),
        labels_csv=str(labels_csv),
        n_stocks=panel.n_stocks,
        n_days=panel.n_days,
    )


@dataclass
class DatasetEntry:
    segment_start: int
    segment_end: int
    pattern: str
    path: str
    n_stocks: int


@dataclass
class BuildResult:
    labels_csv: str
    datasets: list[DatasetEntry]
    discarded_days: int


def cmd_build(
    panel_csv: Union[str, Path],
    out_dir: Union[str, Path],
    fmt: str = "long",
    segment_len: int = 250,
    cohort_size: int = 300,
    z_threshold: float = 5.0,
) -> BuildResult:
    """Ingest, segment and label a panel; emit one sub-panel per (segment, pattern)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel = _stage("data", load_panel, panel_csv, fmt)
    returns = _stage("prepare", compute_returns, panel)
    bounds = _stage("segment", cut_segments, panel.n_days, segment_len)
    labelings = [
        _stage(
            "segment",
            classify_segment,
            returns,
            b,
            panel.stock_ids,
            cohort_size,
            z_threshold,
        )
        for b in bounds
    ]
    labels_csv = out / "labels.csv"
    save_labelings(labelings, labels_csv)
    datasets: list[DatasetEntry] = []
    for labeling in labelings:
        start, end = labeling.segment_bounds
        for pattern in MovementPattern:
            members = labeling.members(pattern)
            if not members:
                continue
            sub = subset_panel(panel, members, (start, end))
            path = out / f"segment_{start:04d}_{end:04d}" / pattern.value / "panel.csv"
            save_panel(sub, path)
            datasets.append(
                DatasetEntry(
                    segment_start=start,
                    segment_end=end,
                    pattern=pattern.value,
                    path=str(path),
                    n_stocks=sub.n_stocks,
                )
            )
    discarded = panel.n_days - bounds[-1][1]
    return BuildResult(
        labels_csv=str(labels_csv), datasets=datasets, discarded_days=discarded
    )


@dataclass
class CharacterizeResult:
    rows: list[dict]
    csv_path: str
    json_path: str


def cmd_characterize(
    panel_csv: Union[str, Path],
    out_dir: Union[str, Path],
    fmt: str = "long",
    segment_len: int = 250,
    cohort_size: int = 300,
    z_threshold: float = 5.0,
    adf_lags: Optional[int] = None,
    split_label: str = "7:1:2",
) -> CharacterizeResult:
    """Per-pattern sequence-quality table over every segment of a panel."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panel = _stage("data", load_panel, panel_csv, fmt)
    returns = _stage("prepare", compute_returns, panel)
    bounds = _stage("segment", cut_segments, panel.n_days, segment_len)
    rows: list[dict] = []
    for b in bounds:
        labeling = _stage(
            "segment", classify_segment, returns, b, panel.stock_ids,
            cohort_size, z_threshold,
        )
        summaries = _stage(
            "characterize",
            pattern_aggregates,
            panel,
            returns,
            labeling,
            adf_lags,
            split_label=split_label,
        )
        for s in summaries:
            rows.append(
                {
                    "segment_start": b[0],
                    "pattern": s.pattern.value,
                    "non_stationarity": s.non_stationarity,
                    "autocorrelation": s.autocorrelation,
                    "forecastability": s.forecastability,
                    "n_stocks": s.n_stocks,
                    "split": s.split,
                }
            )
    csv_path = out / "characteristics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "segment_start", "pattern", "non_stationarity",
                "autocorrelation", "forecastability", "n_stocks", "split",
            ],
        )
        writer.writeheader()
        writer.writerows(rows)
    json_path = out / "characteristics.json"
    json_path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return CharacterizeResult(rows=rows, csv_path=str(csv_path), json_path=str(json_path))


@dataclass
class PredictorRun:
    label: str
    model: TrainedModel
    report: MetricsReport
    state: PortfolioState
    scores_values: np.ndarray


@dataclass
class RunResult:
    archive: str
    metrics: dict[str, dict]


def _resolve_panel(cfg: RunConfig) -> tuple[PricePanel, Optional[dict]]:
    if cfg.data.csv_path is not None:
        cfg.validate_paths()
        return load_panel(cfg.data.csv_path, cfg.data.format), None
    spec = cfg.data.synth
    regimes = _regimes_from_overrides(spec.regime_overrides)
    panel, truth = generate_labeled_panel(
        spec.cohort_size, cfg.seed, spec.n_days, regimes
    )
    return panel, truth


def _run_one_predictor(
    pc,
    panel: PricePanel,
    norm_panel: PricePanel,
    returns: ReturnPanel,
    split: DatasetSplit,
    cfg: RunConfig,
) -> PredictorRun:
    spec = PredictorSpec(
        kind=pc.kind,
        lookback=pc.lookback,
        window=pc.window,
        ridge_lambda=pc.ridge_lambda,
        learning_rate=pc.learning_rate,
        epochs=pc.epochs,
        patience=pc.patience,
        eta=pc.eta,
    )
    model = _stage("train", train_predictor, spec, norm_panel, returns, split)
    test_days = list(split.test_days())
    scores = _stage("predict", predict_scores, model, norm_panel, returns, test_days)
    bt_cfg = BacktestConfig(
        strategy=cfg.backtest.strategy,
        top_k=cfg.backtest.top_k,
        n_drop=cfg.backtest.n_drop,
        fee_rate=cfg.backtest.fee_rate,
        initial_capital=cfg.backtest.initial_capital,
        reequalize_held=cfg.backtest.reequalize_held,
    )
    state = _stage("backtest", run_backtest, scores, panel, bt_cfg, test_days)
    report = _stage(
        "score",
        compute_report,
        scores,
        returns,
        test_days,
        state.daily_returns,
        state.benchmark_returns,
        cfg.metrics.ic_axis,
    )
    return PredictorRun(
        label=pc.label,
        model=model,
        report=report,
        state=state,
        scores_values=scores.values,
    )


def cmd_run(cfg: RunConfig, jobs: int = 1) -> RunResult:
    """Train every configured predictor, score the test range, backtest, archive."""
    panel, truth = _stage("data", _resolve_panel, cfg)
    returns = _stage("prepare", compute_returns, panel)
    if cfg.normalize:
        norm_panel = _stage(
            "prepare", cross_sectional_normalize, panel, cfg.normalize_features
        )
    else:
        norm_panel = panel
    split = _stage("split", split_chronological, panel.n_days, cfg.split.ratios)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    _run_one_predictor, pc, panel, norm_panel, returns, split, cfg
                )
                for pc in cfg.predictors
            ]
            runs = [f.result() for f in futures]
    else:
        runs = [
            _run_one_predictor(pc, panel, norm_panel, returns, split, cfg)
            for pc in cfg.predictors
        ]

    archive = _stage("archive", _write_archive, cfg, panel, truth, split, runs)
    return RunResult(
        archive=str(archive),
        metrics={run.label: run.report.to_dict() for run in runs},
    )


def _write_archive(
    cfg: RunConfig,
    panel: PricePanel,
    truth: Optional[dict],
    split: DatasetSplit,
    runs: list[PredictorRun],
) -> Path:
    out_root = Path(cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    final = out_root / f"run_{stamp}"
    tmp = out_root / f".run_{stamp}.tmp"
    tmp.mkdir()

    save_panel(panel, tmp / "panel.csv")
    if truth is not None:
        with open(tmp / "truth_labels.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stock_id", "pattern"])
            for stock in sorted(truth):
                writer.writerow([stock, truth[stock].value])

    # snapshot points at the archived panel so the archive is self-contained
    snapshot = cfg.model_copy(deep=True)
    snapshot.data.csv_path = "panel.csv"
    snapshot.data.synth = None
    snapshot.data.format = "long"
    (tmp / "config.yaml").write_text(snapshot.to_yaml())
    (tmp / "split.json").write_text(
        json.dumps(
            {"train": list(split.train), "valid": list(split.valid), "test": list(split.test)},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )

    metrics_all: dict[str, dict] = {}
    for run in runs:
        label = run.label
        save_model(run.model, tmp / "models" / f"{label}.json")
        (tmp / "metrics").mkdir(exist_ok=True)
        (tmp / "metrics" / f"{label}.json").write_text(run.report.to_json())
        metrics_all[label] = run.report.to_dict()
        save_trades_csv(run.state.trades, panel.calendar, tmp / "trades" / f"{label}.csv")
        save_equity_csv(run.state, panel.calendar, tmp / "equity" / f"{label}.csv")
        _save_predictions_csv(
            run.scores_values, panel, run.state.days, tmp / "predictions" / f"{label}.csv"
        )
        _save_ic_series_csv(run, panel, tmp / "ic_series" / f"{label}.csv")
    (tmp / "metrics_all.json").write_text(
        json.dumps(metrics_all, indent=2, sort_keys=True) + "\n"
    )
    _save_cumulative_returns_csv(runs, panel, tmp / "cumulative_returns.csv")
    os.rename(tmp, final)
    return final


def _save_predictions_csv(
    values: np.ndarray, panel: PricePanel, days: list[int], path: Path
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stock_id", "day", "date", "score"])
        for t in days:
            for i, stock in enumerate(panel.stock_ids):
                v = values[i, t]
                if np.isfinite(v):
                    writer.writerow([stock, t, panel.calendar[t], repr(float(v))])


def _save_ic_series_csv(run: PredictorRun, panel: PricePanel, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    report = run.report
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if report.ic_axis == "cross_sectional":
            writer.writerow(["day", "date", "ic", "rank_ic"])
            for k, t in enumerate(run.state.days):
                ic = report.ic_series[k] if k < len(report.ic_series) else float("nan")
                ric = (
                    report.rank_ic_series[k]
                    if k < len(report.rank_ic_series)
                    else float("nan")
                )
                writer.writerow(
                    [
                        t,
                        panel.calendar[t],
                        repr(float(ic)) if np.isfinite(ic) else "",
                        repr(float(ric)) if np.isfinite(ric) else "",
                    ]
                )
        else:
            writer.writerow(["stock_id", "ic", "rank_ic"])
            for i, stock in enumerate(panel.stock_ids):
                ic = report.ic_series[i]
                ric = report.rank_ic_series[i]
                writer.writerow(
                    [
                        stock,
                        repr(float(ic)) if np.isfinite(ic) else "",
                        repr(float(ric)) if np.isfinite(ric) else "",
                    ]
                )


def _save_cumulative_returns_csv(
    runs: list[PredictorRun], panel: PricePanel, path: Path
) -> None:
    if not runs:
        return
    days = runs[0].state.days
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "date"] + [run.label for run in runs])
        cums = {run.label: np.cumprod(1.0 + run.state.daily_returns) - 1.0 for run in runs}
        for k, t in enumerate(days):
            row = [t, panel.calendar[t]]
            for run in runs:
                row.append("0.0" if k == 0 else repr(float(cums[run.label][k - 1])))
            writer.writerow(row)


@dataclass
class ReportResult:
    table: list[dict]
    table_csv: str
    cumulative_returns_csv: str


def cmd_report(
    archives: list[Union[str, Path]], out_dir: Union[str, Path]
) -> ReportResult:
    """Cross-model comparison table plus merged cumulative-return series."""
    if not archives:
        raise StageError("report", "need at least one archive")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table: list[dict] = []
    curves: dict[str, list[str]] = {}
    max_len = 0
    for arch in archives:
        arch = Path(arch)
        metrics_path = arch / "metrics_all.json"
        if not metrics_path.exists():
            raise StageError("report", f"not a run archive (no metrics_all.json): {arch}")
        metrics_all = json.loads(metrics_path.read_text())
        for label in sorted(metrics_all):
            row = {"model": label, "archive": arch.name}
            for metric_name in REPORT_FIELDS:
                row[metric_name] = metrics_all[label].get(metric_name)
            table.append(row)
        cum_path = arch / "cumulative_returns.csv"
        if cum_path.exists():
            with open(cum_path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                cols = {name: [] for name in header[2:]}
                for csv_row in reader:
                    for name, value in zip(header[2:], csv_row[2:]):
                        cols[name].append(value)
            for name, values in cols.items():
                curves[f"{arch.name}:{name}"] = values
                max_len = max(max_len, len(values))

    table_csv = out / "report.csv"
    with open(table_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model", "archive"] + list(REPORT_FIELDS))
        writer.writeheader()
        writer.writerows(table)
    cum_csv = out / "cumulative_returns.csv"
    with open(cum_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        names = sorted(curves)
        writer.writerow(["step"] + names)
        for k in range(max_len):
            writer.writerow(
                [k] + [curves[name][k] if k < len(curves[name]) else "" for name in names]
            )
    return ReportResult(
        table=table, table_csv=str(table_csv), cumulative_returns_csv=str(cum_csv)
    )
