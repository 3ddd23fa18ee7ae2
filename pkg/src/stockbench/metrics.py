"""Eleven evaluation metrics across the ranking, portfolio and error dimensions.

Ranking: IC, ICIR, RankIC, RankICIR. Day-t scores are always compared against
day-t+1 realized returns. The default (and field-standard) reading is one
cross-sectional correlation per day, averaged over days; a per-stock temporal
axis is available for comparison and reports label which one was used.

Portfolio: ARR, AVol, MDD, ASR, IR on daily strategy returns, with 252 as the
annualization constant.

Error: MSE, MAE over all unmasked (stock, day) prediction cells.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .panel import ReturnPanel, ScorePanel

TRADING_DAYS_PER_YEAR = 252

AXIS_CROSS_SECTIONAL = "cross_sectional"
AXIS_TEMPORAL = "temporal"

#: JSON field names of the report, in canonical column order.
REPORT_FIELDS = (
    "MSE",
    "MAE",
    "IC",
    "ICIR",
    "RankIC",
    "RankICIR",
    "ARR",
    "AVol",
    "MDD",
    "ASR",
    "IR",
)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    am = a - a.mean()
    bm = b - b.mean()
    denom = np.sqrt(float(am @ am) * float(bm @ bm))
    if denom == 0.0:
        return float("nan")
    return float(am @ bm) / denom


def midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the average of the covered ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _correlate(a: np.ndarray, b: np.ndarray, method: str) -> float:
    if method == "pearson":
        return _pearson(a, b)
    if method == "spearman":
        return _pearson(midranks(a), midranks(b))
    raise ValueError(f"unknown correlation method {method!r}")


def daily_ic_series(
    scores: ScorePanel,
    returns: ReturnPanel,
    days: Iterable[int],
    method: str = "pearson",
) -> np.ndarray:
    """One cross-sectional correlation per prediction day.

    Day-t scores are correlated with day-t+1 realized returns over the jointly
    unmasked stocks. Days with fewer than 3 such stocks or zero cross-sectional
    variance yield NaN and are excluded from aggregates.
    """
    days = list(days)
    out = np.full(len(days), np.nan)
    for idx, t in enumerate(days):
        if t + 1 >= returns.n_days:
            continue
        y = scores.values[:, t]
        r = returns.values[:, t + 1]
        ok = np.isfinite(y) & np.isfinite(r)
        if ok.sum() < 3:
            continue
        out[idx] = _correlate(y[ok], r[ok], method)
    return out


def per_stock_ic_series(
    scores: ScorePanel,
    returns: ReturnPanel,
    days: Iterable[int],
    method: str = "pearson",
) -> np.ndarray:
    """Temporal reading: one correlation per stock over the evaluation days."""
    days = [t for t in days if t + 1 < returns.n_days]
    out = np.full(scores.n_stocks, np.nan)
    y = scores.values[:, days]
    r = returns.values[:, [t + 1 for t in days]]
    for i in range(scores.n_stocks):
        ok = np.isfinite(y[i]) & np.isfinite(r[i])
        if ok.sum() < 3:
            continue
        out[i] = _correlate(y[i][ok], r[i][ok], method)
    return out


def information_ratio_of(series: np.ndarray) -> float:
    """mean / sample std of a series (NaNs dropped), no annualization."""
    x = np.asarray(series, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 2:
        raise ValueError("need at least 2 unmasked values")
    std = float(x.std(ddof=1))
    if std == 0.0:
        raise ValueError("zero standard deviation")
    return float(x.mean()) / std


@dataclass
class PortfolioMetrics:
    arr: float
    avol: float
    mdd: float
    asr: Optional[float]
    ir: Optional[float]


def max_drawdown(equity: np.ndarray) -> float:
    """Largest peak-to-trough relative decline, reported as a negative number."""
    eq = np.asarray(equity, dtype=float)
    peaks = np.maximum.accumulate(eq)
    drawdowns = (peaks - eq) / peaks
    return -float(drawdowns.max())


def portfolio_metrics(
    daily_returns: np.ndarray, benchmark_returns: Optional[np.ndarray] = None
) -> PortfolioMetrics:
    """ARR, AVol, MDD, ASR and (with a benchmark) IR from daily return series.

    ARR = (1 + TotalReturn)^(252/n) - 1 with TotalReturn = prod(1 + R_p) - 1;
    AVol = sqrt(252 * Var(R_p)) with sample variance; MDD is computed on the
    compounded equity curve starting from 1; ASR = ARR / AVol. IR is the mean
    active return over its sample standard deviation, unannualized. ASR is
    None when AVol is 0; IR is None without a benchmark or with zero active
    dispersion.
    """
    rp = np.asarray(daily_returns, dtype=float)
    if rp.size < 2:
        raise ValueError("need at least 2 daily returns")
    if not np.isfinite(rp).all():
        raise ValueError("daily returns contain non-finite values")
    n = rp.size
    total_return = float(np.prod(1.0 + rp)) - 1.0
    arr = float((1.0 + total_return) ** (TRADING_DAYS_PER_YEAR / n)) - 1.0
    avol = float(np.sqrt(TRADING_DAYS_PER_YEAR * rp.var(ddof=1)))
    equity = np.concatenate(([1.0], np.cumprod(1.0 + rp)))
    mdd = max_drawdown(equity)
    asr = arr / avol if avol > 0.0 else None
    ir = None
    if benchmark_returns is not None:
        rb = np.asarray(benchmark_returns, dtype=float)
        if rb.shape != rp.shape:
            raise ValueError("benchmark series not aligned with portfolio returns")
        active = rp - rb
        std = float(active.std(ddof=1))
        if std > 0.0:
            ir = float(active.mean()) / std
    return PortfolioMetrics(arr=arr, avol=avol, mdd=mdd, asr=asr, ir=ir)


def error_metrics(
    scores: ScorePanel, returns: ReturnPanel, days: Iterable[int]
) -> tuple[float, float]:
    """(MSE, MAE) over all unmasked prediction cells in the evaluation range."""
    diffs = []
    for t in days:
        if t + 1 >= returns.n_days:
            continue
        y = scores.values[:, t]
        r = returns.values[:, t + 1]
        ok = np.isfinite(y) & np.isfinite(r)
        if ok.any():
            diffs.append(y[ok] - r[ok])
    if not diffs:
        raise ValueError("no unmasked (score, return) pairs in range")
    d = np.concatenate(diffs)
    return float(np.mean(d * d)), float(np.mean(np.abs(d)))


@dataclass
class MetricsReport:
    """The full eleven-metric result plus the per-day series kept for audit."""

    mse: float
    mae: float
    ic_mean: float
    icir: Optional[float]
    rank_ic_mean: float
    rank_icir: Optional[float]
    arr: float
    avol: float
    mdd: float
    asr: Optional[float]
    ir: Optional[float]
    ic_axis: str = AXIS_CROSS_SECTIONAL
    ic_series: np.ndarray = field(default_factory=lambda: np.array([]))
    rank_ic_series: np.ndarray = field(default_factory=lambda: np.array([]))

    def to_dict(self) -> dict:
        def clean(v: Optional[float]) -> Optional[float]:
            # undefined metrics serialize as null, never as bare NaN
            return None if v is None or not np.isfinite(v) else float(v)

        return {
            "MSE": clean(self.mse),
            "MAE": clean(self.mae),
            "IC": clean(self.ic_mean),
            "ICIR": clean(self.icir),
            "RankIC": clean(self.rank_ic_mean),
            "RankICIR": clean(self.rank_icir),
            "ARR": clean(self.arr),
            "AVol": clean(self.avol),
            "MDD": clean(self.mdd),
            "ASR": clean(self.asr),
            "IR": clean(self.ir),
            "ic_axis": self.ic_axis,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def compute_report(
    scores: ScorePanel,
    returns: ReturnPanel,
    days: Iterable[int],
    daily_portfolio_returns: np.ndarray,
    benchmark_returns: Optional[np.ndarray] = None,
    ic_axis: str = AXIS_CROSS_SECTIONAL,
) -> MetricsReport:
    """Assemble the full report for one predictor's evaluation run."""
    days = list(days)
    if ic_axis == AXIS_CROSS_SECTIONAL:
        ic = daily_ic_series(scores, returns, days, method="pearson")
        rank_ic = daily_ic_series(scores, returns, days, method="spearman")
    elif ic_axis == AXIS_TEMPORAL:
        ic = per_stock_ic_series(scores, returns, days, method="pearson")
        rank_ic = per_stock_ic_series(scores, returns, days, method="spearman")
    else:
        raise ValueError(f"unknown ic_axis {ic_axis!r}")

    def _safe_ir(series: np.ndarray) -> Optional[float]:
        try:
            return information_ratio_of(series)
        except ValueError:
            return None

    mse, mae = error_metrics(scores, returns, days)
    pm = portfolio_metrics(daily_portfolio_returns, benchmark_returns)
    return MetricsReport(
        mse=mse,
        mae=mae,
        ic_mean=float(np.nanmean(ic)),
        icir=_safe_ir(ic),
        rank_ic_mean=float(np.nanmean(rank_ic)),
        rank_icir=_safe_ir(rank_ic),
        arr=pm.arr,
        avol=pm.avol,
        mdd=pm.mdd,
        asr=pm.asr,
        ir=pm.ir,
        ic_axis=ic_axis,
        ic_series=ic,
        rank_ic_series=rank_ic,
    )


def save_report_json(report: MetricsReport, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(report.to_json())
