"""Sequence-quality statistics: non-stationarity, autocorrelation, forecastability.

Three per-series diagnostics profile each movement pattern:

* a unit-root regression t-statistic (more negative = more stationary),
  computed on price levels;
* the lagged autocorrelation of returns with the full-series variance in the
  denominator;
* forecastability = 1 - normalized spectral entropy of the return
  periodogram (1 for a pure tone, near 0 for white noise).
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .panel import PricePanel, ReturnPanel
from .segments import MovementPattern, SegmentLabeling

logger = logging.getLogger(__name__)

TREND_CONSTANT = "constant"
TREND_CONSTANT_TREND = "constant+trend"


@dataclass
class AdfResult:
    """Unit-root regression output.

    ``statistic`` is the t-statistic of the lagged-level coefficient in

        diff(s)_t = alpha + beta * t + gamma * s_{t-1}
                    + sum_{j=1..p} delta_j * diff(s)_{t-j} + eps_t

    (beta only under the constant+trend specification).
    """

    statistic: float
    gamma_hat: float
    alpha_hat: float
    beta_hat: Optional[float]
    lags_used: int
    residual_variance: float


def default_adf_lags(n: int) -> int:
    """Schwert rule of thumb: floor(12 * (n/100)^(1/4))."""
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def adf_statistic(
    series: np.ndarray,
    lags: Optional[int] = None,
    trend: str = TREND_CONSTANT,
) -> AdfResult:
    """Unit-root test statistic for one series.

    Args:
        series: finite 1-d sequence.
        lags: number of lagged difference terms p; default Schwert rule.
        trend: "constant" or "constant+trend".

    Raises:
        ValueError: series too short for the requested lag order, non-finite
            input, or a rank-deficient design matrix (e.g. a constant series).
    """
    if trend not in (TREND_CONSTANT, TREND_CONSTANT_TREND):
        raise ValueError(f"unknown trend specification {trend!r}")
    s = np.asarray(series, dtype=float)
    if s.ndim != 1:
        raise ValueError("series must be 1-dimensional")
    if not np.isfinite(s).all():
        raise ValueError("series contains non-finite values")
    n = s.size
    p = default_adf_lags(n) if lags is None else int(lags)
    if p < 0:
        raise ValueError("lag order must be >= 0")
    if n < p + 10:
        raise ValueError(f"series of length {n} too short for lag order {p}")

    ds = np.diff(s)
    y = ds[p:]
    rows = y.size
    cols = [np.ones(rows)]
    if trend == TREND_CONSTANT_TREND:
        cols.append(np.arange(rows, dtype=float))
    gamma_idx = len(cols)
    cols.append(s[p:-1])
    for j in range(1, p + 1):
        cols.append(ds[p - j : -j])
    design = np.column_stack(cols)
    k = design.shape[1]
    if rows <= k:
        raise ValueError("not enough observations for the regression")
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < k:
        raise ValueError("rank-deficient design matrix (degenerate series)")
    resid = y - design @ beta
    sigma2 = float(resid @ resid) / (rows - k)
    cov = sigma2 * np.linalg.inv(design.T @ design)
    stderr = float(np.sqrt(cov[gamma_idx, gamma_idx]))
    statistic = float(beta[gamma_idx]) / stderr
    if not np.isfinite(statistic):
        raise ValueError("non-finite test statistic")
    return AdfResult(
        statistic=statistic,
        gamma_hat=float(beta[gamma_idx]),
        alpha_hat=float(beta[0]),
        beta_hat=float(beta[1]) if trend == TREND_CONSTANT_TREND else None,
        lags_used=p,
        residual_variance=sigma2,
    )


def autocorrelation(series: np.ndarray, lag: int) -> float:
    """Lag-k autocorrelation with the full-series variance in the denominator:

        tau = sum_{t=1..L-k} (s_t - mean)(s_{t+k} - mean) / sum_{t=1..L} (s_t - mean)^2
    """
    s = np.asarray(series, dtype=float)
    if s.ndim != 1:
        raise ValueError("series must be 1-dimensional")
    if not np.isfinite(s).all():
        raise ValueError("series contains non-finite values")
    if not 0 <= lag < s.size:
        raise ValueError(f"lag must satisfy 0 <= k < len(series); got {lag}")
    centered = s - s.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise ValueError("undefined autocorrelation: series has zero variance")
    if lag == 0:
        return 1.0
    num = float(centered[:-lag] @ centered[lag:])
    return num / denom


def forecastability(series: np.ndarray, normalizer: str = "bins") -> float:
    """One minus the normalized spectral entropy of the series.

    The mean-removed series is transformed with a discrete Fourier transform;
    the power at the M positive frequencies, normalized to sum to one, is
    treated as a probability distribution whose Shannon entropy H (natural
    log) is divided by log(M) so the result lands in [0, 1]. ``normalizer``
    can be set to "two-pi" to divide by log(2*pi) instead (the continuous
    spectral-density convention, which does not bound the result).

    A zero-power (constant) series returns 0.0 with a warning.
    """
    s = np.asarray(series, dtype=float)
    if s.ndim != 1:
        raise ValueError("series must be 1-dimensional")
    if s.size < 16:
        raise ValueError(f"series of length {s.size} too short (need >= 16)")
    if not np.isfinite(s).all():
        raise ValueError("series contains non-finite values")
    x = s - s.mean()
    power = np.abs(np.fft.rfft(x)[1:]) ** 2
    total = float(power.sum())
    if total <= 0.0:
        logger.warning("zero-power series: forecastability defined as 0")
        return 0.0
    p = power / total
    nz = p[p > 0.0]
    entropy = float(-(nz * np.log(nz)).sum())
    if normalizer == "bins":
        norm = np.log(p.size)
    elif normalizer == "two-pi":
        norm = np.log(2.0 * np.pi)
    else:
        raise ValueError(f"unknown normalizer {normalizer!r}")
    return float(np.clip(1.0 - entropy / norm, 0.0, 1.0))


@dataclass
class PatternSummary:
    """Mean sequence statistics over the member stocks of one pattern."""

    pattern: MovementPattern
    non_stationarity: float
    autocorrelation: float
    forecastability: float
    n_stocks: int
    split: str = "7:1:2"


def pattern_aggregates(
    panel: PricePanel,
    returns: ReturnPanel,
    labeling: SegmentLabeling,
    adf_lags: Optional[int] = None,
    adf_trend: str = TREND_CONSTANT,
    autocorr_lag: int = 1,
    split_label: str = "7:1:2",
) -> list[PatternSummary]:
    """Per-pattern mean statistics over a labeled segment.

    For each member stock: the unit-root statistic of its close prices within
    the segment, the lag-``autocorr_lag`` autocorrelation of its returns and
    the forecastability of its returns. Degenerate stocks (e.g. constant
    series) are skipped with a warning.
    """
    start, end = labeling.segment_bounds
    close = panel.feature("close")
    rows: list[PatternSummary] = []
    for pattern in MovementPattern:
        members = labeling.members(pattern)
        if not members:
            continue
        adf_vals, tau_vals, phi_vals = [], [], []
        for stock in members:
            i = panel.stock_index(stock)
            prices = close[i, start:end]
            r = returns.values[i, start + 1 : end]
            prices = prices[np.isfinite(prices)]
            r = r[np.isfinite(r)]
            try:
                adf_vals.append(adf_statistic(prices, lags=adf_lags, trend=adf_trend).statistic)
                tau_vals.append(autocorrelation(r, autocorr_lag))
                phi_vals.append(forecastability(r))
            except ValueError as exc:
                logger.warning("skipping stock %s in aggregates: %s", stock, exc)
        if not adf_vals:
            raise ValueError(f"no usable stocks in pattern {pattern.value}")
        rows.append(
            PatternSummary(
                pattern=pattern,
                non_stationarity=float(np.mean(adf_vals)),
                autocorrelation=float(np.mean(tau_vals)),
                forecastability=float(np.mean(phi_vals)),
                n_stocks=len(adf_vals),
                split=split_label,
            )
        )
    return rows


def save_pattern_summaries_csv(
    rows: list[PatternSummary], path: Union[str, Path]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["pattern", "non_stationarity", "autocorrelation", "forecastability", "split"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.pattern.value,
                    repr(row.non_stationarity),
                    repr(row.autocorrelation),
                    repr(row.forecastability),
                    row.split,
                ]
            )


def save_pattern_summaries_json(
    rows: list[PatternSummary], path: Union[str, Path]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [
        {
            "pattern": row.pattern.value,
            "non_stationarity": row.non_stationarity,
            "autocorrelation": row.autocorrelation,
            "forecastability": row.forecastability,
            "n_stocks": row.n_stocks,
            "split": row.split,
        }
        for row in rows
    ]
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
