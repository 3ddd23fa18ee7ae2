"""Seeded synthetic OHLCV panels with controllable movement regimes.

Per-stock log returns follow an AR(1) process with optional Bernoulli jumps:

    x_t = drift + ar1 * x_{t-1} + vol * eps_t + jump_t

close = 100 * exp(cumsum(x)); open/high/low are derived consistently with
vol-scaled intrabar noise and volume is log-normal. Every stock draws from its
own sub-stream of the seed, so generation is deterministic and order-independent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np

from .panel import PricePanel
from .segments import MovementPattern

logger = logging.getLogger(__name__)

BASE_PRICE = 100.0
VOLUME_LOG_MEAN = 10.0
VOLUME_LOG_SIGMA = 1.0


@dataclass(frozen=True)
class RegimeSpec:
    """Knobs of the per-stock return process for one movement regime."""

    pattern: MovementPattern
    daily_drift: float = 0.0
    daily_vol: float = 0.01
    jump_prob: float = 0.0
    jump_scale: float = 0.0
    ar1_coeff: float = 0.0

    def __post_init__(self) -> None:
        if self.daily_vol < 0.0:
            raise ValueError("daily_vol must be >= 0")
        if not 0.0 <= self.jump_prob <= 1.0:
            raise ValueError("jump_prob must lie in [0, 1]")
        if not -1.0 < self.ar1_coeff < 1.0:
            raise ValueError("ar1_coeff must lie in (-1, 1)")


#: regime parameters that make the four patterns separable by the segmenter
#: and give them distinct sequence-quality statistics.
DEFAULT_REGIMES: dict[MovementPattern, RegimeSpec] = {
    MovementPattern.UPTREND: RegimeSpec(
        MovementPattern.UPTREND, daily_drift=0.004, daily_vol=0.012, ar1_coeff=0.45
    ),
    MovementPattern.DOWNTREND: RegimeSpec(
        MovementPattern.DOWNTREND, daily_drift=-0.004, daily_vol=0.012, ar1_coeff=0.35
    ),
    MovementPattern.VOLATILE: RegimeSpec(
        MovementPattern.VOLATILE, daily_drift=0.0, daily_vol=0.022, ar1_coeff=0.20
    ),
    MovementPattern.EXTREME: RegimeSpec(
        MovementPattern.EXTREME,
        daily_drift=0.0,
        daily_vol=0.018,
        ar1_coeff=0.0,
        jump_prob=0.03,
        jump_scale=0.15,
    ),
}

_PATTERN_PREFIX = {
    MovementPattern.UPTREND: "U",
    MovementPattern.DOWNTREND: "D",
    MovementPattern.VOLATILE: "V",
    MovementPattern.EXTREME: "X",
}


def _simulate_stock(
    spec: RegimeSpec, n_days: int, rng: np.random.Generator
) -> tuple[np.ndarray, ...]:
    """One stock's OHLCV columns. Draw order is fixed for determinism."""
    eps = rng.standard_normal(n_days)
    gap = rng.standard_normal(n_days)
    hi_n = np.abs(rng.standard_normal(n_days))
    lo_n = np.abs(rng.standard_normal(n_days))
    vol_draw = rng.standard_normal(n_days)
    jump_u = rng.random(n_days)
    jump_sign = np.sign(rng.standard_normal(n_days))

    x = np.empty(n_days)
    prev = 0.0
    for t in range(n_days):
        jump = spec.jump_scale * jump_sign[t] if jump_u[t] < spec.jump_prob else 0.0
        prev = spec.daily_drift + spec.ar1_coeff * prev + spec.daily_vol * eps[t] + jump
        x[t] = prev
    close = BASE_PRICE * np.exp(np.cumsum(x))
    prev_close = np.concatenate(([BASE_PRICE], close[:-1]))
    open_ = prev_close * np.exp(0.25 * spec.daily_vol * gap)
    body_hi = np.maximum(open_, close)
    body_lo = np.minimum(open_, close)
    high = body_hi * np.exp(0.5 * spec.daily_vol * hi_n)
    low = body_lo * np.exp(-0.5 * spec.daily_vol * lo_n)
    volume = np.exp(VOLUME_LOG_MEAN + VOLUME_LOG_SIGMA * vol_draw)
    return open_, high, low, close, volume


def _calendar(n_days: int) -> list[str]:
    # synthetic trading days; weekends are skipped to look like a real calendar
    days = []
    ordinal = np.datetime64("2020-01-01")
    while len(days) < n_days:
        dow = (ordinal.astype("datetime64[D]").astype(int) + 3) % 7  # 1970-01-01 was a Thursday
        if dow < 5:
            days.append(str(ordinal))
        ordinal += 1
    return days


def generate_panel(
    n_days: int,
    regimes: Mapping[str, RegimeSpec],
    seed: int,
) -> PricePanel:
    """Generate a fully deterministic OHLCV panel.

    Args:
        n_days: number of trading days (>= 2).
        regimes: per-stock regime specification; the panel holds exactly these
            stocks, sorted by id.
        seed: master seed; each stock derives an independent sub-stream.
    """
    if n_days < 2:
        raise ValueError("n_days must be >= 2")
    if not regimes:
        raise ValueError("need at least one stock regime")
    stock_ids = sorted(regimes)
    n = len(stock_ids)
    features = np.empty((n, n_days, 5))
    for i, stock in enumerate(stock_ids):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        o, h, lo, c, v = _simulate_stock(regimes[stock], n_days, rng)
        features[i, :, 0] = o
        features[i, :, 1] = h
        features[i, :, 2] = lo
        features[i, :, 3] = c
        features[i, :, 4] = v
    panel = PricePanel(
        stock_ids=stock_ids,
        calendar=_calendar(n_days),
        features=features,
        feature_names=["open", "high", "low", "close", "volume"],
        tradability=None,
    )
    panel.validate()
    return panel


def generate_labeled_panel(
    cohort_size: int,
    seed: int,
    n_days: int = 250,
    regimes: Optional[Mapping[MovementPattern, RegimeSpec]] = None,
) -> tuple[PricePanel, dict[str, MovementPattern]]:
    """Panel of 4 * cohort_size stocks, one cohort per movement pattern.

    Returns the panel together with the ground-truth pattern labels, for
    validating the segmenter and the characteristics statistics.
    """
    if cohort_size < 1:
        raise ValueError("cohort_size must be >= 1")
    base = dict(DEFAULT_REGIMES)
    if regimes:
        base.update(regimes)
    stock_regimes: dict[str, RegimeSpec] = {}
    truth: dict[str, MovementPattern] = {}
    for pattern in MovementPattern:
        prefix = _PATTERN_PREFIX[pattern]
        for k in range(cohort_size):
            stock = f"{prefix}{k:04d}"
            stock_regimes[stock] = base[pattern]
            truth[stock] = pattern
    panel = generate_panel(n_days, stock_regimes, seed)
    return panel, truth


def regime_with(
    pattern: MovementPattern, **overrides: float
) -> RegimeSpec:
    """Default regime for a pattern with selected fields overridden."""
    return replace(DEFAULT_REGIMES[pattern], **overrides)
