"""Panel data model: price panels, return/score panels and chronological splits.

All arrays are dense float64 with NaN as the explicit missing-cell sentinel;
every statistic in this package is computed over the unmasked (finite) subset.
Panels are treated as immutable after construction: operations return new
objects and never mutate their inputs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

#: features every price panel must carry, in canonical order.
REQUIRED_FEATURES = ("open", "high", "low", "close", "volume")

PRICE_FEATURES = ("open", "high", "low", "close")


class PanelError(ValueError):
    """Raised for malformed panel data or violated panel invariants."""


@dataclass
class PricePanel:
    """N stocks x T days x F features of raw market data plus a trading calendar.

    Attributes:
        stock_ids: opaque stock tokens, sorted, unique (length N).
        calendar: strictly increasing trading-day identifiers (length T),
            ISO-8601 date strings in the canonical interchange format.
        features: dense (N, T, F) float64 array; NaN marks missing cells.
        feature_names: length-F names; must include open/high/low/close/volume
            for raw market panels.
        tradability: optional (N, T) boolean mask, True = tradable that day.
            None means unrestricted.
    """

    stock_ids: list[str]
    calendar: list[str]
    features: np.ndarray
    feature_names: list[str]
    tradability: Optional[np.ndarray] = None

    @property
    def n_stocks(self) -> int:
        return len(self.stock_ids)

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def feature(self, name: str) -> np.ndarray:
        """Return the (N, T) slice for one named feature."""
        try:
            idx = self.feature_names.index(name)
        except ValueError:
            raise PanelError(f"panel has no feature named {name!r}") from None
        return self.features[:, :, idx]

    def has_feature(self, name: str) -> bool:
        return name in self.feature_names

    def stock_index(self, stock_id: str) -> int:
        try:
            return self.stock_ids.index(stock_id)
        except ValueError:
            raise PanelError(f"unknown stock id {stock_id!r}") from None

    def validate(self) -> None:
        """Check all raw-panel invariants; raise PanelError on the first violation.

        Normalized feature panels intentionally skip this (z-scores are
        negative and break the OHLC ordering).
        """
        n, t, f = len(self.stock_ids), len(self.calendar), len(self.feature_names)
        if self.features.shape != (n, t, f):
            raise PanelError(
                f"feature array shape {self.features.shape} does not match "
                f"(n_stocks={n}, n_days={t}, n_features={f})"
            )
        if len(set(self.stock_ids)) != n:
            raise PanelError("duplicate stock ids")
        for a, b in zip(self.calendar, self.calendar[1:]):
            if not a < b:
                raise PanelError(f"calendar not strictly increasing at {a!r} -> {b!r}")
        for name in REQUIRED_FEATURES:
            if name not in self.feature_names:
                raise PanelError(f"missing required feature {name!r}")
        for name in PRICE_FEATURES:
            vals = self.feature(name)
            bad = np.isfinite(vals) & (vals <= 0.0)
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise PanelError(
                    f"non-positive {name} for stock {self.stock_ids[i]} "
                    f"on {self.calendar[j]}"
                )
        vol = self.feature("volume")
        bad = np.isfinite(vol) & (vol < 0.0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise PanelError(
                f"negative volume for stock {self.stock_ids[i]} on {self.calendar[j]}"
            )
        o, h = self.feature("open"), self.feature("high")
        lo, c = self.feature("low"), self.feature("close")
        full = np.isfinite(o) & np.isfinite(h) & np.isfinite(lo) & np.isfinite(c)
        bad = full & ((h < o) | (h < c) | (lo > o) | (lo > c))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise PanelError(
                f"OHLC ordering violated (need high >= open,close >= low) for "
                f"stock {self.stock_ids[i]} on {self.calendar[j]}"
            )
        if self.tradability is not None:
            if self.tradability.shape != (n, t):
                raise PanelError("tradability mask shape mismatch")
            if self.tradability.dtype != np.bool_:
                raise PanelError("tradability mask must be boolean")


@dataclass
class ReturnPanel:
    """(N, T) one-day return ratios; day 0 and cells without a prior close are NaN."""

    values: np.ndarray

    @property
    def n_stocks(self) -> int:
        return self.values.shape[0]

    @property
    def n_days(self) -> int:
        return self.values.shape[1]

    def mask(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass
class ScorePanel:
    """(N, T) predicted ranking scores; NaN marks days/stocks without predictions."""

    values: np.ndarray

    @property
    def n_stocks(self) -> int:
        return self.values.shape[0]

    @property
    def n_days(self) -> int:
        return self.values.shape[1]

    def mask(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint, contiguous, chronologically ordered half-open day-index ranges."""

    train: tuple[int, int]
    valid: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self) -> None:
        tr, va, te = self.train, self.valid, self.test
        if not (tr[0] < tr[1] <= va[0] < va[1] <= te[0] < te[1]):
            raise PanelError(f"split ranges not ordered/disjoint: {tr}, {va}, {te}")

    @property
    def n_days(self) -> int:
        return self.test[1] - self.train[0]

    def train_days(self) -> range:
        return range(*self.train)

    def valid_days(self) -> range:
        return range(*self.valid)

    def test_days(self) -> range:
        return range(*self.test)


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """One-day return ratios from close prices: (p_t - p_{t-1}) / p_{t-1}.

    Day 0 is masked. A zero or missing prior close masks the cell instead of
    raising.
    """
    if not panel.has_feature("close"):
        raise PanelError("panel has no close feature")
    if panel.n_days < 2:
        raise PanelError("need at least 2 days to compute returns")
    close = panel.feature("close")
    values = np.full(close.shape, np.nan)
    prev = close[:, :-1]
    cur = close[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (cur - prev) / prev
    ok = np.isfinite(prev) & np.isfinite(cur) & (prev != 0.0)
    values[:, 1:] = np.where(ok, r, np.nan)
    return ReturnPanel(values=values)


def cross_sectional_normalize(
    panel: PricePanel, features: Optional[Sequence[str]] = None
) -> PricePanel:
    """Z-score each feature across stocks within every single trading day.

    Per-day statistics only (never across time), so no future information can
    leak into earlier days. Population (1/N) standard deviation. Masked cells
    are excluded from the statistics and stay masked. A day with zero
    across-stock dispersion (or fewer than 2 observations) gets 0 for all
    unmasked stocks and is logged.

    Args:
        panel: source panel; not modified.
        features: names to normalize; default is every feature.

    Returns:
        A new panel with the selected features normalized. The result no
        longer satisfies raw-price invariants, so it is not re-validated.
    """
    names = list(features) if features is not None else list(panel.feature_names)
    out = panel.features.copy()
    for name in names:
        fi = panel.feature_names.index(name) if name in panel.feature_names else None
        if fi is None:
            raise PanelError(f"cannot normalize unknown feature {name!r}")
        arr = out[:, :, fi]
        finite = np.isfinite(arr)
        counts = finite.sum(axis=0)
        filled = np.where(finite, arr, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = filled.sum(axis=0) / counts
            var = (np.where(finite, (arr - mean) ** 2, 0.0)).sum(axis=0) / counts
            std = np.sqrt(var)
        degenerate = (counts < 2) | ~(std > 0.0)
        n_degenerate = int(degenerate[counts > 0].sum())
        if n_degenerate:
            logger.warning(
                "feature %s: %d day(s) with zero cross-sectional dispersion; "
                "normalized values set to 0",
                name,
                n_degenerate,
            )
        safe_std = np.where(degenerate, 1.0, std)
        z = (arr - mean) / safe_std
        z = np.where(degenerate[None, :], 0.0, z)
        arr[finite] = z[finite]
    return PricePanel(
        stock_ids=list(panel.stock_ids),
        calendar=list(panel.calendar),
        features=out,
        feature_names=list(panel.feature_names),
        tradability=None if panel.tradability is None else panel.tradability.copy(),
    )


def split_chronological(
    n_days: int, ratios: tuple[int, int, int] = (7, 1, 2)
) -> DatasetSplit:
    """Split T days into contiguous train/valid/test ranges by the given ratios.

    No shuffling; remainder days go to train so valid/test sizes are exact
    floor shares.
    """
    r_train, r_valid, r_test = ratios
    if min(r_train, r_valid, r_test) <= 0:
        raise PanelError("split ratios must be positive")
    total = r_train + r_valid + r_test
    n_valid = n_days * r_valid // total
    n_test = n_days * r_test // total
    n_train = n_days - n_valid - n_test
    if min(n_train, n_valid, n_test) < 1:
        raise PanelError(
            f"{n_days} days is too small to grant each split >= 1 day at ratio {ratios}"
        )
    return DatasetSplit(
        train=(0, n_train),
        valid=(n_train, n_train + n_valid),
        test=(n_train + n_valid, n_days),
    )


def subset_panel(
    panel: PricePanel,
    stock_ids: Optional[Iterable[str]] = None,
    day_range: Optional[tuple[int, int]] = None,
) -> PricePanel:
    """Restrict a panel to a stock subset and/or a half-open day range."""
    if stock_ids is None:
        rows = np.arange(panel.n_stocks)
        ids = list(panel.stock_ids)
    else:
        ids = sorted(stock_ids)
        rows = np.array([panel.stock_index(s) for s in ids], dtype=int)
    lo, hi = day_range if day_range is not None else (0, panel.n_days)
    if not (0 <= lo < hi <= panel.n_days):
        raise PanelError(f"day range {day_range} outside panel of {panel.n_days} days")
    return PricePanel(
        stock_ids=ids,
        calendar=list(panel.calendar[lo:hi]),
        features=panel.features[rows, lo:hi, :].copy(),
        feature_names=list(panel.feature_names),
        tradability=None
        if panel.tradability is None
        else panel.tradability[rows, lo:hi].copy(),
    )
