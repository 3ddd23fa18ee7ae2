"""Movement-pattern segmentation: fixed windows, black-swan flags, cohort labels.

History is cut into non-overlapping fixed-length segments. Within a segment,
stocks whose daily change rates contain extreme outliers are flagged as black
swans (labeled extreme); the rest are ranked by segment cumulative return and
split into equally sized uptrend / downtrend / volatile cohorts.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

from .panel import PanelError, ReturnPanel

logger = logging.getLogger(__name__)

#: scale factor making the median absolute deviation consistent with the
#: standard deviation under normality.
MAD_SCALE = 1.4826

#: fallback daily-change cap used when a stock's MAD is exactly zero.
HARD_RETURN_CAP = 0.15


class MovementPattern(str, Enum):
    UPTREND = "uptrend"
    DOWNTREND = "downtrend"
    VOLATILE = "volatile"
    EXTREME = "extreme"


@dataclass
class SegmentLabeling:
    """Pattern assignment for one segment.

    ``scores`` holds the ranking statistic (segment cumulative return) for
    every stock it could be computed for, including extreme ones.
    ``cohort_size_used`` < ``cohort_size_requested`` constitutes an explicit
    shortfall record: there were not enough non-extreme stocks for full
    cohorts and all three were shrunk proportionally.
    """

    segment_bounds: tuple[int, int]
    labels: dict[str, MovementPattern]
    scores: dict[str, float]
    cohort_size_requested: int
    cohort_size_used: int
    unlabeled: list[str] = field(default_factory=list)

    @property
    def shortfall(self) -> bool:
        return self.cohort_size_used < self.cohort_size_requested

    def members(self, pattern: MovementPattern) -> list[str]:
        return sorted(s for s, p in self.labels.items() if p is pattern)


def cut_segments(n_days: int, segment_len: int = 250) -> list[tuple[int, int]]:
    """Maximal list of disjoint consecutive half-open windows of exactly segment_len days.

    The trailing remainder shorter than segment_len is discarded (logged).
    """
    if segment_len < 2:
        raise PanelError("segment_len must be at least 2")
    if n_days < segment_len:
        raise PanelError(
            f"history of {n_days} days is shorter than one segment ({segment_len})"
        )
    bounds = [
        (start, start + segment_len)
        for start in range(0, n_days - segment_len + 1, segment_len)
    ]
    remainder = n_days - bounds[-1][1]
    if remainder:
        logger.info("discarding trailing remainder of %d day(s)", remainder)
    return bounds


def _segment_returns(returns: ReturnPanel, segment: tuple[int, int]) -> np.ndarray:
    start, end = segment
    if not (0 <= start < end <= returns.n_days):
        raise PanelError(f"segment {segment} outside panel of {returns.n_days} days")
    # the return on the segment's first day would read the previous close
    # outside the segment, so it is excluded.
    return returns.values[:, start + 1 : end]


def flag_black_swans(
    returns: ReturnPanel,
    segment: tuple[int, int],
    stock_ids: list[str],
    z_threshold: float = 5.0,
) -> set[str]:
    """Stocks whose segment change rates contain extreme outliers.

    A stock is flagged iff any of its daily returns within the segment has a
    robust z-score |r - median| / (1.4826 * MAD) above ``z_threshold``, with
    median and MAD taken over that stock's own segment returns. When the MAD
    is zero the detector falls back to flagging any |r| > 0.15.
    """
    seg = _segment_returns(returns, segment)
    flagged: set[str] = set()
    for i, stock in enumerate(stock_ids):
        r = seg[i][np.isfinite(seg[i])]
        if r.size == 0:
            continue
        med = float(np.median(r))
        mad = float(np.median(np.abs(r - med)))
        if mad > 0.0:
            z = np.abs(r - med) / (MAD_SCALE * mad)
            if float(z.max()) > z_threshold:
                flagged.add(stock)
        elif float(np.abs(r).max()) > HARD_RETURN_CAP:
            flagged.add(stock)
    return flagged


def segment_cumulative_returns(
    returns: ReturnPanel, segment: tuple[int, int], stock_ids: list[str]
) -> dict[str, float]:
    """Segment cumulative return prod(1 + r) - 1 per stock, over unmasked days."""
    seg = _segment_returns(returns, segment)
    out: dict[str, float] = {}
    for i, stock in enumerate(stock_ids):
        r = seg[i][np.isfinite(seg[i])]
        if r.size == 0:
            continue
        out[stock] = float(np.prod(1.0 + r) - 1.0)
    return out


def classify_segment(
    returns: ReturnPanel,
    segment: tuple[int, int],
    stock_ids: list[str],
    cohort_size: int = 300,
    z_threshold: float = 5.0,
) -> SegmentLabeling:
    """Assign every stock of one segment to a movement pattern.

    Black swans become extreme. The remaining stocks are ranked by segment
    cumulative return (descending, ties broken by stock id): the first
    ``cohort_size`` are uptrend, the last ``cohort_size`` downtrend, and a
    ``cohort_size`` band centered on the median rank volatile. Leftover ranks
    stay unlabeled. With fewer than 3 * cohort_size non-extreme stocks all
    three cohorts shrink to count // 3 (recorded as a shortfall).
    """
    if cohort_size < 1:
        raise PanelError("cohort_size must be >= 1")
    flagged = flag_black_swans(returns, segment, stock_ids, z_threshold)
    scores = segment_cumulative_returns(returns, segment, stock_ids)
    labels: dict[str, MovementPattern] = {s: MovementPattern.EXTREME for s in flagged}

    rankable = [s for s in stock_ids if s not in flagged and s in scores]
    unlabeled = [s for s in stock_ids if s not in flagged and s not in scores]
    if len(rankable) < 3:
        raise PanelError(
            f"only {len(rankable)} non-extreme stocks in segment {segment}; need >= 3"
        )
    cohort = cohort_size
    if len(rankable) < 3 * cohort_size:
        cohort = len(rankable) // 3
        logger.warning(
            "segment %s: %d non-extreme stocks < 3*%d; shrinking cohorts to %d",
            segment,
            len(rankable),
            cohort_size,
            cohort,
        )
    ranked = sorted(rankable, key=lambda s: (-scores[s], s))
    mid_start = (len(ranked) - cohort) // 2
    for s in ranked[:cohort]:
        labels[s] = MovementPattern.UPTREND
    for s in ranked[len(ranked) - cohort :]:
        labels[s] = MovementPattern.DOWNTREND
    for s in ranked[mid_start : mid_start + cohort]:
        labels[s] = MovementPattern.VOLATILE
    unlabeled.extend(s for s in ranked if s not in labels)
    return SegmentLabeling(
        segment_bounds=segment,
        labels=labels,
        scores=scores,
        cohort_size_requested=cohort_size,
        cohort_size_used=cohort,
        unlabeled=sorted(unlabeled),
    )


def save_labelings(labelings: list[SegmentLabeling], path: Union[str, Path]) -> None:
    """Export labelings as CSV rows (segment_start, stock_id, pattern, score)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_start", "stock_id", "pattern", "score"])
        for labeling in labelings:
            start = labeling.segment_bounds[0]
            for stock in sorted(labeling.labels):
                score = labeling.scores.get(stock)
                writer.writerow(
                    [
                        start,
                        stock,
                        labeling.labels[stock].value,
                        "" if score is None else repr(score),
                    ]
                )


def load_labelings(path: Union[str, Path]) -> dict[int, dict[str, MovementPattern]]:
    """Read a labeling CSV back as {segment_start: {stock_id: pattern}}."""
    out: dict[int, dict[str, MovementPattern]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            start = int(row["segment_start"])
            out.setdefault(start, {})[row["stock_id"]] = MovementPattern(
                row["pattern"]
            )
    return out
