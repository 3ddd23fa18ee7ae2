"""Panel serialization: canonical long CSV, wide CSV convenience loader, binary cache.

Long format (canonical interchange):
    stock_id,date,open,high,low,close,volume[,<extra feature>...][,tradable]
Dates are ISO-8601 strings, floats are written with ``repr`` so a
save -> load round trip is bit-identical, missing cells are empty fields and
``tradable`` is 1/0.

Wide format (load only): one row per date, header ``date`` followed by
``<stock_id>:<feature>`` columns.

Binary cache layout (version 1, little-endian):
    bytes 0..7    magic ``PANELBIN``
    5 x uint32    version, N, T, F, metadata length in bytes
    metadata      UTF-8 JSON: stock_ids, calendar, feature_names, has_tradability
    N*T*F float64 feature values, C order (stock-major)
    N*T   uint8   tradability mask, only when has_tradability
"""
from __future__ import annotations

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .panel import REQUIRED_FEATURES, PanelError, PricePanel

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"PANELBIN"
CACHE_VERSION = 1

_META_COLUMNS = ("stock_id", "date")
_TRADABLE_COLUMN = "tradable"


def _parse_cell(raw: str, line_no: int, column: str) -> float:
    if raw == "":
        return float("nan")
    try:
        return float(raw)
    except ValueError:
        raise PanelError(
            f"line {line_no}: malformed value {raw!r} in column {column!r}"
        ) from None


def load_panel(path: Union[str, Path], fmt: str = "long") -> PricePanel:
    """Load a price panel from CSV.

    Args:
        path: CSV file location.
        fmt: "long" (canonical) or "wide" (convenience).

    Raises:
        PanelError: malformed rows (with line number), duplicate (stock, day)
            pairs, non-monotonic dates within a stock, or any violated panel
            invariant such as high < low.
    """
    path = Path(path)
    if not path.exists():
        raise PanelError(f"panel file not found: {path}")
    if fmt == "long":
        return _load_long(path)
    if fmt == "wide":
        return _load_wide(path)
    raise PanelError(f"unknown panel format {fmt!r} (expected 'long' or 'wide')")


def _load_long(path: Path) -> PricePanel:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelError(f"{path}: empty file") from None
        if header[:2] != list(_META_COLUMNS):
            raise PanelError(
                f"{path}: header must start with stock_id,date (got {header[:2]})"
            )
        has_tradable = header[-1] == _TRADABLE_COLUMN
        feature_names = header[2 : -1 if has_tradable else len(header)]
        for name in REQUIRED_FEATURES:
            if name not in feature_names:
                raise PanelError(f"{path}: missing required column {name!r}")

        cells: dict[tuple[str, str], list[float]] = {}
        trad_cells: dict[tuple[str, str], bool] = {}
        last_date: dict[str, str] = {}
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise PanelError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            stock, date = row[0], row[1]
            if not stock or not date:
                raise PanelError(f"line {line_no}: empty stock_id or date")
            key = (stock, date)
            if key in cells:
                raise PanelError(
                    f"line {line_no}: duplicate entry for stock {stock} on {date}"
                )
            prev = last_date.get(stock)
            if prev is not None and date <= prev:
                raise PanelError(
                    f"line {line_no}: non-monotonic dates for stock {stock} "
                    f"({prev!r} then {date!r})"
                )
            last_date[stock] = date
            values = [
                _parse_cell(raw, line_no, col)
                for raw, col in zip(row[2:], feature_names)
            ]
            cells[key] = values
            if has_tradable:
                raw = row[-1]
                trad_cells[key] = raw.strip() not in ("0", "false", "False")

    if not cells:
        raise PanelError(f"{path}: no data rows")
    stock_ids = sorted(last_date)
    calendar = sorted({date for _, date in cells})
    n, t, f = len(stock_ids), len(calendar), len(feature_names)
    features = np.full((n, t, f), np.nan)
    row_of = {s: i for i, s in enumerate(stock_ids)}
    col_of = {d: j for j, d in enumerate(calendar)}
    for (stock, date), values in cells.items():
        features[row_of[stock], col_of[date], :] = values
    tradability = None
    if has_tradable:
        tradability = np.ones((n, t), dtype=bool)
        for (stock, date), flag in trad_cells.items():
            tradability[row_of[stock], col_of[date]] = flag
    panel = PricePanel(
        stock_ids=stock_ids,
        calendar=calendar,
        features=features,
        feature_names=list(feature_names),
        tradability=tradability,
    )
    panel.validate()
    return panel


def _load_wide(path: Path) -> PricePanel:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelError(f"{path}: empty file") from None
        if not header or header[0] != "date":
            raise PanelError(f"{path}: wide header must start with 'date'")
        columns: list[tuple[str, str]] = []
        for col in header[1:]:
            if ":" not in col:
                raise PanelError(
                    f"{path}: wide column {col!r} is not of the form stock:feature"
                )
            stock, feat = col.split(":", 1)
            columns.append((stock, feat))
        stock_ids = sorted({s for s, _ in columns})
        feature_names = []
        for _, feat in columns:
            if feat not in feature_names:
                feature_names.append(feat)
        for name in REQUIRED_FEATURES:
            if name not in feature_names:
                raise PanelError(f"{path}: missing required feature column {name!r}")

        dates: list[str] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise PanelError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            date = row[0]
            if dates and date <= dates[-1]:
                raise PanelError(f"line {line_no}: non-monotonic date {date!r}")
            dates.append(date)
            rows.append(
                [
                    _parse_cell(raw, line_no, col)
                    for raw, col in zip(row[1:], header[1:])
                ]
            )

    if not dates:
        raise PanelError(f"{path}: no data rows")
    n, t, f = len(stock_ids), len(dates), len(feature_names)
    features = np.full((n, t, f), np.nan)
    row_of = {s: i for i, s in enumerate(stock_ids)}
    feat_of = {name: k for k, name in enumerate(feature_names)}
    for j, values in enumerate(rows):
        for (stock, feat), value in zip(columns, values):
            features[row_of[stock], j, feat_of[feat]] = value
    panel = PricePanel(
        stock_ids=stock_ids,
        calendar=dates,
        features=features,
        feature_names=feature_names,
        tradability=None,
    )
    panel.validate()
    return panel


def save_panel(panel: PricePanel, path: Union[str, Path]) -> None:
    """Write a panel in the canonical long CSV format (lossless round trip)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(_META_COLUMNS) + list(panel.feature_names)
    if panel.tradability is not None:
        header.append(_TRADABLE_COLUMN)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, stock in enumerate(panel.stock_ids):
            for j, date in enumerate(panel.calendar):
                cell = panel.features[i, j, :]
                if not np.isfinite(cell).any():
                    continue  # wholly missing (stock, day) cells are omitted
                row = [stock, date] + [
                    repr(float(v)) if np.isfinite(v) else "" for v in cell
                ]
                if panel.tradability is not None:
                    row.append("1" if panel.tradability[i, j] else "0")
                writer.writerow(row)


def save_panel_cache(panel: PricePanel, path: Union[str, Path]) -> None:
    """Serialize a panel to the documented binary cache for fast reload."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(
        {
            "stock_ids": panel.stock_ids,
            "calendar": panel.calendar,
            "feature_names": panel.feature_names,
            "has_tradability": panel.tradability is not None,
        },
        sort_keys=True,
    ).encode("utf-8")
    n, t, f = panel.n_stocks, panel.n_days, panel.n_features
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<5I", CACHE_VERSION, n, t, f, len(meta)))
        fh.write(meta)
        fh.write(np.ascontiguousarray(panel.features, dtype="<f8").tobytes())
        if panel.tradability is not None:
            fh.write(
                np.ascontiguousarray(panel.tradability, dtype=np.uint8).tobytes()
            )


def load_panel_cache(path: Union[str, Path]) -> PricePanel:
    """Load a panel from the binary cache written by :func:`save_panel_cache`."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(CACHE_MAGIC))
        if magic != CACHE_MAGIC:
            raise PanelError(f"{path}: not a panel cache (bad magic {magic!r})")
        version, n, t, f, meta_len = struct.unpack("<5I", fh.read(20))
        if version != CACHE_VERSION:
            raise PanelError(f"{path}: unsupported cache version {version}")
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        features = np.frombuffer(fh.read(n * t * f * 8), dtype="<f8").reshape(n, t, f)
        tradability = None
        if meta["has_tradability"]:
            tradability = (
                np.frombuffer(fh.read(n * t), dtype=np.uint8).reshape(n, t).astype(bool)
            )
    return PricePanel(
        stock_ids=list(meta["stock_ids"]),
        calendar=list(meta["calendar"]),
        features=features.copy(),
        feature_names=list(meta["feature_names"]),
        tradability=tradability,
    )
