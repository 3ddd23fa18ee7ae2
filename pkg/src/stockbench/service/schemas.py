"""Request/response models of the benchmark service."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..config import RegimeParams, RunConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    out_dir: str
    seed: int
    cohort_size: int = Field(default=10, ge=1)
    n_days: int = Field(default=250, ge=2)
    regime_overrides: dict[
        Literal["uptrend", "downtrend", "volatile", "extreme"], RegimeParams
    ] = Field(default_factory=dict)


class SynthResponse(BaseModel):
    panel_csv: str
    labels_csv: str
    n_stocks: int
    n_days: int


class BuildRequest(BaseModel):
    panel_csv: str
    out_dir: str
    format: Literal["long", "wide"] = "long"
    segment_len: int = Field(default=250, ge=2)
    cohort_size: int = Field(default=300, ge=1)
    z_threshold: float = Field(default=5.0, gt=0)


class DatasetInfo(BaseModel):
    segment_start: int
    segment_end: int
    pattern: str
    path: str
    n_stocks: int


class BuildResponse(BaseModel):
    labels_csv: str
    datasets: list[DatasetInfo]
    discarded_days: int


class CharacterizeRequest(BaseModel):
    panel_csv: str
    out_dir: str
    format: Literal["long", "wide"] = "long"
    segment_len: int = Field(default=250, ge=2)
    cohort_size: int = Field(default=300, ge=1)
    z_threshold: float = Field(default=5.0, gt=0)
    adf_lags: Optional[int] = Field(default=None, ge=0)


class PatternRow(BaseModel):
    segment_start: int
    pattern: str
    non_stationarity: float
    autocorrelation: float
    forecastability: float
    n_stocks: int
    split: str


class CharacterizeResponse(BaseModel):
    rows: list[PatternRow]
    csv_path: str
    json_path: str


class RunRequest(BaseModel):
    config: RunConfig
    jobs: int = Field(default=1, ge=1)


class RunResponse(BaseModel):
    archive: str
    metrics: dict[str, dict]


class ReportRequest(BaseModel):
    archives: list[str] = Field(min_length=1)
    out_dir: str


class ReportResponse(BaseModel):
    table: list[dict]
    table_csv: str
    cumulative_returns_csv: str
