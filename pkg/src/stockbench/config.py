"""Declarative run configuration: one YAML file with named, validated sections.

Sections: data (CSV path or synthetic spec), segment, split, predictors[],
backtest, metrics, output. The seed is mandatory; every artifact of a run is
reproducible from the config snapshot plus the seed alone.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator


class ConfigError(ValueError):
    """Raised for invalid or unresolvable run configurations."""


class RegimeParams(BaseModel):
    """Overridable knobs of one movement regime of the synthetic generator."""

    daily_drift: Optional[float] = None
    daily_vol: Optional[float] = None
    jump_prob: Optional[float] = None
    jump_scale: Optional[float] = None
    ar1_coeff: Optional[float] = None


class SynthSpec(BaseModel):
    """Synthetic data source: pattern cohorts with ground-truth labels."""

    cohort_size: int = Field(default=10, ge=1)
    n_days: int = Field(default=250, ge=2)
    regime_overrides: dict[
        Literal["uptrend", "downtrend", "volatile", "extreme"], RegimeParams
    ] = Field(default_factory=dict)


class DataConfig(BaseModel):
    """Exactly one of csv_path or synth."""

    csv_path: Optional[str] = None
    format: Literal["long", "wide"] = "long"
    synth: Optional[SynthSpec] = None

    @model_validator(mode="after")
    def _one_source(self) -> "DataConfig":
        if (self.csv_path is None) == (self.synth is None):
            raise ValueError("data section needs exactly one of csv_path or synth")
        return self


class SegmentConfig(BaseModel):
    segment_len: int = Field(default=250, ge=2)
    cohort_size: int = Field(default=300, ge=1)
    z_threshold: float = Field(default=5.0, gt=0)


class SplitConfig(BaseModel):
    ratios: tuple[int, int, int] = (7, 1, 2)

    @model_validator(mode="after")
    def _positive(self) -> "SplitConfig":
        if min(self.ratios) <= 0:
            raise ValueError("split ratios must be positive")
        return self


class PredictorConfig(BaseModel):
    kind: Literal["csm", "blsw", "ridge", "linear_ranker"]
    name: Optional[str] = None
    lookback: int = Field(default=20, ge=1)
    window: int = Field(default=20, ge=1)
    ridge_lambda: float = Field(default=1.0, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=200, ge=1)
    patience: int = Field(default=20, ge=1)
    eta: float = Field(default=5.0, ge=0)

    @property
    def label(self) -> str:
        return self.name or self.kind


class BacktestSection(BaseModel):
    strategy: Literal["topk", "topk_drop"] = "topk_drop"
    top_k: int = Field(default=30, ge=1)
    n_drop: int = Field(default=5, ge=1)
    fee_rate: float = Field(default=0.001, ge=0, lt=0.05)
    initial_capital: float = Field(default=1_000_000.0, gt=0)
    reequalize_held: bool = False

    @model_validator(mode="after")
    def _drop_le_k(self) -> "BacktestSection":
        if self.n_drop > self.top_k:
            raise ValueError("n_drop must be <= top_k")
        return self


class MetricsSection(BaseModel):
    ic_axis: Literal["cross_sectional", "temporal"] = "cross_sectional"


class RunConfig(BaseModel):
    """Everything one evaluation run needs, validated field by field."""

    seed: int
    data: DataConfig
    segment: SegmentConfig = Field(default_factory=SegmentConfig)
    split: SplitConfig = Field(default_factory=SplitConfig)
    predictors: list[PredictorConfig] = Field(min_length=1)
    backtest: BacktestSection = Field(default_factory=BacktestSection)
    metrics: MetricsSection = Field(default_factory=MetricsSection)
    output_dir: str
    normalize: bool = True
    normalize_features: Optional[list[str]] = None

    @model_validator(mode="after")
    def _unique_names(self) -> "RunConfig":
        labels = [p.label for p in self.predictors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate predictor names: {labels}")
        return self

    def validate_paths(self) -> None:
        """Check referenced inputs are resolvable (deferred until run time)."""
        if self.data.csv_path is not None and not Path(self.data.csv_path).exists():
            raise ConfigError(f"data.csv_path does not exist: {self.data.csv_path}")

    def to_yaml(self) -> str:
        return yaml.safe_dump(
            self.model_dump(mode="json"), sort_keys=True, default_flow_style=False
        )


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Parse and validate a YAML run configuration file.

    A relative data.csv_path resolves against the config file's directory,
    which keeps archived config snapshots self-contained.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping of sections")
    cfg = validate_run_config(raw)
    if cfg.data.csv_path is not None and not Path(cfg.data.csv_path).is_absolute():
        cfg.data.csv_path = str((path.parent / cfg.data.csv_path).resolve())
    return cfg


def validate_run_config(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        lines = [
            f"  {'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in exc.errors()
        ]
        raise ConfigError("invalid config:\n" + "\n".join(lines)) from exc
