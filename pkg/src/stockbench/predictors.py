"""Reference predictors: cross-sectional momentum, mean reversion, ridge, linear ranker.

All predictors emit one score per stock per day; higher score = higher
expected next-day return rank. The linear kinds consume the flattened
lookback-window feature block (L days x F features per stock) and the ranker
is trained by full-batch gradient descent on a composite objective combining
a point-wise squared error with a pair-wise ranking hinge.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .metrics import daily_ic_series
from .panel import DatasetSplit, PricePanel, ReturnPanel, ScorePanel

logger = logging.getLogger(__name__)

KIND_CSM = "csm"
KIND_BLSW = "blsw"
KIND_RIDGE = "ridge"
KIND_LINEAR_RANKER = "linear_ranker"
ALL_KINDS = (KIND_CSM, KIND_BLSW, KIND_RIDGE, KIND_LINEAR_RANKER)

#: cap on step-halving rounds inside one gradient-descent epoch.
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class PredictorSpec:
    """Predictor kind plus hyperparameters.

    ``lookback`` is the number of past days of features a linear model
    observes; ``window`` is the momentum/reversion accumulation window;
    ``eta`` weights the pair-wise ranking term of the composite loss.
    """

    kind: str
    lookback: int = 20
    window: int = 20
    ridge_lambda: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 200
    patience: int = 20
    eta: float = 5.0

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


@dataclass
class TrainedModel:
    """A fitted predictor: weights (empty for csm/blsw) plus the training log."""

    spec: PredictorSpec
    weights: np.ndarray
    training_log: list[dict] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.spec.kind


def predict_csm(returns: ReturnPanel, day: int, window: int) -> np.ndarray:
    """Momentum scores: cumulative return over the trailing window (buy winners).

    score_i = prod_{k=day-window+1..day} (1 + r_i^k) - 1. Stocks with any
    masked return inside the window get a masked (NaN) score.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if day < window:
        raise ValueError(
            f"window of {window} days exceeds history at day {day} "
            "(day-0 returns are undefined)"
        )
    if day >= returns.n_days:
        raise ValueError(f"day {day} outside panel of {returns.n_days} days")
    block = returns.values[:, day - window + 1 : day + 1]
    scores = np.prod(1.0 + block, axis=1) - 1.0
    scores[~np.isfinite(block).all(axis=1)] = np.nan
    return scores


def predict_blsw(returns: ReturnPanel, day: int, window: int) -> np.ndarray:
    """Mean-reversion scores: the negated momentum statistic (buy losers)."""
    return -predict_csm(returns, day, window)


def window_features(panel: PricePanel, day: int, lookback: int) -> np.ndarray:
    """Flattened (N, lookback * F) feature block ending at ``day`` inclusive.

    Rows containing any masked cell are fully masked.
    """
    if day + 1 < lookback:
        raise ValueError(f"lookback {lookback} exceeds history at day {day}")
    if day >= panel.n_days:
        raise ValueError(f"day {day} outside panel of {panel.n_days} days")
    block = panel.features[:, day - lookback + 1 : day + 1, :]
    flat = block.reshape(panel.n_stocks, lookback * panel.n_features).copy()
    flat[~np.isfinite(flat).all(axis=1)] = np.nan
    return flat


def build_training_set(
    panel: PricePanel,
    returns: ReturnPanel,
    days: Iterable[int],
    lookback: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Stack (features, next-day return) pairs over the given prediction days."""
    xs, ys = [], []
    for t in days:
        if t + 1 >= returns.n_days:
            continue
        x = window_features(panel, t, lookback)
        y = returns.values[:, t + 1]
        ok = np.isfinite(x).all(axis=1) & np.isfinite(y)
        if ok.any():
            xs.append(x[ok])
            ys.append(y[ok])
    if not xs:
        raise ValueError("no usable training samples in the given day range")
    return np.vstack(xs), np.concatenate(ys)


def fit_ridge(x: np.ndarray, y: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Ridge weights argmin ||Xw - y||^2 + lambda ||w||^2 via normal equations."""
    if ridge_lambda <= 0:
        raise ValueError("ridge_lambda must be > 0")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite features or targets")
    rows, cols = x.shape
    if rows < cols + 1:
        raise ValueError(f"need at least {cols + 1} samples, got {rows}")
    gram = x.T @ x + ridge_lambda * np.eye(cols)
    return np.linalg.solve(gram, x.T @ y)


def composite_loss(scores: np.ndarray, realized: np.ndarray, eta: float = 5.0) -> float:
    """Point-wise squared error plus eta times the pair-wise ranking hinge.

    loss = sum_i (Y_i - r_i)^2
         + eta * sum_i sum_j max(0, -(Y_i - Y_j)(r_i - r_j))

    with the exact double sum over ordered pairs. This is the per-day
    bracketed quantity; callers average over days.
    """
    y = np.asarray(scores, dtype=float)
    r = np.asarray(realized, dtype=float)
    if y.shape != r.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {r.shape}")
    if eta < 0:
        raise ValueError("eta must be >= 0")
    pointwise = float(np.sum((y - r) ** 2))
    dy = y[:, None] - y[None, :]
    dr = r[:, None] - r[None, :]
    pairwise = float(np.sum(np.maximum(0.0, -dy * dr)))
    return pointwise + eta * pairwise


def composite_loss_grad(
    scores: np.ndarray, realized: np.ndarray, eta: float = 5.0
) -> np.ndarray:
    """Gradient of :func:`composite_loss` in the scores (hinge subgradient 0 at kinks)."""
    y = np.asarray(scores, dtype=float)
    r = np.asarray(realized, dtype=float)
    if y.shape != r.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {r.shape}")
    dy = y[:, None] - y[None, :]
    dr = r[:, None] - r[None, :]
    active = (-dy * dr) > 0.0
    pair_grad = -2.0 * eta * np.sum(np.where(active, dr, 0.0), axis=1)
    return 2.0 * (y - r) + pair_grad


def _prediction_days(split_range: tuple[int, int], lookback: int, last_target: int) -> list[int]:
    lo = max(split_range[0], lookback - 1)
    hi = min(split_range[1] - 1, last_target)
    return list(range(lo, hi))


def train_linear_ranker(
    panel: PricePanel,
    returns: ReturnPanel,
    split: DatasetSplit,
    spec: PredictorSpec,
) -> TrainedModel:
    """Full-batch gradient descent on the composite loss averaged over training days.

    Training windows and targets live entirely inside the train range;
    validation targets inside the valid range (windows may reach back). The
    step size is halved within an epoch until the loss does not increase, so
    the logged training loss is non-increasing. Early-stops on the best mean
    validation IC with the configured patience and returns the
    best-validation weights.
    """
    lookback = spec.lookback
    train_days = _prediction_days(split.train, lookback, split.train[1] - 2)
    valid_days = [
        t for t in range(max(split.valid[0], lookback - 1), split.valid[1] - 1)
    ]
    if not train_days:
        raise ValueError("train split too short for the configured lookback")

    per_day: list[tuple[np.ndarray, np.ndarray]] = []
    for t in train_days:
        x = window_features(panel, t, lookback)
        y = returns.values[:, t + 1]
        ok = np.isfinite(x).all(axis=1) & np.isfinite(y)
        if ok.sum() >= 2:
            per_day.append((x[ok], y[ok]))
    if not per_day:
        raise ValueError("no usable training days (all masked)")

    dim = lookback * panel.n_features
    weights = np.zeros(dim)

    def loss_at(w: np.ndarray) -> float:
        return float(
            np.mean([composite_loss(x @ w, y, spec.eta) for x, y in per_day])
        )

    def grad_at(w: np.ndarray) -> np.ndarray:
        g = np.zeros_like(w)
        for x, y in per_day:
            g += x.T @ composite_loss_grad(x @ w, y, spec.eta)
        return g / len(per_day)

    def valid_ic(w: np.ndarray) -> float:
        if not valid_days:
            return float("nan")
        values = np.full((panel.n_stocks, panel.n_days), np.nan)
        for t in valid_days:
            x = window_features(panel, t, lookback)
            ok = np.isfinite(x).all(axis=1)
            values[ok, t] = x[ok] @ w
        series = daily_ic_series(ScorePanel(values), returns, valid_days)
        return float(np.nanmean(series)) if np.isfinite(series).any() else float("nan")

    lr = spec.learning_rate
    loss = loss_at(weights)
    best_ic = -np.inf
    best_weights = weights.copy()
    bad_epochs = 0
    log: list[dict] = []
    for epoch in range(1, spec.epochs + 1):
        grad = grad_at(weights)
        if not np.isfinite(grad).all():
            raise RuntimeError(f"divergence: non-finite gradient at epoch {epoch}")
        new_loss = loss
        for _ in range(_MAX_BACKTRACKS):
            candidate = weights - lr * grad
            new_loss = loss_at(candidate)
            if np.isfinite(new_loss) and new_loss <= loss:
                weights = candidate
                break
            lr *= 0.5
        else:
            logger.info("step size exhausted at epoch %d; stopping", epoch)
            break
        loss = new_loss
        ic = valid_ic(weights)
        log.append({"epoch": epoch, "train_loss": loss, "valid_ic": ic, "lr": lr})
        if np.isfinite(ic) and ic > best_ic:
            best_ic = ic
            best_weights = weights.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= spec.patience:
                break
    if not np.isfinite(best_ic):
        logger.warning("no usable validation IC; returning final weights")
        best_weights = weights
    return TrainedModel(spec=spec, weights=best_weights, training_log=log)


def train_predictor(
    spec: PredictorSpec,
    panel: PricePanel,
    returns: ReturnPanel,
    split: DatasetSplit,
) -> TrainedModel:
    """Fit one predictor on the train/valid ranges of a dataset."""
    if spec.kind in (KIND_CSM, KIND_BLSW):
        return TrainedModel(spec=spec, weights=np.array([]))
    if spec.kind == KIND_RIDGE:
        train_days = _prediction_days(split.train, spec.lookback, split.train[1] - 2)
        x, y = build_training_set(panel, returns, train_days, spec.lookback)
        weights = fit_ridge(x, y, spec.ridge_lambda)
        mse = float(np.mean((x @ weights - y) ** 2))
        return TrainedModel(
            spec=spec, weights=weights, training_log=[{"train_mse": mse}]
        )
    if spec.kind == KIND_LINEAR_RANKER:
        return train_linear_ranker(panel, returns, split, spec)
    raise ValueError(f"unknown predictor kind {spec.kind!r}")


def score_day(
    model: TrainedModel,
    panel: PricePanel,
    returns: ReturnPanel,
    day: int,
) -> np.ndarray:
    """Scores for one prediction day; masked stocks get NaN."""
    if model.kind == KIND_CSM:
        return predict_csm(returns, day, model.spec.window)
    if model.kind == KIND_BLSW:
        return predict_blsw(returns, day, model.spec.window)
    x = window_features(panel, day, model.spec.lookback)
    scores = np.full(panel.n_stocks, np.nan)
    ok = np.isfinite(x).all(axis=1)
    scores[ok] = x[ok] @ model.weights
    return scores


def predict_scores(
    model: TrainedModel,
    panel: PricePanel,
    returns: ReturnPanel,
    days: Iterable[int],
) -> ScorePanel:
    """Score panel over the given days (NaN elsewhere)."""
    values = np.full((panel.n_stocks, panel.n_days), np.nan)
    for t in days:
        values[:, t] = score_day(model, panel, returns, t)
    return ScorePanel(values=values)


def model_to_json(model: TrainedModel) -> str:
    payload = {
        "kind": model.kind,
        "hyperparameters": {
            "lookback": model.spec.lookback,
            "window": model.spec.window,
            "ridge_lambda": model.spec.ridge_lambda,
            "learning_rate": model.spec.learning_rate,
            "epochs": model.spec.epochs,
            "patience": model.spec.patience,
            "eta": model.spec.eta,
        },
        "weights": [float(w) for w in model.weights],
        "training_log": model.training_log,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> TrainedModel:
    payload = json.loads(text)
    spec = PredictorSpec(kind=payload["kind"], **payload["hyperparameters"])
    return TrainedModel(
        spec=spec,
        weights=np.asarray(payload["weights"], dtype=float),
        training_log=list(payload["training_log"]),
    )


def save_model(model: TrainedModel, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(model_to_json(model))


def load_model(path: Union[str, Path]) -> TrainedModel:
    return model_from_json(Path(path).read_text())
