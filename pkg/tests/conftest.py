import numpy as np
import pytest

from stockbench.panel import PricePanel, ReturnPanel


def panel_from_close(close: np.ndarray, stock_ids=None, tradability=None) -> PricePanel:
    """Minimal valid panel where open=high=low=close and volume is constant."""
    close = np.asarray(close, dtype=float)
    n, t = close.shape
    ids = stock_ids or [f"S{i:03d}" for i in range(n)]
    features = np.empty((n, t, 5))
    for k in range(4):
        features[:, :, k] = close
    features[:, :, 4] = 1000.0
    features[~np.isfinite(close)] = np.nan
    return PricePanel(
        stock_ids=list(ids),
        calendar=[f"2020-01-{d + 1:02d}" if t <= 28 else f"d{d:05d}" for d in range(t)],
        features=features,
        feature_names=["open", "high", "low", "close", "volume"],
        tradability=tradability,
    )


def returns_from_values(values: np.ndarray) -> ReturnPanel:
    return ReturnPanel(values=np.asarray(values, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
