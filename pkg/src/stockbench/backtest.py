"""TopK and TopK-Drop daily trading protocols with transaction costs.

Execution convention: signals observed on day t are traded at day t's close
and first marked to market at day t+1's close. Fees are charged on both buy
and sell notional. Fractional shares, no leverage, no shorting. Stocks that
are non-tradable (limit-up/halt mask) cannot be bought or sold that day;
held stocks with a missing price are frozen at their last known price.

TopK fully rebalances to equal weights on the current top-m every day.
TopK-Drop retains holdings that still rank inside the top-m target set, sells
at most n of the worst-ranked holdings outside it and spends the freed cash
equally on the best non-held target names, which bounds daily turnover:
|P_t  intersect  P_{t-1}| >= m - n by construction.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .panel import PricePanel, ScorePanel, compute_returns

logger = logging.getLogger(__name__)

STRATEGY_TOPK = "topk"
STRATEGY_TOPK_DROP = "topk_drop"

#: relative trade-size floor; smaller rebalance deltas are not executed.
_MIN_TRADE_FRACTION = 1e-9
#: absolute cash clamp for float residue after exhausting the cash pool.
_CASH_EPS = 1e-6


@dataclass(frozen=True)
class BacktestConfig:
    """Strategy parameters.

    ``top_k`` is the portfolio size m, ``n_drop`` the maximum number of
    replacements per day for TopK-Drop, ``fee_rate`` the fraction of traded
    notional charged on each side.
    """

    strategy: str = STRATEGY_TOPK_DROP
    top_k: int = 30
    n_drop: int = 5
    fee_rate: float = 0.001
    initial_capital: float = 1_000_000.0
    reequalize_held: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in (STRATEGY_TOPK, STRATEGY_TOPK_DROP):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 1 <= self.n_drop <= self.top_k:
            raise ValueError("need 1 <= n_drop <= top_k")
        if not 0.0 <= self.fee_rate < 0.05:
            raise ValueError("fee_rate must lie in [0, 0.05)")
        if self.initial_capital <= 0:
            raise ValueError("initial_capital must be positive")


@dataclass
class Trade:
    day: int
    stock: str
    side: str  # "buy" | "sell"
    shares: float
    price: float
    notional: float
    fee: float


@dataclass
class PortfolioState:
    """Result of a backtest run: evolving holdings, cash and equity record."""

    days: list[int]
    equity_curve: np.ndarray
    daily_returns: np.ndarray
    turnover: np.ndarray
    trades: list[Trade]
    holdings: dict[str, float]
    cash: float
    fees_total: float
    holdings_history: list[list[str]]
    benchmark_returns: Optional[np.ndarray] = None
    skipped: list[dict] = field(default_factory=list)
    shortfall_days: list[int] = field(default_factory=list)


class _Book:
    """Mutable holdings/cash state while a backtest is running."""

    def __init__(self, cash: float) -> None:
        self.cash = cash
        self.shares: dict[int, float] = {}
        self.last_price: dict[int, float] = {}

    def mark_price(self, i: int, prices: np.ndarray) -> float:
        p = prices[i]
        if np.isfinite(p):
            return float(p)
        return self.last_price[i]

    def value(self, prices: np.ndarray) -> float:
        return sum(sh * self.mark_price(i, prices) for i, sh in sorted(self.shares.items()))

    def equity(self, prices: np.ndarray) -> float:
        return self.cash + self.value(prices)


def select_topk(
    scores: np.ndarray,
    tradability: Optional[np.ndarray],
    m: int,
    stock_ids: Sequence[str],
) -> tuple[list[int], bool]:
    """Top-m stock indices by score among tradable, scored stocks.

    Ties are broken by stock id. Returns (ordered indices, shortfall flag);
    shortfall means fewer than m candidates were available.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    ok = np.isfinite(scores)
    if tradability is not None:
        ok &= tradability
    candidates = sorted(
        (i for i in range(len(stock_ids)) if ok[i]),
        key=lambda i: (-scores[i], stock_ids[i]),
    )
    return candidates[:m], len(candidates) < m


def _execute_sell(
    book: _Book, i: int, shares: float, price: float, fee_rate: float,
    day: int, stock_ids: Sequence[str], trades: list[Trade],
) -> None:
    notional = shares * price
    fee = fee_rate * notional
    book.cash += notional - fee
    remaining = book.shares[i] - shares
    if remaining <= 0.0:
        del book.shares[i]
    else:
        book.shares[i] = remaining
    trades.append(Trade(day, stock_ids[i], "sell", shares, price, notional, fee))


def _execute_buy(
    book: _Book, i: int, shares: float, price: float, fee_rate: float,
    day: int, stock_ids: Sequence[str], trades: list[Trade],
) -> None:
    notional = shares * price
    fee = fee_rate * notional
    book.cash -= notional + fee
    book.shares[i] = book.shares.get(i, 0.0) + shares
    book.last_price[i] = price
    trades.append(Trade(day, stock_ids[i], "buy", shares, price, notional, fee))


def _clamp_cash(book: _Book) -> None:
    if -_CASH_EPS < book.cash < 0.0:
        book.cash = 0.0


def _sellable(
    book: _Book, i: int, prices: np.ndarray, tradable: Optional[np.ndarray],
    day: int, stock_ids: Sequence[str], skipped: list[dict],
) -> bool:
    if not np.isfinite(prices[i]):
        skipped.append(
            {"day": day, "stock": stock_ids[i], "side": "sell", "reason": "missing price"}
        )
        return False
    if tradable is not None and not tradable[i]:
        skipped.append(
            {"day": day, "stock": stock_ids[i], "side": "sell", "reason": "not tradable"}
        )
        return False
    return True


def _equal_weight_rebalance(
    book: _Book,
    target: list[int],
    prices: np.ndarray,
    tradable: Optional[np.ndarray],
    cfg: BacktestConfig,
    day: int,
    stock_ids: Sequence[str],
    trades: list[Trade],
    skipped: list[dict],
) -> None:
    """Sell everything off-target, then move every target name toward equal weight."""
    equity = book.equity(prices)
    if not target or equity <= 0.0:
        return
    slot = equity / len(target)
    target_set = set(target)
    min_trade = _MIN_TRADE_FRACTION * equity

    for i in sorted(set(book.shares) - target_set, key=lambda i: stock_ids[i]):
        if _sellable(book, i, prices, tradable, day, stock_ids, skipped):
            _execute_sell(
                book, i, book.shares[i], float(prices[i]), cfg.fee_rate,
                day, stock_ids, trades,
            )
    # trim overweight target names
    for i in [i for i in target if i in book.shares]:
        price = float(prices[i]) if np.isfinite(prices[i]) else None
        if price is None:
            skipped.append(
                {"day": day, "stock": stock_ids[i], "side": "sell", "reason": "missing price"}
            )
            continue
        value = book.shares[i] * price
        excess = value - slot
        if excess > min_trade and _sellable(book, i, prices, tradable, day, stock_ids, skipped):
            _execute_sell(
                book, i, excess / price, price, cfg.fee_rate, day, stock_ids, trades
            )
    # top up underweight names; new names are limited by the m-slot capacity
    new_slots = cfg.top_k - len(book.shares)
    wants: list[tuple[int, float]] = []
    for i in target:
        price = prices[i]
        if not np.isfinite(price):
            continue
        held_value = book.shares.get(i, 0.0) * float(price)
        want = slot - held_value
        if want <= min_trade:
            continue
        if i not in book.shares:
            if new_slots <= 0:
                continue
            new_slots -= 1
        wants.append((i, want))
    if not wants:
        _clamp_cash(book)
        return
    total_cost = sum(w for _, w in wants) * (1.0 + cfg.fee_rate)
    scale = min(1.0, book.cash / total_cost) if total_cost > 0 else 0.0
    if scale < 1.0:
        logger.debug("day %d: scaling buys by %.6f for available cash", day, scale)
    for i, want in wants:
        notional = want * scale / (1.0 + cfg.fee_rate)
        if notional <= min_trade:
            skipped.append(
                {"day": day, "stock": stock_ids[i], "side": "buy", "reason": "insufficient cash"}
            )
            continue
        price = float(prices[i])
        _execute_buy(
            book, i, notional / price, price, cfg.fee_rate, day, stock_ids, trades
        )
    _clamp_cash(book)


def topk_step(
    book: _Book,
    scores: np.ndarray,
    prices: np.ndarray,
    tradable: Optional[np.ndarray],
    cfg: BacktestConfig,
    day: int,
    stock_ids: Sequence[str],
    skipped: list[dict],
) -> tuple[list[Trade], bool]:
    """Full daily rebalance to equal weights on the current top-m."""
    buyable = np.isfinite(prices)
    if tradable is not None:
        buyable = buyable & tradable
    target, shortfall = select_topk(
        np.where(buyable, scores, np.nan), None, cfg.top_k, stock_ids
    )
    trades: list[Trade] = []
    _equal_weight_rebalance(
        book, target, prices, tradable, cfg, day, stock_ids, trades, skipped
    )
    return trades, shortfall


def topk_drop_step(
    book: _Book,
    scores: np.ndarray,
    prices: np.ndarray,
    tradable: Optional[np.ndarray],
    cfg: BacktestConfig,
    day: int,
    stock_ids: Sequence[str],
    skipped: list[dict],
) -> tuple[list[Trade], bool]:
    """Replace at most n_drop of the worst-ranked holdings outside the top-m target.

    Holdings ranked inside the target set are retained (they drift unless
    ``reequalize_held``); freed cash is spent equally on the highest-ranked
    non-held target names. The intersection constraint
    |P_t intersect P_{t-1}| >= m - n holds by construction.
    """
    buyable = np.isfinite(prices)
    if tradable is not None:
        buyable = buyable & tradable
    target, shortfall = select_topk(
        np.where(buyable, scores, np.nan), None, cfg.top_k, stock_ids
    )
    target_set = set(target)
    trades: list[Trade] = []

    # rank every scored stock for ordering the sells; unscored rank worst
    scored = sorted(
        (i for i in range(len(stock_ids)) if np.isfinite(scores[i])),
        key=lambda i: (-scores[i], stock_ids[i]),
    )
    rank = {i: k for k, i in enumerate(scored)}
    worst_key = lambda i: (-rank.get(i, len(stock_ids)), stock_ids[i])

    outside = [i for i in book.shares if i not in target_set]
    for i in sorted(outside, key=worst_key)[: cfg.n_drop]:
        if _sellable(book, i, prices, tradable, day, stock_ids, skipped):
            _execute_sell(
                book, i, book.shares[i], float(prices[i]), cfg.fee_rate,
                day, stock_ids, trades,
            )

    capacity = cfg.top_k - len(book.shares)
    buys = [i for i in target if i not in book.shares][: max(capacity, 0)]
    if buys:
        slot = book.cash / len(buys)
        equity = book.equity(prices)
        for i in buys:
            notional = slot / (1.0 + cfg.fee_rate)
            if notional <= _MIN_TRADE_FRACTION * max(equity, 1.0):
                skipped.append(
                    {"day": day, "stock": stock_ids[i], "side": "buy",
                     "reason": "insufficient cash"}
                )
                continue
            price = float(prices[i])
            _execute_buy(
                book, i, notional / price, price, cfg.fee_rate,
                day, stock_ids, trades,
            )
    _clamp_cash(book)
    if cfg.reequalize_held:
        # re-equalize across whatever is currently held; never adds or drops names
        held_all = sorted(book.shares, key=lambda i: stock_ids[i])
        _equal_weight_rebalance(
            book, held_all, prices, tradable, cfg, day, stock_ids, trades, skipped
        )
    return trades, shortfall


def equal_weight_benchmark(
    panel: PricePanel, days: Sequence[int]
) -> np.ndarray:
    """Equal-weighted tradable-universe daily return for days[1:]."""
    returns = compute_returns(panel).values
    out = np.zeros(len(days) - 1)
    for k, t in enumerate(days[1:]):
        r = returns[:, t]
        ok = np.isfinite(r)
        if panel.tradability is not None:
            ok &= panel.tradability[:, t]
        out[k] = float(r[ok].mean()) if ok.any() else 0.0
    return out


def run_backtest(
    scores: ScorePanel,
    panel: PricePanel,
    config: BacktestConfig,
    days: Sequence[int],
    benchmark_returns: Optional[np.ndarray] = None,
) -> PortfolioState:
    """Day loop: observe day-t scores, trade at day-t close, mark daily.

    ``days`` must be consecutive panel day indices with scores available.
    Returns the full portfolio record; daily returns are aligned with
    days[1:].
    """
    days = list(days)
    if len(days) < 2:
        raise ValueError("need at least 2 days to backtest")
    if any(b - a != 1 for a, b in zip(days, days[1:])):
        raise ValueError("backtest days must be consecutive")
    if days[-1] >= panel.n_days:
        raise ValueError("day range outside panel")
    close = panel.feature("close")
    step = topk_step if config.strategy == STRATEGY_TOPK else topk_drop_step

    book = _Book(cash=config.initial_capital)
    trades: list[Trade] = []
    skipped: list[dict] = []
    shortfall_days: list[int] = []
    equity = np.empty(len(days))
    turnover = np.zeros(len(days))
    holdings_history: list[list[str]] = []

    for k, t in enumerate(days):
        prices = close[:, t]
        tradable = panel.tradability[:, t] if panel.tradability is not None else None
        for i in list(book.shares):
            if np.isfinite(prices[i]):
                book.last_price[i] = float(prices[i])
            else:
                logger.warning(
                    "day %d: missing price for held stock %s; position frozen",
                    t,
                    panel.stock_ids[i],
                )
        day_trades, shortfall = step(
            book, scores.values[:, t], prices, tradable, config, t,
            panel.stock_ids, skipped,
        )
        if shortfall:
            shortfall_days.append(t)
        trades.extend(day_trades)
        equity[k] = book.equity(prices)
        notional = sum(tr.notional for tr in day_trades)
        turnover[k] = notional / equity[k] if equity[k] > 0 else 0.0
        holdings_history.append(sorted(panel.stock_ids[i] for i in book.shares))

    if benchmark_returns is None:
        benchmark_returns = equal_weight_benchmark(panel, days)
    daily_returns = equity[1:] / equity[:-1] - 1.0
    return PortfolioState(
        days=days,
        equity_curve=equity,
        daily_returns=daily_returns,
        turnover=turnover,
        trades=trades,
        holdings={panel.stock_ids[i]: sh for i, sh in sorted(book.shares.items())},
        cash=book.cash,
        fees_total=sum(tr.fee for tr in trades),
        holdings_history=holdings_history,
        benchmark_returns=benchmark_returns,
        skipped=skipped,
        shortfall_days=shortfall_days,
    )


def replay_trades(
    panel: PricePanel,
    trades: Iterable[Trade],
    days: Sequence[int],
    initial_capital: float,
    fee_rate: float,
) -> PortfolioState:
    """Re-execute a recorded trade sequence (same shares) under a different fee rate.

    Useful for what-if fee analysis and for verifying that fees exactly
    explain the equity difference between paired runs.
    """
    days = list(days)
    close = panel.feature("close")
    index_of = {s: i for i, s in enumerate(panel.stock_ids)}
    by_day: dict[int, list[Trade]] = {}
    for tr in trades:
        by_day.setdefault(tr.day, []).append(tr)

    book = _Book(cash=initial_capital)
    executed: list[Trade] = []
    equity = np.empty(len(days))
    turnover = np.zeros(len(days))
    holdings_history: list[list[str]] = []
    for k, t in enumerate(days):
        prices = close[:, t]
        for i in list(book.shares):
            if np.isfinite(prices[i]):
                book.last_price[i] = float(prices[i])
        for tr in by_day.get(t, []):
            i = index_of[tr.stock]
            if tr.side == "sell":
                _execute_sell(
                    book, i, tr.shares, tr.price, fee_rate, t, panel.stock_ids, executed
                )
            else:
                _execute_buy(
                    book, i, tr.shares, tr.price, fee_rate, t,
                    panel.stock_ids, executed,
                )
        equity[k] = book.equity(prices)
        notional = sum(tr.notional for tr in by_day.get(t, []))
        turnover[k] = notional / equity[k] if equity[k] > 0 else 0.0
        holdings_history.append(sorted(panel.stock_ids[i] for i in book.shares))
    return PortfolioState(
        days=days,
        equity_curve=equity,
        daily_returns=equity[1:] / equity[:-1] - 1.0,
        turnover=turnover,
        trades=executed,
        holdings={panel.stock_ids[i]: sh for i, sh in sorted(book.shares.items())},
        cash=book.cash,
        fees_total=sum(tr.fee for tr in executed),
        holdings_history=holdings_history,
    )


def save_trades_csv(
    trades: Iterable[Trade], calendar: Sequence[str], path: Union[str, Path]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "date", "stock", "side", "shares", "price", "notional", "fee"])
        for tr in trades:
            writer.writerow(
                [
                    tr.day,
                    calendar[tr.day],
                    tr.stock,
                    tr.side,
                    repr(tr.shares),
                    repr(tr.price),
                    repr(tr.notional),
                    repr(tr.fee),
                ]
            )


def save_equity_csv(state: PortfolioState, calendar: Sequence[str], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "date", "equity", "daily_return", "turnover"])
        for k, t in enumerate(state.days):
            writer.writerow(
                [
                    t,
                    calendar[t],
                    repr(float(state.equity_curve[k])),
                    "" if k == 0 else repr(float(state.daily_returns[k - 1])),
                    repr(float(state.turnover[k])),
                ]
            )
