"""Engineered features: returns, moving averages, MACD, Bollinger bands, temporal
features, intraday range position, and Pearson correlation matrices."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .timeseries_store import PRICE_COLUMNS, SeriesFrame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndicatorConfig:
    """Which features to build and with what windows.

    Defaults follow the usual convention set: SMA 5/10, EMA 5/12,
    MACD (12, 26, 9), Bollinger (20, 2). Setting a group to an empty
    tuple / None / False disables it.
    """

    sma_windows: tuple[int, ...] = (5, 10)
    ema_spans: tuple[int, ...] = (5, 12)
    macd: tuple[int, int, int] | None = (12, 26, 9)
    bollinger: tuple[int, float] | None = (20, 2.0)
    include_returns: bool = True
    include_range_position: bool = True
    include_temporal: bool = True

    def __post_init__(self) -> None:
        if any(w < 1 for w in self.sma_windows):
            raise ValueError("sma windows must be >= 1")
        if any(s < 1 for s in self.ema_spans):
            raise ValueError("ema spans must be >= 1")
        if self.macd is not None:
            fast, slow, signal = self.macd
            if min(fast, slow, signal) < 1:
                raise ValueError("macd windows must be >= 1")
            if fast >= slow:
                raise ValueError(f"macd fast window ({fast}) must be < slow window ({slow})")
        if self.bollinger is not None and self.bollinger[0] < 2:
            raise ValueError("bollinger window must be >= 2")

    @staticmethod
    def disabled() -> "IndicatorConfig":
        """A config that builds nothing (frame passes through unchanged)."""
        return IndicatorConfig(
            sma_windows=(),
            ema_spans=(),
            macd=None,
            bollinger=None,
            include_returns=False,
            include_range_position=False,
            include_temporal=False,
        )


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric Pearson coefficient matrix over named columns."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values.flags.writeable = False

    def entry(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])


def log_return(close: np.ndarray, dates: Sequence[date] | None = None) -> np.ndarray:
    """out[t] = ln(close[t] / close[t-1]); out[0] missing.

    Non-positive prices participating in a computed return raise, naming the
    date when one is supplied.
    """
    close = np.asarray(close, dtype=np.float64)
    out = np.full_like(close, np.nan)
    for t in range(1, len(close)):
        a, b = close[t - 1], close[t]
        if np.isnan(a) or np.isnan(b):
            continue
        if a <= 0 or b <= 0:
            where = dates[t].isoformat() if dates is not None else f"index {t}"
            raise ValueError(f"non-positive close at {where}: cannot take log return")
        out[t] = np.log(b / a)
    return out


def pct_return(close: np.ndarray) -> np.ndarray:
    """out[t] = close[t]/close[t-1] - 1; out[0] missing; zero denominators warn."""
    close = np.asarray(close, dtype=np.float64)
    out = np.full_like(close, np.nan)
    prev, cur = close[:-1], close[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = cur / prev
    zero_prev = prev == 0
    if np.any(zero_prev & ~np.isnan(cur)):
        logger.warning("pct_return: zero price in denominator at %d positions", int(zero_prev.sum()))
    ratio[zero_prev] = np.nan
    out[1:] = ratio - 1.0
    return out


def sma(x: np.ndarray, window: int) -> np.ndarray:
    """Rolling mean over full windows only; any NaN inside a window yields NaN."""
    if window < 1:
        raise ValueError(f"sma window must be >= 1, got {window}")
    x = np.asarray(x, dtype=np.float64)
    out = np.full_like(x, np.nan)
    if len(x) >= window:
        windows = np.lib.stride_tricks.sliding_window_view(x, window)
        out[window - 1 :] = windows.mean(axis=1)
    return out


def ema(x: np.ndarray, span: int) -> np.ndarray:
    """Exponential moving average, alpha = 2/(span+1), non-adjusted recurrence.

    The recurrence starts at the first non-missing value; later missing inputs
    produce missing outputs without advancing the state.
    """
    if span < 1:
        raise ValueError(f"ema span must be >= 1, got {span}")
    x = np.asarray(x, dtype=np.float64)
    alpha = 2.0 / (span + 1.0)
    out = np.full_like(x, np.nan)
    state = np.nan
    for t in range(len(x)):
        v = x[t]
        if np.isnan(v):
            continue
        state = v if np.isnan(state) else alpha * v + (1.0 - alpha) * state
        out[t] = state
    return out


def _mask_before(x: np.ndarray, first_valid: int) -> np.ndarray:
    out = x.copy()
    out[:first_valid] = np.nan
    return out


def macd(
    close: np.ndarray, fast: int = 12, slow: int = 26, signal: int = 9
) -> tuple[np.ndarray, np.ndarray]:
    """MACD line (fast EMA - slow EMA) and its signal line (EMA of the MACD line).

    Warm-up convention matches the common indicator-library one: the MACD line
    is hidden until `slow` observations have been seen, the signal line until
    `signal` MACD values have been seen on top of that.
    """
    if fast >= slow:
        raise ValueError(f"macd fast window ({fast}) must be < slow window ({slow})")
    close = np.asarray(close, dtype=np.float64)
    line = ema(close, fast) - ema(close, slow)
    valid = np.flatnonzero(~np.isnan(close))
    start = int(valid[0]) if len(valid) else len(close)
    line = _mask_before(line, min(start + slow - 1, len(close)))
    sig = ema(line, signal)
    sig = _mask_before(sig, min(start + slow + signal - 2, len(close)))
    return line, sig


def bollinger(
    close: np.ndarray, window: int = 20, num_std: float = 2.0
) -> tuple[np.ndarray, np.ndarray]:
    """Upper/lower bands: rolling mean +- num_std rolling population std (divisor = window)."""
    if window < 2:
        raise ValueError(f"bollinger window must be >= 2, got {window}")
    close = np.asarray(close, dtype=np.float64)
    mid = sma(close, window)
    sd = np.full_like(close, np.nan)
    if len(close) >= window:
        windows = np.lib.stride_tricks.sliding_window_view(close, window)
        sd[window - 1 :] = windows.std(axis=1)
    return mid + num_std * sd, mid - num_std * sd


def temporal_features(dates: Sequence[date]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weekday (Monday = 0), month (1-12), and ISO-8601 week number (1-53)."""
    weekday = np.array([d.weekday() for d in dates], dtype=np.float64)
    month = np.array([d.month for d in dates], dtype=np.float64)
    week = np.array([d.isocalendar()[1] for d in dates], dtype=np.float64)
    return weekday, month, week


def range_position(high: np.ndarray, low: np.ndarray, close: np.ndarray) -> np.ndarray:
    """(close - low) / (high - low); missing where high == low."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    close = np.asarray(close, dtype=np.float64)
    span = high - low
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (close - low) / span
    out[span == 0] = np.nan
    return out


def pearson_matrix(frame: SeriesFrame, columns: Sequence[str] | None = None) -> CorrelationMatrix:
    """Pairwise Pearson coefficients with pairwise deletion of missing rows.

    Pairs with fewer than two overlapping observations or zero variance get a
    missing entry (the former with a warning).
    """
    labels = tuple(frame.column_names if columns is None else columns)
    if len(labels) < 2:
        raise ValueError("pearson_matrix needs at least 2 columns")
    cols = [frame.column(n) for n in labels]
    k = len(labels)
    values = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            both = ~np.isnan(cols[i]) & ~np.isnan(cols[j])
            n_obs = int(both.sum())
            if n_obs < 2:
                logger.warning(
                    "pearson_matrix: only %d overlapping observations for (%s, %s)",
                    n_obs, labels[i], labels[j],
                )
                continue
            a = cols[i][both] - cols[i][both].mean()
            b = cols[j][both] - cols[j][both].mean()
            denom = np.sqrt((a * a).sum() * (b * b).sum())
            if denom == 0:
                continue
            r = float((a * b).sum() / denom)
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(labels, values)


def write_correlation_csv(matrix: CorrelationMatrix, path: str | Path) -> None:
    """Square CSV with the label list as both header row and first column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("",) + matrix.labels)
        for i, label in enumerate(matrix.labels):
            writer.writerow(
                [label] + ["" if np.isnan(v) else repr(float(v)) for v in matrix.values[i]]
            )


def _forward_fill_interior(cols: dict[str, np.ndarray]) -> int:
    """Fill gaps after each column's first defined value; returns cells filled."""
    filled = 0
    for name, x in cols.items():
        mask = np.isnan(x)
        if not mask.any():
            continue
        idx = np.where(~mask, np.arange(len(x)), 0)
        np.maximum.accumulate(idx, out=idx)
        cols[name] = x[idx]
        filled += int(mask.sum())
    return filled


def build_feature_frame(frame: SeriesFrame, cfg: IndicatorConfig | None = None) -> SeriesFrame:
    """Append all configured feature columns and trim the warm-up prefix.

    Output column order: price columns, then returns, SMA/EMA, MACD pair,
    Bollinger pair, range position, temporal features, then any remaining
    input columns (fundamentals) in their original order. Leading rows where
    any column is still missing are dropped (the count is logged); interior
    gaps left by degenerate bars are forward-filled afterwards.
    """
    cfg = IndicatorConfig() if cfg is None else cfg
    if "close" not in frame:
        raise ValueError("build_feature_frame requires a 'close' column")
    if cfg.include_range_position and not ("high" in frame and "low" in frame):
        raise ValueError("range position requires 'high' and 'low' columns")

    close = frame.column("close")
    features: dict[str, np.ndarray] = {}
    if cfg.include_returns:
        features["log_return"] = log_return(close, frame.dates)
        features["pct_return"] = pct_return(close)
    for w in cfg.sma_windows:
        features[f"sma_{w}"] = sma(close, w)
    for s in cfg.ema_spans:
        features[f"ema_{s}"] = ema(close, s)
    if cfg.macd is not None:
        line, sig = macd(close, *cfg.macd)
        features["macd"] = line
        features["macd_signal"] = sig
    if cfg.bollinger is not None:
        upper, lower = bollinger(close, *cfg.bollinger)
        features["bb_upper"] = upper
        features["bb_lower"] = lower
    if cfg.include_range_position:
        features["range_position"] = range_position(
            frame.column("high"), frame.column("low"), close
        )
    if cfg.include_temporal:
        weekday, month, week = temporal_features(frame.dates)
        features["weekday"] = weekday
        features["month"] = month
        features["week_of_year"] = week

    if not features:
        return frame  # nothing added, nothing to trim

    price_cols = [c for c in PRICE_COLUMNS if c in frame]
    other_cols = [c for c in frame.column_names if c not in PRICE_COLUMNS]
    ordered = {name: frame.column(name) for name in price_cols}
    ordered.update(features)
    ordered.update({name: frame.column(name) for name in other_cols})

    trim = 0
    for name, col in ordered.items():
        defined = np.flatnonzero(~np.isnan(col))
        if len(defined) == 0:
            raise ValueError(f"column {name!r} has no observed values; cannot trim warm-up")
        trim = max(trim, int(defined[0]))
    trimmed = {name: col[trim:].copy() for name, col in ordered.items()}
    filled = _forward_fill_interior(trimmed)
    logger.info("build_feature_frame: trimmed %d warm-up rows, filled %d interior cells", trim, filled)
    return SeriesFrame(frame.dates[trim:], trimmed)
