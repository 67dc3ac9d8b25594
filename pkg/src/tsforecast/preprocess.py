"""Min-Max scaling fit on the training span only, windowed dataset construction,
and the chronological train/test split."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .timeseries_store import SeriesFrame


@dataclass(frozen=True)
class ScalerParams:
    """Per-column Min-Max affine parameters, in feature-manifest order."""

    names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self) -> None:
        if not (self.mins.shape == self.maxs.shape == (len(self.names),)):
            raise ValueError("scaler parameter arrays must match the column list")
        if np.any(self.maxs < self.mins):
            raise ValueError("scaler max < min")
        self.mins.flags.writeable = False
        self.maxs.flags.writeable = False

    def column_params(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.mins[i]), float(self.maxs[i])

    def to_triples(self) -> list[tuple[str, float, float]]:
        return [(n, float(lo), float(hi)) for n, lo, hi in zip(self.names, self.mins, self.maxs)]

    @staticmethod
    def from_triples(triples) -> "ScalerParams":
        names = tuple(t[0] for t in triples)
        mins = np.array([t[1] for t in triples], dtype=np.float64)
        maxs = np.array([t[2] for t in triples], dtype=np.float64)
        return ScalerParams(names, mins, maxs)


@dataclass(frozen=True)
class SplitSpec:
    """Chronological split fraction and window length."""

    train_fraction: float = 0.8
    lookback: int = 60

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.lookback < 1:
            raise ValueError(f"lookback must be >= 1, got {self.lookback}")


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised samples: lookback rows of all features, next-row target.

    inputs[i] holds rows [i, i+lookback); targets[i] is target_column at row
    i+lookback, so every input row strictly precedes its target's date.
    """

    inputs: np.ndarray  # (n_samples, lookback, n_features)
    targets: np.ndarray  # (n_samples,)
    sample_dates: tuple[date, ...]
    feature_names: tuple[str, ...]
    target_column: str

    def __post_init__(self) -> None:
        if self.inputs.ndim != 3:
            raise ValueError("inputs must be (samples, lookback, features)")
        n, _, k = self.inputs.shape
        if self.targets.shape != (n,) or len(self.sample_dates) != n:
            raise ValueError("targets/sample_dates length must match inputs")
        if k != len(self.feature_names):
            raise ValueError("feature_names length must match inputs")
        self.inputs.flags.writeable = False
        self.targets.flags.writeable = False

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def lookback(self) -> int:
        return self.inputs.shape[1]


def train_row_range(n_rows: int, lookback: int, train_fraction: float) -> range:
    """Frame rows touched by training windows or their targets.

    With n_rows - lookback samples and the first floor(fraction * n) of them
    training, rows [0, n_train + lookback) are exactly the training span; the
    scaler must see nothing beyond it.
    """
    n_samples = n_rows - lookback
    if n_samples < 1:
        raise ValueError(f"need more than lookback={lookback} rows, got {n_rows}")
    n_train = math.floor(train_fraction * n_samples)
    return range(0, n_train + lookback)


def fit_minmax(frame: SeriesFrame, row_range: range) -> ScalerParams:
    """Per-column min/max over the given rows only."""
    if len(row_range) == 0:
        raise ValueError("empty row range")
    names = frame.column_names
    mins = np.empty(len(names))
    maxs = np.empty(len(names))
    lo, hi = row_range.start, row_range.stop
    for j, name in enumerate(names):
        col = frame.column(name)[lo:hi]
        if np.isnan(col).all():
            raise ValueError(f"column {name!r} entirely missing in fit range")
        mins[j] = np.nanmin(col)
        maxs[j] = np.nanmax(col)
    return ScalerParams(names, mins, maxs)


def transform(frame: SeriesFrame, params: ScalerParams) -> SeriesFrame:
    """y = (x - min) / (max - min); degenerate columns (max == min) map to 0."""
    _check_alignment(frame, params)
    out = {}
    for name, lo, hi in zip(params.names, params.mins, params.maxs):
        x = frame.column(name)
        if hi == lo:
            y = np.where(np.isnan(x), np.nan, 0.0)
        else:
            y = (x - lo) / (hi - lo)
        out[name] = y
    return SeriesFrame(frame.dates, out)


def inverse_transform(frame: SeriesFrame, params: ScalerParams) -> SeriesFrame:
    """Exact affine inverse of transform; degenerate columns invert to their min."""
    _check_alignment(frame, params)
    out = {}
    for name, lo, hi in zip(params.names, params.mins, params.maxs):
        y = frame.column(name)
        if hi == lo:
            x = np.where(np.isnan(y), np.nan, lo)
        else:
            x = y * (hi - lo) + lo
        out[name] = x
    return SeriesFrame(frame.dates, out)


def inverse_transform_column(values: np.ndarray, params: ScalerParams, name: str) -> np.ndarray:
    """Invert one column's scaling on a bare array (predictions, targets)."""
    lo, hi = params.column_params(name)
    values = np.asarray(values, dtype=np.float64)
    if hi == lo:
        return np.where(np.isnan(values), np.nan, lo)
    return values * (hi - lo) + lo


def _check_alignment(frame: SeriesFrame, params: ScalerParams) -> None:
    if frame.column_names != params.names:
        for got, want in zip(frame.column_names, params.names):
            if got != want:
                raise ValueError(f"column mismatch: frame has {got!r}, scaler has {want!r}")
        raise ValueError(
            f"column count mismatch: frame has {len(frame.column_names)}, "
            f"scaler has {len(params.names)}"
        )


def make_windows(frame: SeriesFrame, lookback: int, target_column: str = "close") -> WindowedDataset:
    """Slice a (scaled) frame into overlapping lookback windows with next-row targets."""
    if lookback < 1:
        raise ValueError(f"lookback must be >= 1, got {lookback}")
    n_rows = len(frame)
    if n_rows <= lookback:
        raise ValueError(f"need more than lookback={lookback} rows, got {n_rows}")
    matrix = frame.to_matrix()
    windows = np.lib.stride_tricks.sliding_window_view(matrix, lookback, axis=0)
    # windows: (n_rows - lookback + 1, k, lookback) -> (samples, lookback, k)
    inputs = np.ascontiguousarray(windows[:-1].transpose(0, 2, 1))
    targets = frame.column(target_column)[lookback:].copy()
    return WindowedDataset(
        inputs=inputs,
        targets=targets,
        sample_dates=frame.dates[lookback:],
        feature_names=frame.column_names,
        target_column=target_column,
    )


def chronological_split(
    dataset: WindowedDataset, spec: SplitSpec | None = None
) -> tuple[WindowedDataset, WindowedDataset]:
    """First floor(train_fraction * n) samples train, the rest test."""
    spec = SplitSpec() if spec is None else spec
    n = dataset.n_samples
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    n_train = math.floor(spec.train_fraction * n)

    def _take(lo: int, hi: int) -> WindowedDataset:
        return WindowedDataset(
            inputs=dataset.inputs[lo:hi].copy(),
            targets=dataset.targets[lo:hi].copy(),
            sample_dates=dataset.sample_dates[lo:hi],
            feature_names=dataset.feature_names,
            target_column=dataset.target_column,
        )

    return _take(0, n_train), _take(n_train, n)
