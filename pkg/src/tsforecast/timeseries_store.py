"""Parse, clean, and merge raw OHLCV and fundamentals data into dated numeric frames."""

from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass, fields
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Canonical price column names, in output order.
PRICE_COLUMNS = ("open", "high", "low", "close", "volume")

DEFAULT_OHLCV_SCHEMA = {
    "date": "Date",
    "open": "Open",
    "high": "High",
    "low": "Low",
    "close": "Close",
    "volume": "Volume",
}


class SeriesFrame:
    """Immutable dated table: strictly increasing dates, equal-length float64 columns.

    Missing values are NaN. Column order is preserved and meaningful (it is
    the feature manifest order once features are built).
    """

    def __init__(self, dates: Iterable[date], columns: Mapping[str, Sequence[float] | np.ndarray]):
        self._dates = tuple(dates)
        for a, b in zip(self._dates, self._dates[1:]):
            if a >= b:
                raise ValueError(f"dates not strictly increasing at {b.isoformat()}")
        cols: dict[str, np.ndarray] = {}
        for name, values in columns.items():
            arr = np.array(values, dtype=np.float64)
            if arr.shape != (len(self._dates),):
                raise ValueError(
                    f"column {name!r} has length {arr.shape}, expected ({len(self._dates)},)"
                )
            arr.flags.writeable = False
            cols[name] = arr
        self._columns = cols

    @property
    def dates(self) -> tuple[date, ...]:
        return self._dates

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(self._columns)

    def __len__(self) -> int:
        return len(self._dates)

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def column(self, name: str) -> np.ndarray:
        if name not in self._columns:
            raise KeyError(f"unknown column {name!r}")
        return self._columns[name]

    def to_matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Rows x columns float64 matrix in the given (default: frame) column order."""
        names = self.column_names if names is None else tuple(names)
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((len(self), 0))

    def with_columns(self, new_columns: Mapping[str, np.ndarray]) -> "SeriesFrame":
        """New frame with columns appended (existing names are replaced in place)."""
        merged: dict[str, np.ndarray] = dict(self._columns)
        merged.update(new_columns)
        return SeriesFrame(self._dates, merged)

    def select(self, names: Sequence[str]) -> "SeriesFrame":
        """New frame with exactly `names`, in that order."""
        return SeriesFrame(self._dates, {n: self.column(n) for n in names})

    def slice_rows(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(
            self._dates[start:stop], {n: c[start:stop] for n, c in self._columns.items()}
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SeriesFrame):
            return NotImplemented
        if self._dates != other._dates or self.column_names != other.column_names:
            return False
        return all(
            np.array_equal(self._columns[n], other._columns[n], equal_nan=True)
            for n in self._columns
        )


@dataclass(frozen=True)
class PriceBar:
    """One trading day of OHLCV data. Missing fields are NaN."""

    date: date
    open: float = float("nan")
    high: float = float("nan")
    low: float = float("nan")
    close: float = float("nan")
    volume: float = float("nan")

    def ohlc_violation(self) -> bool:
        """True when all four prices are present but low/high do not bracket open/close."""
        vals = (self.open, self.high, self.low, self.close)
        if any(np.isnan(v) for v in vals):
            return False
        return self.low > min(self.open, self.close) or self.high < max(self.open, self.close)


@dataclass(frozen=True)
class FundamentalsRecord:
    """Sparse fundamentals snapshot effective from a reporting date onward."""

    effective_date: date
    equity: float = float("nan")
    total_asset: float = float("nan")
    sales: float = float("nan")
    profit_before_tax: float = float("nan")
    profit_after_tax: float = float("nan")
    cash_dividend_pct: float = float("nan")
    stock_dividend_pct: float = float("nan")
    face_value: float = float("nan")
    paid_up_capital: float = float("nan")
    num_shares: float = float("nan")


FUNDAMENTAL_FIELDS = tuple(f.name for f in fields(FundamentalsRecord) if f.name != "effective_date")


@dataclass
class IngestStats:
    """Data-quality counters collected while parsing one OHLCV file."""

    rows_in: int = 0
    rows_out: int = 0
    skipped_rows: int = 0
    duplicates_collapsed: int = 0
    coerced_cells: int = 0
    missing_cells: int = 0
    ohlc_violations: int = 0
    negative_volume_rows: int = 0


def _parse_date(text: str, date_format: str | None) -> date:
    if date_format is not None:
        return datetime.strptime(text, date_format).date()
    return date.fromisoformat(text)


def _coerce_cell(text: str, stats: IngestStats) -> float:
    text = text.strip() if text is not None else ""
    if not text:
        stats.missing_cells += 1
        return float("nan")
    try:
        return float(text.replace(",", ""))
    except ValueError:
        stats.coerced_cells += 1
        return float("nan")


def load_ohlcv_csv(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    date_format: str | None = None,
) -> tuple[SeriesFrame, IngestStats]:
    """Parse an OHLCV CSV into a SeriesFrame plus data-quality counters.

    `schema` maps canonical column names to file header names and must map
    "date". Rows are sorted ascending by date; duplicate dates keep the last
    file occurrence (later rows treated as corrections); non-parsable numeric
    cells become NaN. OHLC sanity violations and negative volumes are counted
    and logged, never dropped.
    """
    schema = dict(DEFAULT_OHLCV_SCHEMA if schema is None else schema)
    if "date" not in schema:
        raise ValueError("schema must map a 'date' column")
    path = Path(path)
    stats = IngestStats()

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for canonical, file_col in schema.items():
            if file_col not in header:
                raise ValueError(f"mapped column {file_col!r} (for {canonical!r}) not in header")
        value_cols = [c for c in schema if c != "date"]
        by_date: dict[date, dict[str, float]] = {}
        for row in reader:
            stats.rows_in += 1
            raw_date = (row.get(schema["date"]) or "").strip()
            try:
                d = _parse_date(raw_date, date_format)
            except ValueError:
                stats.skipped_rows += 1
                logger.warning("skipping row %d: unparsable date %r", stats.rows_in, raw_date)
                continue
            if d in by_date:
                stats.duplicates_collapsed += 1
            by_date[d] = {c: _coerce_cell(row.get(schema[c]), stats) for c in value_cols}

    if not by_date:
        raise ValueError(f"no parsable rows in {path}")

    dates = sorted(by_date)
    columns = {c: np.array([by_date[d][c] for d in dates]) for c in value_cols}
    frame = SeriesFrame(dates, columns)
    stats.rows_out = len(frame)

    if all(c in frame for c in ("open", "high", "low", "close")):
        for i, d in enumerate(dates):
            bar = PriceBar(
                d,
                frame.column("open")[i],
                frame.column("high")[i],
                frame.column("low")[i],
                frame.column("close")[i],
                frame.column("volume")[i] if "volume" in frame else float("nan"),
            )
            if bar.ohlc_violation():
                stats.ohlc_violations += 1
                logger.warning("OHLC sanity violation on %s (row kept)", d.isoformat())
            if not np.isnan(bar.volume) and bar.volume < 0:
                stats.negative_volume_rows += 1
                logger.warning("negative volume on %s (row kept)", d.isoformat())
    return frame, stats


def parse_ohlcv_csv(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    date_format: str | None = None,
) -> SeriesFrame:
    """Like load_ohlcv_csv but returns just the frame."""
    frame, _ = load_ohlcv_csv(path, schema, date_format)
    return frame


def forward_fill(frame: SeriesFrame, columns: Sequence[str] | None = None) -> SeriesFrame:
    """Replace each missing value with the nearest preceding value in its column.

    Leading missing values stay missing. Unknown column names raise KeyError.
    """
    names = frame.column_names if columns is None else tuple(columns)
    filled: dict[str, np.ndarray] = {}
    for name in names:
        x = frame.column(name)
        mask = np.isnan(x)
        if not mask.any():
            continue
        idx = np.where(~mask, np.arange(len(x)), 0)
        np.maximum.accumulate(idx, out=idx)
        filled[name] = x[idx]
    return frame.with_columns(filled) if filled else frame


def merge_fundamentals(
    prices: SeriesFrame, fundamentals: Sequence[FundamentalsRecord]
) -> SeriesFrame:
    """As-of join: each trading date gets the latest record with effective_date <= date.

    Dates before the first record get NaN. Adds one column per fundamentals
    field; price columns are passed through untouched.
    """
    records = sorted(fundamentals, key=lambda r: r.effective_date)
    eff_dates = [r.effective_date for r in records]
    n = len(prices)
    new_cols = {name: np.full(n, np.nan) for name in FUNDAMENTAL_FIELDS}
    for i, d in enumerate(prices.dates):
        k = bisect.bisect_right(eff_dates, d) - 1
        if k < 0:
            continue
        rec = records[k]
        for name in FUNDAMENTAL_FIELDS:
            new_cols[name][i] = getattr(rec, name)
    return prices.with_columns(new_cols)


def parse_fundamentals_csv(
    path: str | Path, date_format: str | None = None
) -> list[FundamentalsRecord]:
    """Parse a fundamentals CSV into records, matching headers case-insensitively.

    A column named effective_date (or date) is required; unknown columns are
    ignored. Numeric cells that fail to parse become NaN.
    """
    path = Path(path)
    records: list[FundamentalsRecord] = []
    stats = IngestStats()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        lower_to_file = {h.strip().lower(): h for h in header}
        date_col = lower_to_file.get("effective_date") or lower_to_file.get("date")
        if date_col is None:
            raise ValueError("fundamentals CSV needs an 'effective_date' or 'date' column")
        field_map = {f: lower_to_file[f] for f in FUNDAMENTAL_FIELDS if f in lower_to_file}
        for row in reader:
            raw_date = (row.get(date_col) or "").strip()
            try:
                d = _parse_date(raw_date, date_format)
            except ValueError:
                logger.warning("skipping fundamentals row with unparsable date %r", raw_date)
                continue
            values = {f: _coerce_cell(row.get(col), stats) for f, col in field_map.items()}
            records.append(FundamentalsRecord(effective_date=d, **values))
    return records


def _format_value(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_frame_csv(frame: SeriesFrame, path: str | Path) -> None:
    """Canonical frame output: ISO dates, shortest round-trip float repr, NaN as empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("date",) + frame.column_names)
        cols = [frame.column(n) for n in frame.column_names]
        for i, d in enumerate(frame.dates):
            writer.writerow([d.isoformat()] + [_format_value(c[i]) for c in cols])


def read_frame_csv(path: str | Path) -> SeriesFrame:
    """Read back a canonical frame CSV written by write_frame_csv."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "date":
            raise ValueError(f"{path}: not a canonical frame CSV (first column must be 'date')")
        names = header[1:]
        dates: list[date] = []
        rows: list[list[float]] = []
        for row in reader:
            dates.append(date.fromisoformat(row[0]))
            rows.append([float(cell) if cell else float("nan") for cell in row[1:]])
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(names)))
    return SeriesFrame(dates, {n: data[:, j] for j, n in enumerate(names)})
