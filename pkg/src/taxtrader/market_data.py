"""Daily price/volume series: CSV ingestion, synthetic fixtures, windows."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

__all__ = [
    "PriceSeries",
    "EpisodeWindow",
    "MarketDataError",
    "load_csv",
    "write_csv",
    "synthetic_gbm",
    "sample_window",
]

CSV_HEADER = ["date", "close", "volume"]


class MarketDataError(ValueError):
    """Malformed or inconsistent market data."""


@dataclass(frozen=True)
class PriceSeries:
    """Immutable daily series of strictly increasing dates with closes > 0."""

    dates: tuple[date, ...]
    closes: np.ndarray
    volumes: np.ndarray

    def __post_init__(self) -> None:
        closes = np.asarray(self.closes, dtype=np.float64)
        volumes = np.asarray(self.volumes, dtype=np.float64)
        if not (len(self.dates) == len(closes) == len(volumes)):
            raise MarketDataError(
                f"length mismatch: {len(self.dates)} dates, "
                f"{len(closes)} closes, {len(volumes)} volumes"
            )
        if len(self.dates) < 2:
            raise MarketDataError("series needs at least 2 rows")
        if not np.all(closes > 0):
            raise MarketDataError("closes must all be positive")
        if not np.all(volumes >= 0):
            raise MarketDataError("volumes must be non-negative")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise MarketDataError("dates must be strictly increasing")
        closes.flags.writeable = False
        volumes.flags.writeable = False
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "volumes", volumes)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class EpisodeWindow:
    """Contiguous slice of a series: ``length`` steps need ``length + 1`` prices."""

    start_index: int
    length: int

    def __post_init__(self) -> None:
        if self.start_index < 0 or self.length < 1:
            raise MarketDataError(
                f"invalid window: start={self.start_index}, length={self.length}"
            )

    def validate_for(self, series: PriceSeries) -> None:
        if self.start_index + self.length >= len(series):
            raise MarketDataError(
                f"window [{self.start_index}, +{self.length}] exceeds series "
                f"of length {len(series)}"
            )


def load_csv(path: str | Path) -> PriceSeries:
    """Parse a ``date,close,volume`` CSV into a validated series.

    Rows must be in ascending date order with ISO-8601 dates; errors name
    the offending line.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MarketDataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise MarketDataError(
                f"{path}: expected header {','.join(CSV_HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        dates: list[date] = []
        closes: list[float] = []
        volumes: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MarketDataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                d = date.fromisoformat(row[0].strip())
                close = float(row[1])
                volume = float(row[2])
            except ValueError as exc:
                raise MarketDataError(f"{path}:{lineno}: {exc}") from None
            if close <= 0:
                raise MarketDataError(f"{path}:{lineno}: non-positive close {close}")
            if volume < 0:
                raise MarketDataError(f"{path}:{lineno}: negative volume {volume}")
            if dates and d <= dates[-1]:
                raise MarketDataError(
                    f"{path}:{lineno}: date {d} not after previous {dates[-1]}"
                )
            dates.append(d)
            closes.append(close)
            volumes.append(volume)
    if len(dates) < 2:
        raise MarketDataError(f"{path}: fewer than 2 data rows")
    return PriceSeries(tuple(dates), np.array(closes), np.array(volumes))


def write_csv(series: PriceSeries, path: str | Path) -> None:
    """Write a series so that ``load_csv`` reproduces it bit-exactly."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for d, close, volume in zip(series.dates, series.closes, series.volumes):
            writer.writerow([d.isoformat(), repr(float(close)), repr(float(volume))])


def synthetic_gbm(
    seed: int,
    n_days: int,
    s0: float,
    mu: float,
    sigma: float,
    volume: float = 1_000_000.0,
    start: date = date(2000, 1, 3),
) -> PriceSeries:
    """Seeded geometric-Brownian daily closes on consecutive weekdays.

    Annualized drift ``mu`` and volatility ``sigma`` at 252 trading days
    per year; ``sigma = 0`` gives the pure exponential drift path.
    """
    if s0 <= 0:
        raise MarketDataError(f"s0 must be positive, got {s0}")
    if sigma < 0:
        raise MarketDataError(f"sigma must be non-negative, got {sigma}")
    if n_days < 2:
        raise MarketDataError(f"n_days must be at least 2, got {n_days}")
    rng = np.random.default_rng(seed)
    dt = 1.0 / 252.0
    steps = (mu - 0.5 * sigma**2) * dt + sigma * np.sqrt(dt) * rng.standard_normal(
        n_days - 1
    )
    log_path = np.concatenate([[0.0], np.cumsum(steps)])
    closes = s0 * np.exp(log_path)
    days = np.busday_offset(np.datetime64(start), np.arange(n_days), roll="forward")
    dates = tuple(d.astype("datetime64[D]").item() for d in days)
    return PriceSeries(dates, closes, np.full(n_days, float(volume)))


def sample_window(
    series: PriceSeries, length: int, rng: np.random.Generator
) -> EpisodeWindow:
    """Uniformly random valid window of ``length`` steps."""
    n_starts = len(series) - length - 1
    if n_starts < 0:
        raise MarketDataError(
            f"series of length {len(series)} too short for {length}-step windows"
        )
    start = int(rng.integers(0, n_starts + 1))
    return EpisodeWindow(start_index=start, length=length)
