"""Loading, validation, normalization, splitting and windowing of weekly count matrices.

The on-disk format is a UTF-8 CSV with a header row of location ids and one
row per week. All downstream modules consume the in-memory types defined here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataValidationError


@dataclass(frozen=True)
class EpidemicSeries:
    """A T x N matrix of weekly infection counts plus location metadata."""

    values: np.ndarray
    location_ids: list[str]
    time_index: list[str] = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise DataValidationError(f"expected a 2-D matrix, got shape {values.shape}")
        t, n = values.shape
        if n < 2:
            raise DataValidationError(f"need at least 2 locations, got {n}")
        if len(self.location_ids) != n:
            raise DataValidationError(
                f"{len(self.location_ids)} location ids for {n} columns"
            )
        if not self.time_index:
            object.__setattr__(self, "time_index", [f"w{i:04d}" for i in range(t)])
        elif len(self.time_index) != t:
            raise DataValidationError(f"{len(self.time_index)} time labels for {t} rows")
        if not np.isfinite(values).all():
            raise DataValidationError("series contains NaN or infinite values")
        if (values < 0).any():
            rows, cols = np.nonzero(values < 0)
            raise DataValidationError(
                f"negative count at row {rows[0]}, location '{self.location_ids[cols[0]]}'"
            )

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_locations(self) -> int:
        return self.values.shape[1]

    def slice_rows(self, start: int, stop: int) -> "EpidemicSeries":
        return EpidemicSeries(
            values=self.values[start:stop],
            location_ids=self.location_ids,
            time_index=self.time_index[start:stop],
        )


@dataclass(frozen=True)
class NormalizationStats:
    """Per-location min/max fitted on training rows only."""

    per_location_min: np.ndarray
    per_location_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.per_location_min, dtype=np.float64)
        hi = np.asarray(self.per_location_max, dtype=np.float64)
        object.__setattr__(self, "per_location_min", lo)
        object.__setattr__(self, "per_location_max", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DataValidationError("min/max must be matching 1-D vectors")
        if (hi < lo).any():
            raise DataValidationError("per-location max < min")

    @property
    def spread(self) -> np.ndarray:
        return self.per_location_max - self.per_location_min


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/val/test fractions; no shuffling ever."""

    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise ConfigurationError(f"negative split fraction in {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions {fracs} do not sum to 1")


@dataclass(frozen=True)
class WindowedSample:
    """One supervised sample: w history rows, the target row h steps ahead,
    and the row immediately before the target (used by the ODE residual)."""

    history: np.ndarray
    target: np.ndarray
    prev_target: np.ndarray
    anchor_t: int


def load_csv(path: str | Path) -> EpidemicSeries:
    """Read a counts CSV (header = location ids, one row per week).

    Raises DataValidationError naming the offending line for malformed rows
    and for negative, NaN or infinite values.
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"counts file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        location_ids = [col.strip() for col in header]
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(location_ids):
                raise DataValidationError(
                    f"{path}: line {lineno}: expected {len(location_ids)} fields, got {len(row)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DataValidationError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        r = int(np.nonzero(bad.any(axis=1))[0][0])
        raise DataValidationError(f"{path}: line {r + 2}: non-finite value")
    if (values < 0).any():
        r = int(np.nonzero((values < 0).any(axis=1))[0][0])
        raise DataValidationError(f"{path}: line {r + 2}: negative value")
    return EpidemicSeries(values=values, location_ids=location_ids)


def write_csv(series: EpidemicSeries, path: str | Path) -> None:
    """Write a series in the same CSV format `load_csv` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.location_ids)
        for row in series.values:
            writer.writerow([format(v, "g") for v in row])


def chronological_split(
    series: EpidemicSeries, spec: SplitSpec, min_rows: int = 1
) -> tuple[EpidemicSeries, EpidemicSeries, EpidemicSeries]:
    """Split into train/val/test by row order: floor(frac*T) rows for train
    and val, the remainder for test. Pass min_rows=w+h to enforce that every
    split can be windowed.
    """
    t = series.n_steps
    n_train = math.floor(spec.train_frac * t)
    n_val = math.floor(spec.val_frac * t)
    n_test = t - n_train - n_val
    for name, length in (("train", n_train), ("val", n_val), ("test", n_test)):
        if length < min_rows:
            raise ConfigurationError(
                f"{name} split has {length} rows, needs at least {min_rows} "
                f"(T={t}, fractions {spec.train_frac}/{spec.val_frac}/{spec.test_frac})"
            )
    train = series.slice_rows(0, n_train)
    val = series.slice_rows(n_train, n_train + n_val)
    test = series.slice_rows(n_train + n_val, t)
    return train, val, test


def fit_normalization(train: EpidemicSeries) -> NormalizationStats:
    """Per-location min/max over the training rows only."""
    if train.n_steps == 0:
        raise DataValidationError("cannot fit normalization on an empty split")
    return NormalizationStats(
        per_location_min=train.values.min(axis=0),
        per_location_max=train.values.max(axis=0),
    )


def apply_normalization(series: EpidemicSeries, stats: NormalizationStats) -> EpidemicSeries:
    """Map to (x - min) / (max - min); constant locations map to 0.

    Values outside the training range are deliberately left unclipped so that
    validation/test rows keep their real magnitude after inversion.
    """
    if stats.per_location_min.shape[0] != series.n_locations:
        raise DataValidationError(
            f"stats fitted for {stats.per_location_min.shape[0]} locations, "
            f"series has {series.n_locations}"
        )
    spread = stats.spread
    safe = np.where(spread > 0, spread, 1.0)
    normalized = (series.values - stats.per_location_min) / safe
    normalized[:, spread == 0] = 0.0
    return EpidemicSeries(
        values=normalized, location_ids=series.location_ids, time_index=series.time_index
    )


def invert_normalization(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Project normalized values back to real counts. Constant locations
    recover their constant."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != stats.per_location_min.shape[0]:
        raise DataValidationError(
            f"last axis {values.shape[-1]} does not match "
            f"{stats.per_location_min.shape[0]} locations"
        )
    return values * stats.spread + stats.per_location_min


def make_windows(
    series: EpidemicSeries, w: int, h: int, *, allow_horizon_one: bool = False
) -> list[WindowedSample]:
    """Slice a (normalized) series into supervised windows.

    Produces exactly T - w - h + 1 samples. Each sample's history is the w
    consecutive rows ending at anchor_t, its target the row h steps later and
    prev_target the row h-1 steps later. Horizon 1 is rejected unless
    explicitly allowed (sensitivity sweeps cover it; standard runs do not).
    """
    if w <= 0:
        raise ConfigurationError(f"window must be positive, got {w}")
    min_h = 1 if allow_horizon_one else 2
    if h < min_h:
        raise ConfigurationError(f"horizon must be >= {min_h}, got {h}")
    t = series.n_steps
    if t < w + h:
        raise ConfigurationError(
            f"series has {t} rows, needs at least w + h = {w + h} to form one window"
        )
    values = series.values
    samples = []
    for anchor in range(w - 1, t - h):
        samples.append(
            WindowedSample(
                history=values[anchor - w + 1 : anchor + 1],
                target=values[anchor + h],
                prev_target=values[anchor + h - 1],
                anchor_t=anchor,
            )
        )
    return samples


def stack_windows(samples: list[WindowedSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (S,w,N) histories, (S,N) targets, (S,N) prev targets."""
    if not samples:
        raise ConfigurationError("no windowed samples to stack")
    hist = np.stack([s.history for s in samples])
    tgt = np.stack([s.target for s in samples])
    prev = np.stack([s.prev_target for s in samples])
    return hist, tgt, prev
