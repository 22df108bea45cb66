"""Dataset ingestion, chronological splits, window sampling, RevIN, few-shot prefixes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FREQUENCIES = ("hourly", "15min", "10min", "daily", "weekly", "monthly", "quarterly", "yearly", "other")

REVIN_EPS = 1e-8


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesDataset:
    values: np.ndarray
    column_names: tuple[str, ...]
    frequency: str = "other"
    name: str = "dataset"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"dataset values must be a non-empty T x D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"missing or non-finite value at row {bad[0]}, column {bad[1]}")
        if len(self.column_names) != values.shape[1]:
            raise DataError(f"{len(self.column_names)} column names for {values.shape[1]} columns")
        if self.frequency not in FREQUENCIES:
            raise DataError(f"unknown frequency {self.frequency!r}; expected one of {FREQUENCIES}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def slice_rows(self, start: int, stop: int, suffix: str = "") -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.values[start:stop], self.column_names, self.frequency, self.name + suffix)


@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    origin_index: int


@dataclass(frozen=True)
class RevinState:
    mean: np.ndarray
    std: np.ndarray


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise DataError(f"missing or non-finite cell {cell!r} at row {row}, column {col}")
    return value


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, frequency: str = "other", name: str | None = None) -> TimeSeriesDataset:
    """Read a comma-separated file with optional header and optional timestamp first column."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = None
    if not all(_is_number(c) for c in rows[0][1:]) or (len(rows[0]) == 1 and not _is_number(rows[0][0])):
        header, rows = rows[0], rows[1:]
    if not rows:
        raise DataError(f"{path}: header but no data rows")
    drop_first = len(rows[0]) > 1 and not _is_number(rows[0][0])
    first = 1 if drop_first else 0
    width = len(rows[0])
    values = np.empty((len(rows), width - first))
    for i, row in enumerate(rows):
        line_no = i + (2 if header else 1)
        if len(row) != width:
            raise DataError(f"{path}: row {line_no} has {len(row)} cells, expected {width}")
        for j in range(first, width):
            values[i, j - first] = _parse_float(row[j].strip(), line_no, j + 1)
    if header:
        names = tuple(header[first:])
    else:
        names = tuple(f"ch{j}" for j in range(width - first))
    return TimeSeriesDataset(values, names, frequency, name or path.stem)


def load_m4_csv(path, frequency: str) -> list[TimeSeriesDataset]:
    """M4-style file: one univariate series per row, variable length, optional id column."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            cells = [c.strip() for c in row if c.strip()]
            if not cells:
                continue
            sid = f"{path.stem}_{i}"
            if not _is_number(cells[0]):
                if i == 0 and not any(_is_number(c) for c in cells[1:]):
                    continue  # header row
                sid, cells = cells[0], cells[1:]
            vals = [_parse_float(c, i + 1, j + 2) for j, c in enumerate(cells)]
            out.append(TimeSeriesDataset(np.array(vals), ("value",), frequency, sid))
    if not out:
        raise DataError(f"{path}: no series found")
    return out


def chronological_split(ds: TimeSeriesDataset, ratio=(0.6, 0.2, 0.2)):
    """Contiguous train/val/test split; floor allocation with leftover rows going to train."""
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise DataError(f"split ratios must be three positive numbers, got {ratio}")
    if abs(sum(ratio) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {sum(ratio)}")
    n_val = int(math.floor(ds.T * ratio[1]))
    n_test = int(math.floor(ds.T * ratio[2]))
    n_train = ds.T - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"split of T={ds.T} with ratios {ratio} leaves an empty segment")
    a, b = n_train, n_train + n_val
    return ds.slice_rows(0, a, ":train"), ds.slice_rows(a, b, ":val"), ds.slice_rows(b, ds.T, ":test")


def window_count(T: int, T_in: int, H: int, stride: int = 1) -> int:
    if T < T_in + H:
        return 0
    return (T - T_in - H) // stride + 1


def make_windows(ds: TimeSeriesDataset, T_in: int, H: int, stride: int = 1) -> list[WindowSample]:
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if ds.T < T_in + H:
        raise DataError(f"{ds.name}: {ds.T} rows, need at least T_in + H = {T_in + H}")
    v = ds.values
    return [
        WindowSample(v[o : o + T_in], v[o + T_in : o + T_in + H], o)
        for o in range(0, ds.T - T_in - H + 1, stride)
    ]


def window_arrays(ds: TimeSeriesDataset, T_in: int, H: int, stride: int = 1):
    """Stacked ``(inputs, targets, origins)`` arrays, same order as :func:`make_windows`."""
    samples = make_windows(ds, T_in, H, stride)
    x = np.stack([s.input for s in samples])
    y = np.stack([s.target for s in samples])
    return x, y, np.array([s.origin_index for s in samples])


def revin_normalize(x: np.ndarray, eps: float = REVIN_EPS):
    """Per-window, per-channel standardisation along the time axis (axis -2)."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=-2, keepdims=True)
    raw_std = x.std(axis=-2, keepdims=True)
    std = np.maximum(raw_std, eps)
    # a (numerically) constant channel maps to exact zeros instead of amplified round-off
    z = np.where(raw_std > eps, (x - mean) / std, 0.0)
    return z, RevinState(mean, std)


def revin_denormalize(y, state: RevinState):
    """Inverse of :func:`revin_normalize`; works on arrays and autograd tensors."""
    return y * state.std + state.mean


def subsample_fraction(train_ds: TimeSeriesDataset, fraction: float, min_length: int | None = None) -> TimeSeriesDataset:
    """Keep the first ``ceil(fraction * T)`` rows (chronological prefix)."""
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    n = int(math.ceil(round(fraction * train_ds.T, 9)))
    if min_length is not None and n < min_length:
        raise DataError(
            f"{fraction:.0%} of {train_ds.T} training rows is {n} rows, fewer than the {min_length} one window needs"
        )
    return train_ds.slice_rows(0, n, f":frac{fraction:g}")


@dataclass(frozen=True)
class SynthSpec:
    """Sum of sinusoids plus linear trend plus Gaussian noise."""

    length: int = 4000
    channels: int = 2
    components: tuple[tuple[float, float], ...] = ((24.0, 1.0), (168.0, 1.0))
    trend_slope: float = 0.0
    level: float = 0.0
    noise_std: float = 0.1
    channel_phase: float = 0.7
    seed: int = 0
    frequency: str = "hourly"
    name: str = "synth"
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "channels": self.channels,
            "components": [list(c) for c in self.components],
            "trend_slope": self.trend_slope,
            "level": self.level,
            "noise_std": self.noise_std,
            "channel_phase": self.channel_phase,
            "seed": self.seed,
            "frequency": self.frequency,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["components"] = tuple(tuple(float(v) for v in c) for c in d.get("components", cls.components))
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__ and k != "extra"})


def generate_synthetic(spec: SynthSpec) -> TimeSeriesDataset:
    """Channel ``c`` of component ``(period, amp)`` is ``amp * sin(2 pi t / period + c * channel_phase)``."""
    if spec.length < 1 or spec.channels < 1:
        raise DataError("synthetic series needs positive length and channel count")
    t = np.arange(spec.length, dtype=np.float64)[:, None]
    c = np.arange(spec.channels, dtype=np.float64)[None, :]
    values = np.zeros((spec.length, spec.channels))
    for period, amp in spec.components:
        values += amp * np.sin(2.0 * np.pi * t / period + c * spec.channel_phase)
    values += spec.trend_slope * t + spec.level
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        values += rng.normal(0.0, spec.noise_std, size=values.shape)
    names = tuple(f"ch{j}" for j in range(spec.channels))
    return TimeSeriesDataset(values, names, spec.frequency, spec.name)


def inject_mask(x: np.ndarray, rate: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Replace a random ``rate`` fraction of cells by their window-channel mean; returns ``(masked, mask)``."""
    if not 0.0 <= rate < 1.0:
        raise DataError(f"mask rate must lie in [0, 1), got {rate}")
    x = np.array(x, dtype=np.float64)
    mask = rng.random(x.shape) < rate
    fill = np.broadcast_to(x.mean(axis=-2, keepdims=True), x.shape)
    x[mask] = fill[mask]
    return x, mask


def write_csv(ds: TimeSeriesDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.column_names))
        for row in ds.values:
            w.writerow([repr(float(v)) for v in row])
