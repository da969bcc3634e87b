"""Uniformly sampled time-series containers and sampling utilities.

Everything downstream (library building, sparse regression, delay
embeddings, the scenario simulator) works on the two containers defined
here: a scalar :class:`TimeSeries` and a multi-channel
:class:`StateMatrix`.  Both assume a strictly uniform time grid, which is
what makes the finite-difference and Hankel operations exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

__all__ = [
    "TimeSeries",
    "StateMatrix",
    "DerivativeMatrix",
    "BurstSet",
    "TimeGridError",
    "CsvFormatError",
    "load_csv",
    "save_csv",
    "differentiate",
    "window",
    "decimate",
    "burst_sample",
]

# Relative tolerance (in units of the step) used when snapping window edges
# and burst starts onto the sample grid.
_GRID_RTOL = 1e-9


class TimeGridError(ValueError):
    """Raised when a time axis is not a uniform, strictly increasing grid."""


class CsvFormatError(ValueError):
    """Raised when a CSV file cannot be parsed into a series."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeSeries:
    """Scalar signal on a uniform grid ``t0 + k*dt``.

    Parameters
    ----------
    t0 : float
        Time of the first sample, seconds.
    dt : float
        Sample interval, seconds.  Must be strictly positive.
    values : ndarray
        Sample values, one per grid point.
    label : str
        Channel name, used for CSV headers and derived state names.
    """

    t0: float
    dt: float
    values: np.ndarray
    label: str = "v"

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise TimeGridError(f"dt must be strictly positive, got {self.dt}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError(f"values must be one-dimensional, got shape {vals.shape}")
        object.__setattr__(self, "values", _as_readonly(vals))

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def duration(self) -> float:
        """Extent of the covered interval, ``n * dt``."""
        return self.values.size * self.dt

    @property
    def t_end(self) -> float:
        """Exclusive end of the series, ``t0 + n*dt``."""
        return self.t0 + self.values.size * self.dt


@dataclass(frozen=True)
class StateMatrix:
    """Multi-channel signal; row k holds all states at time ``t0 + k*dt``."""

    t0: float
    dt: float
    values: np.ndarray
    labels: tuple = ()

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise TimeGridError(f"dt must be strictly positive, got {self.dt}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"values must be two-dimensional, got shape {vals.shape}")
        labels = tuple(self.labels) if self.labels else tuple(f"x{i + 1}" for i in range(vals.shape[1]))
        if len(labels) != vals.shape[1]:
            raise ValueError(f"{len(labels)} labels for {vals.shape[1]} state columns")
        object.__setattr__(self, "values", _as_readonly(vals))
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_states(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.shape[0])

    def column(self, j: int) -> TimeSeries:
        return TimeSeries(self.t0, self.dt, self.values[:, j], label=self.labels[j])


#: A matrix of per-state time derivatives.  Same layout as the states it
#: was derived from, so it shares the container type.
DerivativeMatrix = StateMatrix


@dataclass(frozen=True)
class BurstSet:
    """Regularly spaced bursts cut from one parent series."""

    bursts: tuple
    burst_len: int
    period: float

    def __post_init__(self) -> None:
        if len(self.bursts) < 1:
            raise ValueError("burst set is empty")

    def __len__(self) -> int:
        return len(self.bursts)

    @property
    def total_samples(self) -> int:
        return self.burst_len * len(self.bursts)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _derivative_array(values: np.ndarray, dt: float) -> np.ndarray:
    """Second-order derivative estimate along axis 0.

    Central differences in the interior, one-sided three-point stencils at
    both ends.  Exact for polynomials up to degree two.
    """
    n = values.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 samples to differentiate, got {n}")
    out = np.empty_like(values, dtype=float)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return out


def differentiate(x: Union[TimeSeries, StateMatrix]) -> Union[TimeSeries, StateMatrix]:
    """Numerical time derivative on the same grid as the input.

    Uses second-order central differences with one-sided second-order
    stencils at the endpoints, so affine signals differentiate exactly and
    smooth signals converge at O(dt^2).
    """
    if isinstance(x, TimeSeries):
        d = _derivative_array(x.values, x.dt)
        return TimeSeries(x.t0, x.dt, d, label=f"d{x.label}")
    if isinstance(x, StateMatrix):
        d = _derivative_array(x.values, x.dt)
        return StateMatrix(x.t0, x.dt, d, labels=tuple(f"d{s}" for s in x.labels))
    raise TypeError(f"cannot differentiate {type(x).__name__}")


# ---------------------------------------------------------------------------
# windowing and burst sampling
# ---------------------------------------------------------------------------


def window(x: Union[TimeSeries, StateMatrix], t_start: float, t_end: float):
    """Contiguous sub-series covering ``[t_start, t_end)``.

    The result keeps the parent grid: it starts at the first sample at or
    after ``t_start`` and contains ``floor((t_end - t_start) / dt)``
    samples.  A full-range window returns a copy of the input.
    """
    if not t_start < t_end:
        raise ValueError(f"empty window: t_start={t_start} must be < t_end={t_end}")
    n = len(x)
    series_end = x.t0 + n * x.dt
    eps = _GRID_RTOL * max(1.0, abs(t_start) / x.dt, abs(t_end) / x.dt)
    if t_start < x.t0 - eps * x.dt:
        raise ValueError(f"t_start={t_start} precedes series start {x.t0}")
    if t_end > series_end + eps * x.dt:
        raise ValueError(f"t_end={t_end} exceeds series end {series_end}")
    i0 = max(0, math.ceil((t_start - x.t0) / x.dt - eps))
    count = math.floor((t_end - t_start) / x.dt + eps)
    count = min(count, n - i0)
    if count < 1:
        raise ValueError(f"window [{t_start}, {t_end}) contains no samples")
    new_t0 = x.t0 + i0 * x.dt
    if isinstance(x, TimeSeries):
        return TimeSeries(new_t0, x.dt, x.values[i0 : i0 + count], label=x.label)
    return StateMatrix(new_t0, x.dt, x.values[i0 : i0 + count], labels=x.labels)


def decimate(x: Union[TimeSeries, StateMatrix], stride: int, mode: str = "subsample"):
    """Reduce the sample rate by ``stride``.

    ``mode="subsample"`` keeps every ``stride``-th sample.  ``mode="mean"``
    averages non-overlapping blocks of ``stride`` samples instead, which
    attenuates noise (and acts as a crude anti-alias filter) at the cost
    of slight high-frequency droop; the grid origin shifts to the block
    centers.
    """
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    stride = int(stride)
    if mode == "subsample":
        if isinstance(x, TimeSeries):
            return TimeSeries(x.t0, x.dt * stride, x.values[::stride], label=x.label)
        return StateMatrix(x.t0, x.dt * stride, x.values[::stride], labels=x.labels)
    if mode != "mean":
        raise ValueError(f"mode must be 'subsample' or 'mean', got {mode!r}")
    n_out = len(x) // stride
    if n_out < 1:
        raise ValueError(f"series too short to decimate by {stride}")
    t0 = x.t0 + 0.5 * (stride - 1) * x.dt
    if isinstance(x, TimeSeries):
        vals = x.values[: n_out * stride].reshape(n_out, stride).mean(axis=1)
        return TimeSeries(t0, x.dt * stride, vals, label=x.label)
    vals = x.values[: n_out * stride].reshape(n_out, stride, x.values.shape[1]).mean(axis=1)
    return StateMatrix(t0, x.dt * stride, vals, labels=x.labels)


def burst_sample(x: TimeSeries, burst_len: int, period: float) -> BurstSet:
    """Cut periodic bursts of ``burst_len`` samples starting every ``period`` seconds.

    Bursts start at ``t0, t0 + period, ...``; a final burst that would run
    past the end of the series is discarded, so every burst in the result
    has exactly ``burst_len`` samples.
    """
    if burst_len < 3:
        raise ValueError(f"burst_len must be at least 3, got {burst_len}")
    if period < burst_len * x.dt * (1.0 - _GRID_RTOL):
        raise ValueError(
            f"period {period} s is shorter than a burst ({burst_len} samples x dt={x.dt} s); bursts would overlap"
        )
    n = len(x)
    bursts = []
    k = 0
    while True:
        i0 = math.ceil(k * period / x.dt - _GRID_RTOL * (k + 1))
        if i0 + burst_len > n:
            break
        bursts.append(TimeSeries(x.t0 + i0 * x.dt, x.dt, x.values[i0 : i0 + burst_len], label=x.label))
        k += 1
    if not bursts:
        raise ValueError("series is shorter than a single burst")
    return BurstSet(tuple(bursts), burst_len, period)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def _parse_cell(cell: str, row: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CsvFormatError(f"non-numeric value {cell!r} at row {row}, column {col + 1}") from None


def load_csv(path) -> Union[TimeSeries, StateMatrix]:
    """Read ``time,value[,value...]`` rows into a series.

    The first column is the time axis and must be a uniform grid (relative
    step tolerance 1e-9).  A non-numeric first row is treated as a header
    and its cells become channel labels.  Two columns produce a
    :class:`TimeSeries`, three or more a :class:`StateMatrix`.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")

    header = None
    try:
        float(rows[0][0])
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]

    if len(rows) < 2:
        raise CsvFormatError(f"{path}: need at least 2 data rows, found {len(rows)}")
    width = len(rows[0])
    if width < 2:
        raise CsvFormatError(f"{path}: need a time column plus at least one value column")

    data = np.empty((len(rows), width), dtype=float)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(f"{path}: row {i + 1} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            data[i, j] = _parse_cell(cell.strip(), i + 1, j)

    t = data[:, 0]
    steps = np.diff(t)
    dt = float(np.median(steps))
    if dt <= 0:
        raise TimeGridError(f"{path}: time column is not strictly increasing")
    bad = np.nonzero(np.abs(steps - dt) > _GRID_RTOL * dt * np.maximum(1.0, np.abs(t[1:]) / dt))[0]
    if bad.size:
        raise TimeGridError(f"{path}: non-uniform grid at row {bad[0] + 2}")

    labels = header[1:] if header else None
    if width == 2:
        return TimeSeries(float(t[0]), dt, data[:, 1], label=(labels[0] if labels else "v"))
    return StateMatrix(float(t[0]), dt, data[:, 1:], labels=tuple(labels) if labels else ())


def save_csv(x: Union[TimeSeries, StateMatrix], path) -> None:
    """Write a series as ``time,value[,value...]`` with 17 significant digits."""
    path = Path(path)
    if isinstance(x, TimeSeries):
        labels = [x.label]
        cols = x.values[:, None]
    elif isinstance(x, StateMatrix):
        labels = list(x.labels)
        cols = x.values
    else:
        raise TypeError(f"cannot write {type(x).__name__}")
    times = x.times
    with path.open("w", newline="\n") as fh:
        fh.write("time," + ",".join(labels) + "\n")
        for i in range(cols.shape[0]):
            fh.write(f"{times[i]:.17g}," + ",".join(f"{v:.17g}" for v in cols[i]) + "\n")
