"""Delay-coordinate decomposition of scalar signals.

A scalar record is arranged into a delay-embedding matrix whose column j
stacks the sample at time t_j on top of its ``m - 1`` predecessors spaced
``lag`` samples apart.  The singular value decomposition of that matrix
yields delay-shape modes (left vectors), an energy spectrum, and
time-evolving delay coordinates (right vectors).  A forced linear model
on the leading coordinates — with the last retained coordinate treated as
an input — captures intermittently forced dynamics, and hard-threshold
rank selection separates coherent content from the noise floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from .sindy import NumericsError, _jsonable
from .timeseries import StateMatrix, TimeSeries, _derivative_array

__all__ = [
    "DelayEmbedding",
    "DelaySvd",
    "HavokModel",
    "hankel",
    "svd_embedding",
    "hard_threshold_rank",
    "scale_gap_rank",
    "fit_linear_forced",
    "forcing",
    "reconstruct",
    "HavokDecomposition",
]

#: R-squared below which a coordinate's derivative fit is flagged as noisy.
LOW_R2 = 0.5


@dataclass(frozen=True)
class DelayEmbedding:
    """Delay matrix: ``entries[i, j] = x[(m - 1 - i)*lag + j]`` per segment.

    Row 0 is the newest sample of each window and successive rows step
    back in time, so entries are constant along ``j - i`` diagonals when
    ``lag == 1``.  ``segments`` records the number of columns contributed
    by each source series (several when fitting burst sets), and
    ``seg_t0`` the time of each segment's first column.
    """

    entries: np.ndarray
    dt: float
    lag: int
    segments: tuple
    seg_t0: tuple

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]


def hankel(x: Union[TimeSeries, Sequence[TimeSeries]], delays: int, lag: int = 1) -> DelayEmbedding:
    """Build the delay-embedding matrix of one series or a burst list."""
    if delays < 2:
        raise ValueError(f"delays must be at least 2, got {delays}")
    if lag < 1:
        raise ValueError(f"lag must be at least 1, got {lag}")
    series = [x] if isinstance(x, TimeSeries) else list(x)
    if not series:
        raise ValueError("no input series")
    dts = {s.dt for s in series}
    if len(dts) > 1:
        raise ValueError(f"segments have mixed sample intervals: {sorted(dts)}")
    dt = series[0].dt

    blocks = []
    seg_t0 = []
    for s in series:
        n = len(s)
        k = n - (delays - 1) * lag
        if k < 1:
            raise ValueError(f"series of length {n} is too short for {delays} delays at lag {lag}")
        block = np.empty((delays, k))
        for i in range(delays):
            off = (delays - 1 - i) * lag
            block[i] = s.values[off : off + k]
        blocks.append(block)
        seg_t0.append(s.t0 + (delays - 1) * lag * dt)
    entries = np.hstack(blocks)
    return DelayEmbedding(
        entries=entries,
        dt=dt,
        lag=lag,
        segments=tuple(b.shape[1] for b in blocks),
        seg_t0=tuple(seg_t0),
    )


@dataclass(frozen=True)
class DelaySvd:
    """Thin SVD of a delay embedding with a fixed sign convention.

    ``modes`` holds the delay-shape (left) vectors, ``coords`` the
    time-evolving (right) vectors as columns; the entry of largest
    magnitude in each mode is made positive (ties broken by lowest row
    index) so results are reproducible across runs.
    """

    modes: np.ndarray
    sigma: np.ndarray
    coords: np.ndarray
    dt: float
    lag: int
    segments: tuple
    seg_t0: tuple

    @property
    def m(self) -> int:
        return self.modes.shape[0]

    @property
    def k(self) -> int:
        return self.coords.shape[0]


def svd_embedding(h: DelayEmbedding) -> DelaySvd:
    """Thin SVD of the embedding with deterministic mode signs."""
    modes, sigma, vt = np.linalg.svd(h.entries, full_matrices=False)
    coords = vt.T
    for j in range(modes.shape[1]):
        i_max = int(np.argmax(np.abs(modes[:, j])))
        if modes[i_max, j] < 0.0:
            modes[:, j] = -modes[:, j]
            coords[:, j] = -coords[:, j]
    return DelaySvd(
        modes=modes,
        sigma=sigma,
        coords=coords,
        dt=h.dt,
        lag=h.lag,
        segments=h.segments,
        seg_t0=h.seg_t0,
    )


def hard_threshold_rank(sigma: np.ndarray, m: int, k: int, min_rank: int = 2) -> int:
    """Optimal hard-threshold rank for a noisy ``m x k`` matrix.

    Uses the aspect-ratio-corrected coefficient
    ``w(b) = 0.56 b^3 - 0.95 b^2 + 1.82 b + 1.43`` with ``b = min(m, k) /
    max(m, k)`` and the median singular value as the (unknown) noise
    scale: values above ``w(b) * median(sigma)`` are retained.  The result
    is scale-invariant and clamped to at least ``min_rank`` so downstream
    forced-linear fits always have one state and one forcing coordinate.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.size == 0:
        raise ValueError("sigma must be a non-empty vector")
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 0):
        raise ValueError("sigma must be non-negative and non-increasing")
    if not np.any(sigma > 0):
        raise NumericsError("all singular values are zero")
    if m < 1 or k < 1:
        raise ValueError(f"invalid shape ({m}, {k})")
    beta = min(m, k) / max(m, k)
    omega = 0.56 * beta**3 - 0.95 * beta**2 + 1.82 * beta + 1.43
    tau = omega * float(np.median(sigma))
    r = int(np.count_nonzero(sigma > tau))
    return max(r, min_rank)


def scale_gap_rank(sigma: np.ndarray, r_max: int, gap_ratio: float = 4.0) -> int:
    """Cut the retained spectrum at the first large gap.

    Scans ``sigma[i-1] / sigma[i]`` for ``i in [2, r_max)`` and returns the
    first ``i`` whose gap is at least ``gap_ratio``; if no such gap exists
    all ``r_max`` values belong to one scale and ``r_max`` is returned.
    Never splits below 2 so an oscillatory pair stays together.
    """
    sigma = np.asarray(sigma, dtype=float)
    r_max = min(r_max, sigma.size)
    for i in range(2, r_max):
        if sigma[i] <= 0.0:
            return i
        if sigma[i - 1] / sigma[i] >= gap_ratio:
            return i
    return r_max


@dataclass
class HavokModel:
    """Forced linear model on delay coordinates.

    ``d/dt u[:r-1] = A @ u[:r-1] + B * u[r-1]`` with the last retained
    coordinate acting as the forcing input.  ``coords`` stores the raw
    (orthonormal) coordinate columns used in the regression; the physical
    amplitude of coordinate i is ``sigma[i] * coords[:, i]``.
    """

    A: np.ndarray
    B: np.ndarray
    r: int
    delays: int
    lag: int
    dt: float
    sigma: np.ndarray
    coords: np.ndarray
    r2: np.ndarray
    segments: tuple
    seg_t0: tuple
    noisy_fit: bool

    @property
    def mean_r2(self) -> float:
        return float(np.mean(self.r2))

    def coords_matrix(self) -> StateMatrix:
        labels = tuple(f"u{i + 1}" for i in range(self.r))
        return StateMatrix(self.seg_t0[0], self.dt, self.coords, labels=labels)

    def to_dict(self) -> dict:
        return {
            "kind": "delay-forced-linear-model",
            "delays": self.delays,
            "lag": self.lag,
            "rank": self.r,
            "dt": self.dt,
            "A_row_major": [[float(v) for v in row] for row in self.A],
            "B": [float(v) for v in self.B.ravel()],
            "singular_values": [float(v) for v in self.sigma],
            "r2_per_coordinate": [float(v) for v in self.r2],
            "noisy_fit": bool(self.noisy_fit),
            "conventions": (
                "coordinates are right singular vectors of the delay matrix "
                "(columns evolve in time, newest sample in row 0); forcing is "
                "the last retained coordinate, scaled by its singular value "
                "when exported"
            ),
        }


def fit_linear_forced(svd: DelaySvd, r: int, dt: Optional[float] = None) -> HavokModel:
    """Least-squares forced linear dynamics on the first ``r`` coordinates.

    Coordinate derivatives use the same second-order stencil as
    :func:`gridid.timeseries.differentiate`, computed per segment.
    Returns the model with per-coordinate R-squared of the fit; a mean
    below 0.5 sets ``noisy_fit`` (white-noise inputs land there).
    """
    q = svd.sigma.size
    if not 2 <= r <= q:
        raise ValueError(f"rank must be between 2 and {q}, got {r}")
    dt = svd.dt if dt is None else dt
    u = svd.coords[:, :r]

    du_parts = []
    offset = 0
    for k_s in svd.segments:
        seg = u[offset : offset + k_s, : r - 1]
        du_parts.append(_derivative_array(seg, dt * svd.lag))
        offset += k_s
    du = np.vstack(du_parts)

    design = u  # first r-1 columns are states, column r-1 is the forcing
    sol, _, _, _ = np.linalg.lstsq(design, du, rcond=None)
    A = sol[: r - 1].T
    B = sol[r - 1 : r].T

    resid = du - design @ sol
    ss_res = np.sum(resid**2, axis=0)
    ss_tot = np.sum((du - du.mean(axis=0)) ** 2, axis=0)
    ss_tot[ss_tot == 0.0] = np.inf
    r2 = 1.0 - ss_res / ss_tot

    return HavokModel(
        A=A,
        B=B,
        r=r,
        delays=svd.m,
        lag=svd.lag,
        dt=dt,
        sigma=svd.sigma.copy(),
        coords=u.copy(),
        r2=r2,
        segments=svd.segments,
        seg_t0=svd.seg_t0,
        noisy_fit=bool(np.mean(r2) < LOW_R2),
    )


def forcing(model: HavokModel) -> TimeSeries:
    """The forcing coordinate as a time series, scaled by its singular value.

    Scaling by ``sigma[r-1]`` makes the amplitude comparable to the
    signal content the coordinate carries: for a signal whose dynamics
    are purely linear in delay space the forcing is numerically zero
    relative to the leading coordinate.
    """
    if len(model.segments) != 1:
        raise ValueError("forcing of a multi-segment fit is ambiguous; fit a single record")
    vals = model.sigma[model.r - 1] * model.coords[:, model.r - 1]
    return TimeSeries(model.seg_t0[0], model.dt, vals, label=f"u{model.r}")


def _dehankel(block: np.ndarray, lag: int) -> np.ndarray:
    """Average all delay-matrix entries that map to the same time sample."""
    m, k = block.shape
    n = (m - 1) * lag + k
    acc = np.zeros(n)
    cnt = np.zeros(n)
    for i in range(m):
        off = (m - 1 - i) * lag
        acc[off : off + k] += block[i]
        cnt[off : off + k] += 1.0
    return acc / cnt


def reconstruct(svd: DelaySvd, r: int):
    """Rank-``r`` reconstruction of the embedded record(s).

    Recombines the leading ``r`` singular triplets and averages entries
    that map to the same time sample, recovering a full-length series per
    segment.  Returns one :class:`TimeSeries`, or a list when the
    embedding was built from several bursts.
    """
    q = svd.sigma.size
    if not 1 <= r <= q:
        raise ValueError(f"rank must be between 1 and {q}, got {r}")
    low_rank = (svd.modes[:, :r] * svd.sigma[:r]) @ svd.coords[:, :r].T
    out = []
    offset = 0
    for k_s, t0c in zip(svd.segments, svd.seg_t0):
        block = low_rank[:, offset : offset + k_s]
        vals = _dehankel(block, svd.lag)
        t0 = t0c - (svd.m - 1) * svd.lag * svd.dt
        out.append(TimeSeries(t0, svd.dt, vals, label="reconstruction"))
        offset += k_s
    return out[0] if len(out) == 1 else out


class HavokDecomposition(BaseEstimator):
    """Delay-embedding decomposition with a forced linear coordinate model.

    Parameters
    ----------
    delays : int
        Number of stacked delays (rows of the embedding).
    lag : int
        Spacing between delays, in samples.
    rank : int or None
        Retained rank; ``None`` selects it by the hard threshold.
    min_rank : int
        Lower clamp for the selected rank.

    After ``fit`` the estimator exposes ``singular_values_``, ``rank_``,
    ``A_``, ``B_``, ``coords_``, ``r2_`` and the fitted ``model_``.
    """

    def __init__(self, delays=100, lag=1, rank=None, min_rank=2):
        self.delays = delays
        self.lag = lag
        self.rank = rank
        self.min_rank = min_rank

    def fit(self, x: Union[TimeSeries, Sequence[TimeSeries]], y=None):
        emb = hankel(x, self.delays, self.lag)
        svd = svd_embedding(emb)
        if self.rank is None:
            r = hard_threshold_rank(svd.sigma, emb.m, emb.k, min_rank=self.min_rank)
        else:
            r = int(self.rank)
        r = min(r, svd.sigma.size)
        model = fit_linear_forced(svd, r)
        self.svd_ = svd
        self.singular_values_ = svd.sigma
        self.rank_ = r
        self.model_ = model
        self.A_ = model.A
        self.B_ = model.B
        self.coords_ = model.coords
        self.r2_ = model.r2
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this decomposition has not been fit yet")

    def forcing(self) -> TimeSeries:
        self._check_fitted()
        return forcing(self.model_)

    def reconstruct(self, rank: Optional[int] = None):
        self._check_fitted()
        return reconstruct(self.svd_, self.rank_ if rank is None else rank)

    def to_dict(self) -> dict:
        self._check_fitted()
        return _jsonable(self.model_.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
