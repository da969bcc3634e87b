"""Sparse regression of dynamics from data.

Implements the two solvers (sequentially thresholded least squares and
proximal-gradient L1), a scikit-learn style estimator that wires
differentiation, library building and solving together, fixed-step RK4
simulation of identified models, and range-normalized error reporting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator

from .library import FunctionLibrary
from .timeseries import StateMatrix, TimeSeries, differentiate

__all__ = [
    "stlsq",
    "lasso_ista",
    "SindyRegressor",
    "identify",
    "lift_scalar",
    "reconstruct_chunked",
    "nrmse",
    "ErrorReport",
    "error_report",
    "NumericsError",
]


class NumericsError(RuntimeError):
    """Raised when a numeric routine cannot produce a meaningful result."""


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def _column_norms(theta: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(theta, axis=0)
    norms[norms == 0.0] = 1.0
    return norms


def stlsq(theta: np.ndarray, targets: np.ndarray, lam: float, max_iter: int = 20, tol: float = 0.0):
    """Sequentially thresholded least squares, solved per target column.

    Each iteration solves least squares on the active columns and then
    zeroes every coefficient with ``|xi| < lam``; the active set can only
    shrink.  Columns are rescaled to unit L2 norm for conditioning before
    the solve and coefficients are mapped back to raw scale, so the
    threshold applies to coefficients in the units of the original data.

    Returns
    -------
    xi : ndarray, shape (n_terms, n_targets)
    diagnostics : list of dict, one per target column with keys
        ``iterations``, ``active_counts``, ``rank_deficient``,
        ``zero_support`` and ``converged``.
    """
    theta = np.asarray(theta, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[0] == 1 and theta.shape[0] != 1:
        targets = targets.T
    if theta.shape[0] != targets.shape[0]:
        raise ValueError(f"theta has {theta.shape[0]} rows, targets {targets.shape[0]}")
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")

    p = theta.shape[1]
    norms = _column_norms(theta)
    theta_n = theta / norms

    xi = np.zeros((p, targets.shape[1]))
    diagnostics = []
    for j in range(targets.shape[1]):
        y = targets[:, j]
        active = np.ones(p, dtype=bool)
        coef = np.zeros(p)
        rank_deficient = False
        active_counts = []
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            sol, _, rank, _ = np.linalg.lstsq(theta_n[:, idx], y, rcond=None)
            if rank < idx.size:
                rank_deficient = True
            new_coef = np.zeros(p)
            new_coef[idx] = sol / norms[idx]
            small = np.abs(new_coef) < lam
            new_active = active & ~small
            changed = not np.array_equal(new_active, active)
            delta = np.max(np.abs(new_coef - coef)) if n_iter > 1 else np.inf
            coef = np.where(new_active, new_coef, 0.0)
            active = new_active
            active_counts.append(int(active.sum()))
            if not changed and delta <= max(tol, 0.0):
                break
        zero_support = not active.any()
        xi[:, j] = coef
        diagnostics.append(
            {
                "iterations": n_iter,
                "active_counts": active_counts,
                "rank_deficient": rank_deficient,
                "zero_support": zero_support,
                "converged": True,
            }
        )
    return xi, diagnostics


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_ista(
    theta: np.ndarray,
    targets: np.ndarray,
    lam: float,
    max_iter: int = 5000,
    tol: float = 1e-10,
    debias: bool = False,
):
    """L1-penalized regression by proximal gradient (ISTA).

    Minimizes ``0.5*||y - theta_n @ xi||^2 + lam*||xi||_1`` per target
    column with step ``1/L``, where ``theta_n`` has unit-L2 columns and
    ``L`` is the largest squared singular value of ``theta_n``.  The
    penalized objective is non-increasing across iterations.  Output
    coefficients are de-normalized back to the raw column scale.  With
    ``debias=True`` the support selected by the L1 solve is refit by
    plain least squares.

    Returns ``(xi, diagnostics)`` where each per-column diagnostics dict
    carries ``objective`` (history), ``iterations`` and ``converged``.
    """
    theta = np.asarray(theta, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[0] == 1 and theta.shape[0] != 1:
        targets = targets.T
    if theta.shape[0] != targets.shape[0]:
        raise ValueError(f"theta has {theta.shape[0]} rows, targets {targets.shape[0]}")
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")

    p = theta.shape[1]
    norms = _column_norms(theta)
    theta_n = theta / norms
    sigma_max = np.linalg.svd(theta_n, compute_uv=False)[0]
    if sigma_max == 0.0:
        raise NumericsError("library matrix is identically zero")
    step = 1.0 / sigma_max**2

    xi = np.zeros((p, targets.shape[1]))
    diagnostics = []
    for j in range(targets.shape[1]):
        y = targets[:, j]
        coef = np.zeros(p)
        objective = []
        converged = False
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            resid = y - theta_n @ coef
            objective.append(0.5 * float(resid @ resid) + lam * float(np.abs(coef).sum()))
            new_coef = _soft_threshold(coef + step * (theta_n.T @ resid), step * lam)
            delta = np.max(np.abs(new_coef - coef))
            coef = new_coef
            if delta <= tol:
                converged = True
                break
        resid = y - theta_n @ coef
        objective.append(0.5 * float(resid @ resid) + lam * float(np.abs(coef).sum()))

        raw = coef / norms
        if debias:
            support = np.nonzero(coef)[0]
            if support.size:
                sol, _, _, _ = np.linalg.lstsq(theta[:, support], y, rcond=None)
                raw = np.zeros(p)
                raw[support] = sol
        xi[:, j] = raw
        diagnostics.append({"iterations": n_iter, "converged": converged, "objective": objective})
    return xi, diagnostics


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


def _as_state_matrices(X, dt: Optional[float]) -> list:
    if isinstance(X, StateMatrix):
        return [X]
    if isinstance(X, TimeSeries):
        return [StateMatrix(X.t0, X.dt, X.values[:, None], labels=(X.label,))]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], (StateMatrix, TimeSeries)):
        return [m for part in X for m in _as_state_matrices(part, dt)]
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if dt is None:
        raise ValueError("dt is required when fitting from a bare array")
    return [StateMatrix(0.0, dt, arr)]


class SindyRegressor(BaseEstimator):
    """Sparse dynamics regression: ``d/dt x = Theta(x) @ Xi``.

    Accepts a :class:`StateMatrix` (or a list of them, e.g. bursts), computes
    per-segment time derivatives unless they are supplied, builds the
    candidate library and solves for a sparse coefficient matrix.

    Parameters
    ----------
    library : FunctionLibrary or None
        Candidate-term builder; the default is a cubic polynomial library.
    method : {"stlsq", "ista-l1"}
    lam : float
        Threshold (stlsq) or L1 weight (ista-l1).
    max_iter, tol : solver controls.
    debias : bool
        Refit the selected support by least squares (ista-l1 only).

    Attributes (after fit)
    ----------------------
    coef_ : ndarray (n_terms, n_states); feature_names_ ; state_names_ ;
    diagnostics_ : per-state solver dicts; dt_ : sample interval.
    """

    _METHODS = ("stlsq", "ista-l1")

    def __init__(self, library=None, method="stlsq", lam=0.1, max_iter=20, tol=1e-12, debias=True):
        self.library = library
        self.method = method
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol
        self.debias = debias

    def fit(self, X, x_dot=None, dt: Optional[float] = None):
        if self.method not in self._METHODS:
            raise ValueError(f"method must be one of {self._METHODS}, got {self.method!r}")
        segments = _as_state_matrices(X, dt)
        lib = self.library if self.library is not None else FunctionLibrary()
        lib = FunctionLibrary(**lib.get_params())

        dts = {seg.dt for seg in segments}
        if len(dts) > 1:
            raise ValueError(f"segments have mixed sample intervals: {sorted(dts)}")
        self.dt_ = segments[0].dt
        self.state_names_ = segments[0].labels

        states = np.vstack([seg.values for seg in segments])
        if x_dot is None:
            derivs = np.vstack([differentiate(seg).values for seg in segments])
        else:
            derivs = x_dot.values if isinstance(x_dot, StateMatrix) else np.asarray(x_dot, dtype=float)
            if derivs.shape != states.shape:
                raise ValueError(f"x_dot shape {derivs.shape} does not match states {states.shape}")

        lib.fit(states)
        theta = lib.transform(states)
        if self.method == "stlsq":
            xi, diag = stlsq(theta, derivs, self.lam, max_iter=self.max_iter, tol=self.tol)
        else:
            xi, diag = lasso_ista(
                theta, derivs, self.lam, max_iter=self.max_iter, tol=self.tol, debias=self.debias
            )

        self.library_ = lib
        self.coef_ = xi
        self.feature_names_ = tuple(lib.get_feature_names_out(self.state_names_))
        self.diagnostics_ = diag
        self.all_zero_ = bool(not np.any(xi))
        return self

    # -- prediction and simulation --------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise RuntimeError("this model has not been fit yet")

    def predict(self, X) -> np.ndarray:
        """Model right-hand side evaluated at the given states."""
        self._check_fitted()
        arr = X.values if isinstance(X, StateMatrix) else np.asarray(X, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        return self.library_.transform(arr) @ self.coef_

    def rhs(self, x: np.ndarray) -> np.ndarray:
        return self.predict(x[None, :])[0]

    def simulate(self, x0: Sequence[float], duration: float, dt: Optional[float] = None):
        """Fixed-step RK4 integration of the identified model.

        Returns ``(trajectory, info)``.  If the state leaves the finite
        range the trajectory is truncated and ``info`` carries
        ``blew_up=True`` and the failure time.
        """
        self._check_fitted()
        dt = self.dt_ if dt is None else dt
        x0 = np.asarray(x0, dtype=float)
        n_steps = int(round(duration / dt))
        out = np.empty((n_steps + 1, x0.size))
        out[0] = x0
        info = {"blew_up": False, "t_fail": None}
        x = x0
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(n_steps):
                k1 = self.rhs(x)
                k2 = self.rhs(x + 0.5 * dt * k1)
                k3 = self.rhs(x + 0.5 * dt * k2)
                k4 = self.rhs(x + dt * k3)
                x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if not np.all(np.isfinite(x)):
                    info["blew_up"] = True
                    info["t_fail"] = (k + 1) * dt
                    out = out[: k + 1]
                    break
                out[k + 1] = x
        return StateMatrix(0.0, dt, out, labels=self.state_names_), info

    def equations(self) -> list:
        """Readable per-state model strings, zero terms omitted."""
        self._check_fitted()
        lines = []
        for j, state in enumerate(self.state_names_):
            terms = [
                f"{c:+.6g}*{name}" if name != "1" else f"{c:+.6g}"
                for c, name in zip(self.coef_[:, j], self.feature_names_)
                if c != 0.0
            ]
            lines.append(f"d{state}/dt = " + (" ".join(terms) if terms else "0"))
        return lines

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        lib = self.library_
        return {
            "kind": "sparse-dynamics-model",
            "library": {
                "poly_order": lib.poly_order,
                "include_trig": lib.include_trig,
                "trig_frequencies": list(lib.trig_frequencies),
                "include_constant": lib.include_constant,
            },
            "solver": {"method": self.method, "lambda": self.lam, "max_iter": self.max_iter, "tol": self.tol},
            "dt": self.dt_,
            "state_names": list(self.state_names_),
            "term_names": list(self.feature_names_),
            "coefficients": [[float(v) for v in row] for row in self.coef_],
            "diagnostics": _jsonable(self.diagnostics_),
            "all_zero": self.all_zero_,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "SindyRegressor":
        lib = FunctionLibrary(
            poly_order=doc["library"]["poly_order"],
            include_trig=doc["library"]["include_trig"],
            trig_frequencies=tuple(doc["library"]["trig_frequencies"]),
            include_constant=doc["library"]["include_constant"],
        )
        solver = doc["solver"]
        model = cls(library=lib, method=solver["method"], lam=solver["lambda"], max_iter=solver["max_iter"], tol=solver["tol"])
        n_states = len(doc["state_names"])
        lib.fit(np.zeros((2, n_states)))
        model.library_ = lib
        model.coef_ = np.asarray(doc["coefficients"], dtype=float)
        model.state_names_ = tuple(doc["state_names"])
        model.feature_names_ = tuple(doc["term_names"])
        model.diagnostics_ = doc.get("diagnostics", [])
        model.dt_ = doc["dt"]
        model.all_zero_ = bool(doc.get("all_zero", not np.any(model.coef_)))
        return model

    @classmethod
    def load(cls, path) -> "SindyRegressor":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def identify(
    X,
    library: Optional[FunctionLibrary] = None,
    method: str = "stlsq",
    lam: float = 0.1,
    max_iter: int = 20,
    tol: float = 1e-12,
    x_dot=None,
) -> SindyRegressor:
    """One-call pipeline: differentiate, build the library, solve."""
    model = SindyRegressor(library=library, method=method, lam=lam, max_iter=max_iter, tol=tol)
    return model.fit(X, x_dot=x_dot)


def lift_scalar(x: TimeSeries) -> StateMatrix:
    """Lift a scalar waveform to the ``(v, dv/dt)`` state plane.

    A measured voltage trace carries oscillatory dynamics that a
    first-order scalar model cannot represent; the standard lift to
    (value, derivative) coordinates makes second-order behaviour
    identifiable.
    """
    dx = differentiate(x)
    vals = np.column_stack([x.values, dx.values])
    return StateMatrix(x.t0, x.dt, vals, labels=(x.label, f"d{x.label}"))


def reconstruct_chunked(model: SindyRegressor, measured: StateMatrix, chunk: int):
    """Model-based reconstruction of a measured record, re-anchored per chunk.

    The record is split into ``chunk``-sample stretches; each stretch is
    simulated from its measured initial state.  This keeps the comparison
    focused on waveform fidelity instead of accumulated phase drift, and
    caps the damage of locally unstable fits (a chunk that blows up is
    padded with its last finite value).
    """
    if chunk < 2:
        raise ValueError(f"chunk must span at least 2 samples, got {chunk}")
    n = len(measured)
    out = np.empty_like(measured.values)
    start = 0
    while start < n - 1:
        stop = min(start + chunk, n - 1)
        steps = stop - start
        traj, info = model.simulate(measured.values[start], steps * measured.dt, dt=measured.dt)
        got = traj.values
        out[start : start + got.shape[0]] = got
        if got.shape[0] < steps + 1:
            out[start + got.shape[0] : stop + 1] = got[-1] if got.size else measured.values[start]
        start = stop
    return StateMatrix(measured.t0, measured.dt, out, labels=measured.labels)


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------


def nrmse(predicted, actual) -> float:
    """Range-normalized RMS error between two aligned series.

    ``sqrt(mean((p - a)^2)) / (max(a) - min(a))``.  For a flat actual
    signal the RMS of the actual is used as the scale instead; if that is
    zero as well the error is undefined.
    """
    if isinstance(predicted, TimeSeries) and isinstance(actual, TimeSeries):
        if len(predicted) != len(actual):
            raise ValueError(f"length mismatch: {len(predicted)} vs {len(actual)}")
        if not np.isclose(predicted.dt, actual.dt, rtol=1e-9):
            raise ValueError(f"sample interval mismatch: {predicted.dt} vs {actual.dt}")
        p, a = predicted.values, actual.values
    else:
        p = np.asarray(predicted, dtype=float).ravel()
        a = np.asarray(actual, dtype=float).ravel()
        if p.size != a.size:
            raise ValueError(f"length mismatch: {p.size} vs {a.size}")
    rms = float(np.sqrt(np.mean((p - a) ** 2)))
    span = float(a.max() - a.min())
    if span > 0.0:
        return rms / span
    scale = float(np.sqrt(np.mean(a**2)))
    if scale == 0.0:
        raise NumericsError("nrmse is undefined: actual signal is identically zero")
    return rms / scale


@dataclass
class ErrorReport:
    """Per-scenario nRMSE with ratios against a reference scenario."""

    reference: str
    errors: dict
    ratios: dict

    @property
    def base_error(self) -> float:
        return self.errors[self.reference]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="\n") as fh:
            fh.write("scenario,nrmse,ratio\n")
            for name in self.errors:
                fh.write(f"{name},{self.errors[name]:.17g},{self.ratios[name]:.17g}\n")


def error_report(runs, reference: str) -> ErrorReport:
    """Build an :class:`ErrorReport` from ``(name, predicted, actual)`` runs."""
    errors = {}
    for name, predicted, actual in runs:
        if name in errors:
            raise ValueError(f"duplicate scenario name {name!r}")
        errors[name] = nrmse(predicted, actual)
    if reference not in errors:
        raise ValueError(f"reference scenario {reference!r} not among runs {list(errors)}")
    base = errors[reference]
    if base == 0.0:
        raise NumericsError("reference error is exactly zero; ratios are undefined")
    ratios = {name: err / base for name, err in errors.items()}
    return ErrorReport(reference=reference, errors=errors, ratios=ratios)
