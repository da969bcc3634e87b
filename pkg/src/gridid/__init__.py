"""Sparse system identification for power-grid voltage waveforms.

Building blocks:

* :mod:`gridid.timeseries` — uniform-grid series containers, CSV I/O,
  differentiation, windowing, decimation and burst sampling.
* :mod:`gridid.library` — polynomial/trigonometric candidate-function
  library (scikit-learn transformer).
* :mod:`gridid.sindy` — sparse regression (STLSQ and ISTA-L1), the
  :class:`SindyRegressor` estimator, simulation and error reporting.
* :mod:`gridid.havok` — Hankel delay embeddings, hard-threshold rank
  selection and forced linear delay-coordinate models.
* :mod:`gridid.mixed` — two-scale identification: spectral-gap scale
  split plus sparse regression on delay coordinates with replayed
  forcing.
* :mod:`gridid.gridsim` — 15-bus radial feeder, load flow and
  three-scenario waveform surrogate.
* :mod:`gridid.pipeline` / :mod:`gridid.cli` — the documented
  evaluation protocol and the command-line front end.
"""

from .havok import (
    DelayEmbedding,
    DelaySvd,
    HavokDecomposition,
    HavokModel,
    fit_linear_forced,
    forcing,
    hankel,
    hard_threshold_rank,
    reconstruct,
    scale_gap_rank,
    svd_embedding,
)
from .library import MAX_POLY_ORDER, FunctionLibrary
from .mixed import MixedIdentifier, ScaleSplit, decompose_scales, identify_mixed, predict_mixed
from .gridsim import (
    Bus,
    BusVoltages,
    Line,
    Network,
    Scenario,
    load_network,
    path_impedance,
    radial_load_flow,
    simulate_scenario,
)
from .sindy import (
    ErrorReport,
    NumericsError,
    SindyRegressor,
    error_report,
    identify,
    lasso_ista,
    lift_scalar,
    nrmse,
    reconstruct_chunked,
    stlsq,
)
from .timeseries import (
    BurstSet,
    CsvFormatError,
    StateMatrix,
    TimeGridError,
    TimeSeries,
    burst_sample,
    decimate,
    differentiate,
    load_csv,
    save_csv,
    window,
)

__version__ = "0.1.0"

__all__ = [
    "TimeSeries",
    "StateMatrix",
    "BurstSet",
    "TimeGridError",
    "CsvFormatError",
    "load_csv",
    "save_csv",
    "differentiate",
    "window",
    "decimate",
    "burst_sample",
    "FunctionLibrary",
    "MAX_POLY_ORDER",
    "SindyRegressor",
    "NumericsError",
    "ErrorReport",
    "error_report",
    "identify",
    "stlsq",
    "lasso_ista",
    "lift_scalar",
    "nrmse",
    "reconstruct_chunked",
    "DelayEmbedding",
    "DelaySvd",
    "HavokDecomposition",
    "HavokModel",
    "hankel",
    "svd_embedding",
    "hard_threshold_rank",
    "scale_gap_rank",
    "fit_linear_forced",
    "forcing",
    "reconstruct",
    "ScaleSplit",
    "MixedIdentifier",
    "decompose_scales",
    "identify_mixed",
    "predict_mixed",
    "Bus",
    "Line",
    "Network",
    "BusVoltages",
    "Scenario",
    "load_network",
    "radial_load_flow",
    "path_impedance",
    "simulate_scenario",
    "__version__",
]
