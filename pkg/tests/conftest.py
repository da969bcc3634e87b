"""Shared oracles and fixtures.

The chaotic-benchmark records (Lorenz) and the feeder waveforms are
expensive enough to build once per session; everything else is cheap and
constructed inline by the individual tests.
"""

import numpy as np
import pytest

from gridid import (
    Scenario,
    StateMatrix,
    TimeSeries,
    load_network,
    nrmse,
    simulate_scenario,
    window,
)

LORENZ_DT = 1e-3
LORENZ_N = 100_000
LORENZ_IC = (-8.0, 8.0, 27.0)


def lorenz_rhs(s, sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    x, y, z = s
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rk4(f, s0, dt, n):
    """Fixed-step RK4 trace of ds/dt = f(s): returns (n, len(s0)) states."""
    out = np.empty((n, len(s0)))
    s = np.asarray(s0, dtype=float)
    for i in range(n):
        out[i] = s
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def aligned_nrmse(rec, ref):
    """nRMSE of a reconstruction against the matching window of a reference.

    Reconstructions from delay models start (m-1)*lag samples into the
    record; this trims the reference to the reconstruction's time span.
    """
    lo = rec.t0
    hi = rec.t0 + (len(rec.values) - 0.5) * rec.dt
    ref_w = window(ref, lo, hi)
    n = min(len(ref_w.values), len(rec.values))
    return nrmse(rec.values[:n], ref_w.values[:n])


@pytest.fixture(scope="session")
def lorenz_states() -> StateMatrix:
    vals = rk4(lorenz_rhs, LORENZ_IC, LORENZ_DT, LORENZ_N)
    return StateMatrix(0.0, LORENZ_DT, vals, labels=("x", "y", "z"))


@pytest.fixture(scope="session")
def lorenz_x(lorenz_states) -> TimeSeries:
    return lorenz_states.column(0)


@pytest.fixture(scope="session")
def net():
    return load_network()


@pytest.fixture(scope="session")
def scenario_waves(net):
    """Seed-0 bus-2 waveform for each scenario kind."""
    return {
        kind: simulate_scenario(net, Scenario(kind=kind, seed=0), bus=2)
        for kind in ("SG", "IBR50", "IBR100")
    }
