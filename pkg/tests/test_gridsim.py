"""Distribution feeder model, sweep load flow, and scenario waveforms.

Covers:
  - bundled network data: bus/line counts, totals, slack
  - radial load flow: convergence, frozen voltage profile, monotone
    drop towards the feeder end, zero-load identity, extra loads
  - topology validation: loops, disconnection, unknown buses
  - path_impedance algebra
  - scenario synthesis: parameter validation, bit-level determinism,
    record length/limits, fast-content brackets per scenario kind,
    visible fault dip at the faulted bus
"""

import dataclasses

import numpy as np
import pytest

from gridid.gridsim import (
    SCENARIO_KINDS,
    Scenario,
    load_network,
    path_impedance,
    radial_load_flow,
    simulate_scenario,
)
from gridid.timeseries import window

MIN_V_PU = 0.8441172764894648  # frozen feeder-end magnitude at full load


# ---------------------------------------------------------------------------
# network data and load flow
# ---------------------------------------------------------------------------


def test_bundled_network_shape(net):
    assert len(net.buses) == 15
    assert len(net.lines) == 14
    assert net.slack == 1
    assert sum(b.p_kw for b in net.buses) == pytest.approx(1295.0)
    assert sum(b.q_kvar for b in net.buses) == pytest.approx(660.0)


def test_load_flow_converges_tightly(net):
    sol = radial_load_flow(net)
    assert sol.iterations < 100
    assert sol.residual_pu < 1e-8


def test_voltage_profile(net):
    sol = radial_load_flow(net)
    mags = np.array([sol.magnitude(b) for b in sol.bus_ids])
    assert sol.magnitude(net.slack) == 1.0
    assert np.all(mags > 0.8) and np.all(mags <= 1.0)
    assert mags.min() == pytest.approx(MIN_V_PU, rel=1e-9)
    assert sol.bus_ids[int(np.argmin(mags))] == 15


def test_voltage_drops_monotonically_downstream(net):
    sol = radial_load_flow(net)
    parent, _, _ = net.tree()
    for bus, up in parent.items():
        assert sol.magnitude(up) >= sol.magnitude(bus)


def test_zero_load_gives_flat_unity_profile(net):
    unloaded = dataclasses.replace(
        net, buses=[dataclasses.replace(b, p_kw=0.0, q_kvar=0.0) for b in net.buses]
    )
    sol = radial_load_flow(unloaded)
    assert all(sol.magnitude(b) == 1.0 for b in sol.bus_ids)


def test_extra_load_deepens_the_local_drop(net):
    base = radial_load_flow(net)
    more = radial_load_flow(net, extra_load_kw={15: (500.0, 200.0)})
    assert more.magnitude(15) < base.magnitude(15)
    assert more.magnitude(net.slack) == 1.0


def test_extra_load_unknown_bus(net):
    with pytest.raises(ValueError):
        radial_load_flow(net, extra_load_kw={99: (10.0, 0.0)})


# ---------------------------------------------------------------------------
# topology validation
# ---------------------------------------------------------------------------


def test_loop_rejected(net):
    extra = dataclasses.replace(net.lines[0], from_bus=14, to_bus=15)
    looped = dataclasses.replace(net, lines=list(net.lines) + [extra])
    with pytest.raises(ValueError, match="loop"):
        radial_load_flow(looped)


def test_disconnected_network_rejected(net):
    with pytest.raises(ValueError, match="not connected"):
        dataclasses.replace(net, lines=[l for l in net.lines if l.to_bus != 15])


def test_path_impedance_algebra(net):
    parent, _, _ = net.tree()
    z_direct = path_impedance(net, 1, 15)
    z_split = path_impedance(net, 1, parent[15]) + path_impedance(net, parent[15], 15)
    assert z_direct == pytest.approx(z_split, rel=1e-12)
    assert path_impedance(net, 3, 11) == path_impedance(net, 11, 3)
    assert path_impedance(net, 7, 7) == 0j
    with pytest.raises(ValueError):
        path_impedance(net, 1, 99)


# ---------------------------------------------------------------------------
# scenario validation
# ---------------------------------------------------------------------------


def test_unknown_scenario_kind():
    with pytest.raises(ValueError, match="scenario kind"):
        Scenario(kind="XX")


@pytest.mark.parametrize("field,value", [("duration", -1.0), ("sample_rate", 0.0)])
def test_non_positive_scenario_params(field, value):
    with pytest.raises(ValueError):
        Scenario(kind="SG", **{field: value})


def test_event_times_must_lie_inside_record():
    with pytest.raises(ValueError, match="lies outside"):
        Scenario(kind="SG", duration=1.0)  # default 3.3 s fault doesn't fit


def test_unknown_measurement_bus(net):
    sc = Scenario(kind="SG", duration=1.0, fault_time=0.3, step_on=0.6, step_off=0.8)
    with pytest.raises(ValueError, match="unknown bus"):
        simulate_scenario(net, sc, bus=99)


def test_unknown_fault_bus(net):
    sc = Scenario(
        kind="SG", duration=1.0, fault_time=0.3, step_on=0.6, step_off=0.8, fault_bus=99
    )
    with pytest.raises(ValueError, match="unknown bus"):
        simulate_scenario(net, sc, bus=2)


# ---------------------------------------------------------------------------
# waveform properties
# ---------------------------------------------------------------------------

SHORT = dict(duration=1.0, fault_time=0.3, step_on=0.6, step_off=0.8)


def test_repeat_runs_are_bit_identical(net):
    sc = Scenario(kind="IBR50", seed=4, **SHORT)
    a = simulate_scenario(net, sc, bus=10)
    b = simulate_scenario(net, sc, bus=10)
    assert a.values.tobytes() == b.values.tobytes()
    assert (a.t0, a.dt) == (b.t0, b.dt)


def test_seed_changes_the_noise(net):
    a = simulate_scenario(net, Scenario(kind="SG", seed=0, **SHORT), bus=10)
    b = simulate_scenario(net, Scenario(kind="SG", seed=1, **SHORT), bus=10)
    assert not np.array_equal(a.values, b.values)


def test_record_length_and_amplitude_limits(scenario_waves):
    for kind, ts in scenario_waves.items():
        assert len(ts) == 200_000  # 10 s at 20 kHz
        assert ts.dt == pytest.approx(5e-5)
        assert np.max(np.abs(ts.values)) <= 1.6


def hf_rms_fraction(ts, f_cut=1000.0):
    w = window(ts, 1.0, 2.0)
    spec = np.fft.rfft(w.values)
    freqs = np.fft.rfftfreq(len(w.values), w.dt)
    total = np.sum(np.abs(spec) ** 2)
    high = np.sum(np.abs(spec[freqs >= f_cut]) ** 2)
    return float(np.sqrt(high / total))


def test_fast_content_brackets_by_kind(scenario_waves):
    frac = {kind: hf_rms_fraction(ts) for kind, ts in scenario_waves.items()}
    print("HF RMS fraction:", {k: f"{v:.4f}" for k, v in frac.items()})
    assert frac["SG"] < 0.01  # machine-dominated: clean carrier
    assert frac["IBR50"] >= 0.05  # inverter tones clearly visible
    assert frac["IBR100"] >= 0.05
    assert frac["IBR100"] > frac["IBR50"]


def test_fault_dip_is_visible_at_faulted_bus(net):
    sc = Scenario(kind="SG", seed=0, **SHORT)
    ts = simulate_scenario(net, sc, bus=sc.fault_bus)
    pre = window(ts, 0.05, 0.28)
    during = window(ts, sc.fault_time, sc.clear_time)
    amp_pre = np.sqrt(2 * np.mean(pre.values**2))
    amp_fault = np.sqrt(2 * np.mean(during.values**2))
    dip = 1.0 - amp_fault / amp_pre
    print(f"fault dip at bus {sc.fault_bus}: {dip:.1%}")
    assert dip >= 0.40


def test_all_kinds_simulate(net):
    for kind in SCENARIO_KINDS:
        ts = simulate_scenario(net, Scenario(kind=kind, seed=2, **SHORT), bus=2)
        assert len(ts) == 20_000
        assert np.all(np.isfinite(ts.values))
