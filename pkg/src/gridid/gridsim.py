"""Radial distribution network model and scenario waveform generator.

Ships a 15-bus radial feeder (line impedances and spot loads in a CSV
fixture), solves its steady state with a backward/forward sweep, and
synthesizes measurement-like voltage waveforms for three generation
mixes: all synchronous machines (``SG``), a half inverter share
(``IBR50``), and full inverter supply (``IBR100``).

The waveform generator is a parametric surrogate, not an EMT solver: a
60 Hz carrier at the load-flow operating point, amplitude/phase swings
from a damped electromechanical mode, fault and load-step events, and —
for the inverter scenarios — a pair of kHz-range tones whose amplitude
is modulated by the slow swing state (the coupled multi-scale
signature).  Every constant lives in the ``SURROGATE`` table below.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .sindy import NumericsError
from .timeseries import TimeSeries

__all__ = [
    "Bus",
    "Line",
    "Network",
    "BusVoltages",
    "Scenario",
    "SCENARIO_KINDS",
    "SURROGATE",
    "load_network",
    "radial_load_flow",
    "path_impedance",
    "simulate_scenario",
]

SCENARIO_KINDS = ("SG", "IBR50", "IBR100")

#: Every constant of the synthetic waveform model, in one place.
#: Scenario-keyed entries are dicts over SCENARIO_KINDS.
SURROGATE = {
    "carrier_hz": 60.0,              # fundamental frequency
    "init_swing": 0.02,              # initial swing amplitude (relative), excited at t=0
    # electromechanical mode: (frequency Hz, damping ratio)
    "swing_mode": {"SG": (1.5, 0.15), "IBR50": (1.5, 0.15), "IBR100": (4.0, 0.02)},
    "phase_coupling": 0.5,           # rad of phase swing per unit amplitude swing
    # fast inverter-borne content: two tones, second at relative mix amplitude
    "fast_tones_hz": (1800.0, 2400.0),
    "fast_tone_mix": 0.8,
    "fast_amp": {"SG": 0.0, "IBR50": 0.05, "IBR100": 0.10},
    "fast_coupling": 6.0,            # multiplicative modulation of fast amp by swing state
    # broadband switching residue of the inverters (RMS relative to the
    # carrier amplitude), modulated like the tones
    "switch_noise": {"SG": 0.0, "IBR50": 7e-4, "IBR100": 1.1e-3},
    # three-phase fault at fault_bus: amplitude dip scaled by electrical distance
    "fault_dip": {"SG": 0.55, "IBR50": 0.25, "IBR100": 0.20},
    "fault_reach_ohm": 2.0,          # distance scale of the dip attenuation
    "fault_recovery_s": {"SG": 0.05, "IBR50": 0.01, "IBR100": 0.008},
    "fault_swing_kick": {"SG": 0.03, "IBR50": 0.015, "IBR100": 0.02},
    "fault_phase_jump": 0.35,        # rad phase jump at the faulted bus during the dip
    # inverter fault response: clipped fast-decaying impulses at make/clear
    "impulse_amp": {"SG": 0.0, "IBR50": 0.25, "IBR100": 0.30},
    "impulse_clip": 0.30,            # pu ceiling (limited fault current)
    "impulse_tau_s": 0.003,
    "impulse_hz": 1300.0,
    "impulse_reach_ohm": 6.0,
    # extra load connected at the step bus while the step is on
    "load_step_kw": 200.0,
    "load_step_kvar": 100.0,
    "load_tau_s": 0.04,              # first-order settling of the operating point
    "step_swing_kick": 0.008,
    "snr_db": 60.0,                  # measurement noise level
    "v_limit_pu": 1.6,               # hard output guard
}


# ---------------------------------------------------------------------------
# network model


@dataclass(frozen=True)
class Bus:
    """A network node with its spot load (zero for the source)."""

    index: int
    p_kw: float = 0.0
    q_kvar: float = 0.0

    @property
    def s_kva(self) -> complex:
        return complex(self.p_kw, self.q_kvar)


@dataclass(frozen=True)
class Line:
    """A series branch between two buses, impedance in ohms."""

    index: int
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float

    @property
    def z_ohm(self) -> complex:
        return complex(self.r_ohm, self.x_ohm)


@dataclass(frozen=True)
class Network:
    """A distribution feeder fed from a single slack bus.

    Connectivity is validated on construction; orientation of the line
    ``from``/``to`` columns is not trusted — the tree used by the solver
    is rebuilt from the slack outward.
    """

    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    base_kv: float = 11.0
    base_mva: float = 1.0
    slack: int = 1

    def __post_init__(self) -> None:
        ids = [b.index for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus indices in network")
        known = set(ids)
        if self.slack not in known:
            raise ValueError(f"slack bus {self.slack} is not among the buses")
        for ln in self.lines:
            if ln.from_bus not in known or ln.to_bus not in known:
                raise ValueError(f"line {ln.index} references unknown bus")
        reached = {self.slack}
        frontier = [self.slack]
        adj: Dict[int, list] = {b: [] for b in known}
        for ln in self.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        while frontier:
            nxt = []
            for b in frontier:
                for other in adj[b]:
                    if other not in reached:
                        reached.add(other)
                        nxt.append(other)
            frontier = nxt
        missing = sorted(known - reached)
        if missing:
            raise ValueError(f"network is not connected: unreachable buses {missing}")

    @property
    def z_base_ohm(self) -> float:
        return (self.base_kv * 1e3) ** 2 / (self.base_mva * 1e6)

    @property
    def bus_ids(self) -> Tuple[int, ...]:
        return tuple(b.index for b in self.buses)

    def bus(self, index: int) -> Bus:
        for b in self.buses:
            if b.index == index:
                return b
        raise ValueError(f"unknown bus {index}; network has buses {sorted(self.bus_ids)}")

    @property
    def total_p_kw(self) -> float:
        return float(sum(b.p_kw for b in self.buses))

    @property
    def total_q_kvar(self) -> float:
        return float(sum(b.q_kvar for b in self.buses))

    def tree(self) -> Tuple[Dict[int, int], Dict[int, Line], Tuple[int, ...]]:
        """Orient the feeder from the slack outward.

        Returns ``(parent, feed_line, order)``: the upstream bus of each
        non-slack bus, the line feeding it, and a breadth-first bus
        ordering (slack first).  Raises on meshed topology.
        """
        adj: Dict[int, list] = {b.index: [] for b in self.buses}
        for ln in self.lines:
            adj[ln.from_bus].append((ln.to_bus, ln))
            adj[ln.to_bus].append((ln.from_bus, ln))
        parent: Dict[int, int] = {}
        feed: Dict[int, Line] = {}
        order = [self.slack]
        seen = {self.slack}
        head = 0
        while head < len(order):
            b = order[head]
            head += 1
            for other, ln in adj[b]:
                if other in seen:
                    if parent.get(b) != other:
                        raise ValueError(
                            f"non-radial topology: line {ln.index} ({ln.from_bus}-{ln.to_bus}) closes a loop"
                        )
                    continue
                seen.add(other)
                parent[other] = b
                feed[other] = ln
                order.append(other)
        return parent, feed, tuple(order)


def load_network(path: Union[str, Path, None] = None) -> Network:
    """Read a feeder description CSV; ``None`` loads the shipped 15-bus case.

    Expected columns: ``line,from_bus,to_bus,r_ohm,x_ohm,node,p_kw,q_kvar``
    — one row per line, each row also carrying one bus's spot load.
    """
    if path is None:
        text = files("gridid").joinpath("data/ieee15.csv").read_text()
        name = "ieee15 fixture"
    else:
        text = Path(path).read_text()
        name = str(path)
    rows = list(csv.DictReader(text.splitlines()))
    required = {"line", "from_bus", "to_bus", "r_ohm", "x_ohm", "node", "p_kw", "q_kvar"}
    if not rows or not required.issubset(rows[0].keys()):
        raise ValueError(f"{name}: expected columns {sorted(required)}")
    lines = []
    loads: Dict[int, Tuple[float, float]] = {}
    for row in rows:
        lines.append(
            Line(
                index=int(row["line"]),
                from_bus=int(row["from_bus"]),
                to_bus=int(row["to_bus"]),
                r_ohm=float(row["r_ohm"]),
                x_ohm=float(row["x_ohm"]),
            )
        )
        loads[int(row["node"])] = (float(row["p_kw"]), float(row["q_kvar"]))
    ids = sorted({ln.from_bus for ln in lines} | {ln.to_bus for ln in lines} | set(loads))
    buses = tuple(Bus(i, *loads.get(i, (0.0, 0.0))) for i in ids)
    return Network(buses=buses, lines=tuple(lines))


# ---------------------------------------------------------------------------
# load flow


@dataclass(frozen=True)
class BusVoltages:
    """Steady-state phasor solution of a load flow."""

    bus_ids: Tuple[int, ...]
    voltages: np.ndarray  # complex, per unit, aligned with bus_ids
    iterations: int
    residual_pu: float

    def voltage(self, bus: int) -> complex:
        return complex(self.voltages[self.bus_ids.index(bus)])

    def magnitude(self, bus: int) -> float:
        return abs(self.voltage(bus))

    def angle(self, bus: int) -> float:
        return float(np.angle(self.voltage(bus)))


def radial_load_flow(
    net: Network,
    extra_load_kw: Optional[Mapping[int, Tuple[float, float]]] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> BusVoltages:
    """Backward/forward sweep on the feeder tree.

    Backward pass accumulates branch currents from the leaves, forward
    pass applies series voltage drops from the slack.  Stops when the
    largest voltage update falls below ``tol`` (per unit).
    ``extra_load_kw`` maps bus → (P kW, Q kVAR) added to the fixture
    loads, used for the load-step operating point.
    """
    parent, feed, order = net.tree()
    s_base_kva = net.base_mva * 1e3
    z_base = net.z_base_ohm
    s_pu = {b.index: b.s_kva / s_base_kva for b in net.buses}
    if extra_load_kw:
        for bus, (p, q) in extra_load_kw.items():
            if bus not in s_pu:
                raise ValueError(f"unknown bus {bus} in extra load")
            s_pu[bus] = s_pu[bus] + complex(p, q) / s_base_kva
    z_pu = {b: feed[b].z_ohm / z_base for b in feed}

    volts = {b: 1.0 + 0.0j for b in net.bus_ids}
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        inj = {b: np.conj(s_pu[b] / volts[b]) for b in net.bus_ids}
        branch = dict(inj)
        for b in reversed(order):
            if b != net.slack:
                branch[parent[b]] += branch[b]
        new = dict(volts)
        new[net.slack] = 1.0 + 0.0j
        for b in order:
            if b != net.slack:
                new[b] = new[parent[b]] - z_pu[b] * branch[b]
        delta = max(abs(new[b] - volts[b]) for b in net.bus_ids)
        volts = new
        if delta < tol:
            break
    else:
        raise NumericsError(f"load flow did not converge in {max_iter} sweeps (last change {delta:.3e} pu)")

    # power balance: slack injection = loads + series losses
    inj = {b: np.conj(s_pu[b] / volts[b]) for b in net.bus_ids}
    branch = dict(inj)
    for b in reversed(order):
        if b != net.slack:
            branch[parent[b]] += branch[b]
    s_slack = volts[net.slack] * np.conj(sum(branch[b] for b in order if parent.get(b) == net.slack))
    losses = sum(z_pu[b] * abs(branch[b]) ** 2 for b in feed)
    total_load = sum(s_pu.values())
    residual = abs(s_slack - losses - total_load)

    ids = net.bus_ids
    arr = np.array([volts[b] for b in ids], dtype=complex)
    return BusVoltages(bus_ids=ids, voltages=arr, iterations=iterations, residual_pu=float(residual))


def path_impedance(net: Network, a: int, b: int) -> complex:
    """Total series impedance (Ω) along the unique feeder path a → b."""
    for bus in (a, b):
        if bus not in net.bus_ids:
            raise ValueError(f"unknown bus {bus}; network has buses {sorted(net.bus_ids)}")
    parent, feed, _ = net.tree()

    def chain(bus: int) -> list:
        out = [bus]
        while bus != net.slack:
            bus = parent[bus]
            out.append(bus)
        return out

    up_a, up_b = chain(a), chain(b)
    common = set(up_a) & set(up_b)
    fork = next(bus for bus in up_a if bus in common)
    z = 0.0 + 0.0j
    for bus in up_a[: up_a.index(fork)]:
        z += feed[bus].z_ohm
    for bus in up_b[: up_b.index(fork)]:
        z += feed[bus].z_ohm
    return z


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """A scripted 10-second operating story for the feeder."""

    kind: str
    duration: float = 10.0
    sample_rate: float = 20000.0
    seed: int = 0
    fault_bus: int = 10
    fault_time: float = 3.3
    fault_cycles: int = 4
    step_bus: int = 14
    step_on: float = 7.0
    step_off: float = 8.0

    def __post_init__(self) -> None:
        kind = str(self.kind).upper()
        if kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; choose from {SCENARIO_KINDS}")
        object.__setattr__(self, "kind", kind)
        if not (self.duration > 0 and self.sample_rate > 0):
            raise ValueError("duration and sample_rate must be positive")
        t_clear = self.fault_time + self.fault_cycles / SURROGATE["carrier_hz"]
        for name, t in (
            ("fault_time", self.fault_time),
            ("fault clearing", t_clear),
            ("step_on", self.step_on),
            ("step_off", self.step_off),
        ):
            if not 0.0 <= t <= self.duration:
                raise ValueError(f"{name} = {t:.4f} s lies outside [0, {self.duration}] s")
        if self.step_off < self.step_on:
            raise ValueError("step_off must not precede step_on")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def clear_time(self) -> float:
        return self.fault_time + self.fault_cycles / SURROGATE["carrier_hz"]


def _swing(t: np.ndarray, t_k: float, amp: float, f_hz: float, zeta: float) -> np.ndarray:
    """Damped cosine mode excited at t_k, zero before."""
    w = 2.0 * np.pi * f_hz
    wd = w * np.sqrt(1.0 - zeta**2)
    tau = np.maximum(t - t_k, 0.0)
    return amp * np.exp(-zeta * w * tau) * np.cos(wd * tau) * (t >= t_k)


def simulate_scenario(net: Network, sc: Scenario, bus: int) -> TimeSeries:
    """Synthesize the measured voltage waveform at one bus.

    Output is per unit: carrier at the load-flow phasor, swing-mode
    amplitude/phase modulation, the scripted fault and load step, the
    scenario's fast inverter tones, and seeded Gaussian measurement
    noise at ``SURROGATE['snr_db']``.  Identical (scenario, bus) inputs
    give bit-identical output.
    """
    if bus not in net.bus_ids:
        raise ValueError(f"unknown bus {bus}; network has buses {sorted(net.bus_ids)}")
    cfg = SURROGATE
    kind = sc.kind

    base = radial_load_flow(net)
    stepped = radial_load_flow(
        net, extra_load_kw={sc.step_bus: (cfg["load_step_kw"], cfg["load_step_kvar"])}
    )
    v0, phi0 = base.magnitude(bus), base.angle(bus)
    v1, phi1 = stepped.magnitude(bus), stepped.angle(bus)

    n = sc.n_samples
    dt = sc.dt
    t = dt * np.arange(n)
    w_carrier = 2.0 * np.pi * cfg["carrier_hz"]

    # slow swing state: initial transient plus kicks at the fault clearing
    # and the load-step edges, attenuated by electrical distance
    f_sw, zeta = cfg["swing_mode"][kind]
    dist_fault = abs(path_impedance(net, bus, sc.fault_bus))
    w_fault = 1.0 / (1.0 + dist_fault / cfg["fault_reach_ohm"])
    dist_step = abs(path_impedance(net, bus, sc.step_bus))
    w_step = 1.0 / (1.0 + dist_step / cfg["fault_reach_ohm"])
    a = _swing(t, 0.0, cfg["init_swing"], f_sw, zeta)
    a += _swing(t, sc.clear_time, cfg["fault_swing_kick"][kind] * w_fault, f_sw, zeta)
    a += _swing(t, sc.step_on, cfg["step_swing_kick"] * w_step, f_sw, zeta)
    a += _swing(t, sc.step_off, cfg["step_swing_kick"] * w_step, f_sw, zeta)

    # fault dip: flat during the fault, exponential recovery after clearing
    dip_depth = cfg["fault_dip"][kind] * w_fault
    tau_rec = cfg["fault_recovery_s"][kind]
    in_fault = (t >= sc.fault_time) & (t < sc.clear_time)
    after = t >= sc.clear_time
    dip = np.zeros(n)
    dip[in_fault] = dip_depth
    dip[after] = dip_depth * np.exp(-(t[after] - sc.clear_time) / tau_rec)

    # load step: first-order move toward the stepped operating point
    tau_ld = cfg["load_tau_s"]
    g = np.zeros(n)
    on = (t >= sc.step_on) & (t < sc.step_off)
    g[on] = 1.0 - np.exp(-(t[on] - sc.step_on) / tau_ld)
    goff = 1.0 - np.exp(-(sc.step_off - sc.step_on) / tau_ld)
    past = t >= sc.step_off
    g[past] = goff * np.exp(-(t[past] - sc.step_off) / tau_ld)

    amp = (v0 + (v1 - v0) * g) * (1.0 + a) * (1.0 - dip)
    phase = (
        w_carrier * t
        + phi0
        + (phi1 - phi0) * g
        + cfg["phase_coupling"] * a
        - cfg["fault_phase_jump"] * dip
    )
    clean = amp * np.sin(phase)

    rng = np.random.default_rng([sc.seed, SCENARIO_KINDS.index(kind), bus])

    # fast inverter-borne content, amplitude-coupled to the slow state:
    # two discrete tones plus a broadband switching residue
    alpha = cfg["fast_amp"][kind]
    if alpha > 0.0:
        f1, f2 = cfg["fast_tones_hz"]
        p1 = 2.0 * np.pi * ((0.37 * bus) % 1.0)
        p2 = 2.0 * np.pi * ((0.71 * bus) % 1.0)
        tones = np.sin(2.0 * np.pi * f1 * t + p1) + cfg["fast_tone_mix"] * np.sin(
            2.0 * np.pi * f2 * t + p2
        )
        coupled = 1.0 + cfg["fast_coupling"] * a
        clean = clean + v0 * alpha * coupled * tones
        ripple = cfg["switch_noise"][kind]
        if ripple > 0.0:
            clean = clean + v0 * ripple * coupled * rng.standard_normal(n)

    # inverter fault response: clipped, fast-recovering impulses
    i_amp = cfg["impulse_amp"][kind]
    if i_amp > 0.0:
        w_imp = 1.0 / (1.0 + dist_fault / cfg["impulse_reach_ohm"])
        for t_k in (sc.fault_time, sc.clear_time):
            tau = t - t_k
            env = np.where(tau >= 0.0, i_amp * w_imp * np.exp(-np.maximum(tau, 0.0) / cfg["impulse_tau_s"]), 0.0)
            env = np.minimum(env, cfg["impulse_clip"])
            clean = clean + env * np.sin(2.0 * np.pi * cfg["impulse_hz"] * np.maximum(tau, 0.0))

    sigma = float(np.sqrt(np.mean(clean**2))) * 10.0 ** (-cfg["snr_db"] / 20.0)
    v = clean + sigma * rng.standard_normal(n)
    np.clip(v, -cfg["v_limit_pu"], cfg["v_limit_pu"], out=v)
    return TimeSeries(t0=0.0, dt=dt, values=v, label=f"v{bus}")
