"""Command-line front end: simulate → identify → evaluate → report.

Every run is reproducible: a JSON run-config file supplies defaults,
explicit flags override it, and all outputs (CSV waveforms, model JSON,
error and ratio tables) are written deterministically, so a rerun with
the same config and seed is byte-identical.

Exit codes: 0 success, 2 configuration/input problems, 3 numerical
failures (non-convergence, blow-up, degenerate data).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .gridsim import SCENARIO_KINDS, Scenario, load_network, simulate_scenario
from .sindy import NumericsError
from .timeseries import CsvFormatError, TimeGridError, TimeSeries, load_csv, save_csv, window

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Bad run configuration or unusable input files."""


METHODS = ("sindy", "havok", "mixed")


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {p} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return doc


def _opt(args, cfg: dict, name: str, default=None):
    """Flag value if given, else config value, else default."""
    val = getattr(args, name, None)
    if val is None:
        val = cfg.get(name, default)
    return val


def _out_dir(args, cfg) -> Path:
    out = Path(_opt(args, cfg, "out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_series(path) -> TimeSeries:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file not found: {p}")
    x = load_csv(p)
    if not isinstance(x, TimeSeries):
        raise ConfigError(f"{p}: expected a single-channel series (time plus one value column)")
    return x


def _write_rows(path: Path, header: str, rows) -> None:
    lines = [header]
    lines += [",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    kind = _opt(args, cfg, "scenario")
    if kind is None:
        raise ConfigError("simulate needs --scenario (SG, IBR50 or IBR100)")
    buses = _opt(args, cfg, "bus", [2])
    if isinstance(buses, int):
        buses = [buses]
    seed = int(_opt(args, cfg, "seed", 0))
    duration = float(_opt(args, cfg, "duration", 10.0))
    rate = float(_opt(args, cfg, "sample_rate", 20000.0))
    net_path = _opt(args, cfg, "network")
    out = _out_dir(args, cfg)

    try:
        sc = Scenario(kind=kind, duration=duration, sample_rate=rate, seed=seed)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    net = load_network(net_path)
    for bus in buses:
        try:
            ts = simulate_scenario(net, sc, int(bus))
        except ValueError as err:
            raise ConfigError(str(err)) from err
        dest = out / f"{sc.kind}_bus{bus}.csv"
        save_csv(ts, dest)
        print(f"wrote {dest} ({len(ts)} samples)")
    return 0


def cmd_identify(args) -> int:
    cfg = _load_config(args.config)
    method = _opt(args, cfg, "method", "sindy")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    src = _opt(args, cfg, "input")
    if src is None:
        raise ConfigError("identify needs --input <waveform.csv>")
    x = _load_series(src)
    win = _opt(args, cfg, "window")
    if win is not None:
        if len(win) != 2:
            raise ConfigError("--window takes two times: start end")
        win = (float(win[0]), float(win[1]))
    solver = _opt(args, cfg, "solver", "stlsq")
    if solver not in ("stlsq", "ista-l1"):
        raise ConfigError(f"unknown solver {solver!r}; choose stlsq or ista-l1")
    burst = _opt(args, cfg, "burst")
    burst_period = float(_opt(args, cfg, "burst_period", 0.5))
    pair = (int(burst), burst_period) if burst else None
    reanchor = float(_opt(args, cfg, "reanchor_cycles", pipeline.REANCHOR_CYCLES))
    out = _out_dir(args, cfg)

    try:
        if method == "sindy":
            run = pipeline.run_generic(
                x,
                win=win,
                stride=int(_opt(args, cfg, "stride", pipeline.STRIDE)),
                poly_order=int(_opt(args, cfg, "poly_order", pipeline.GENERIC_PARAMS["poly_order"])),
                lam=float(_opt(args, cfg, "lam", pipeline.GENERIC_PARAMS["lam"])),
                method=solver,
                reanchor_cycles=reanchor,
                burst=pair,
            )
        elif method == "mixed":
            run = pipeline.run_mixed(
                x,
                win=win,
                delays=int(_opt(args, cfg, "delays", pipeline.MIXED_PARAMS["delays"])),
                lag=int(_opt(args, cfg, "lag", pipeline.MIXED_PARAMS["lag"])),
                poly_order=int(_opt(args, cfg, "poly_order", pipeline.MIXED_PARAMS["poly_order"])),
                lam=float(_opt(args, cfg, "lam", pipeline.MIXED_PARAMS["lam"])),
                method=solver,
                reanchor_cycles=reanchor,
                burst=pair,
            )
        else:
            rank = _opt(args, cfg, "rank")
            run = pipeline.run_havok(
                x,
                win=win,
                delays=int(_opt(args, cfg, "delays", pipeline.MIXED_PARAMS["delays"])),
                lag=int(_opt(args, cfg, "lag", pipeline.MIXED_PARAMS["lag"])),
                rank=int(rank) if rank is not None else None,
            )
    except ValueError as err:
        raise ConfigError(str(err)) from err

    stem = Path(src).stem
    model_path = out / f"{stem}_{method}_model.json"
    run.model.save(model_path)
    recon_path = out / f"{stem}_{method}_recon.csv"
    recons = run.reconstruction if isinstance(run.reconstruction, list) else [run.reconstruction]
    rows = []
    for seg in recons:
        rows += [(float(t), float(v)) for t, v in zip(seg.times, seg.values)]
    _write_rows(recon_path, f"time,{recons[0].label}", rows)
    print(f"wrote {model_path}")
    print(f"wrote {recon_path}")
    print(f"nRMSE = {run.nrmse:.6e}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    actual_path = _opt(args, cfg, "actual")
    pred_path = _opt(args, cfg, "predicted")
    if actual_path is None or pred_path is None:
        raise ConfigError("evaluate needs --actual and --predicted waveform files")
    actual = _load_series(actual_path)
    pred = _load_series(pred_path)
    if abs(actual.dt - pred.dt) > 1e-9 * actual.dt:
        raise ConfigError(
            f"grids differ: actual dt={actual.dt!r}, predicted dt={pred.dt!r}"
            " (identify may have decimated; evaluate against its recon grid)"
        )
    if len(actual) != len(pred):
        try:
            actual = window(actual, pred.t0, pred.t0 + len(pred) * pred.dt)
        except ValueError as err:
            raise ConfigError(f"cannot align series: {err}") from err
    if len(actual) != len(pred):
        raise ConfigError(f"length mismatch after alignment: {len(actual)} vs {len(pred)}")
    from .sindy import nrmse

    err = nrmse(pred, actual)
    scenario = _opt(args, cfg, "scenario", Path(actual_path).stem)
    method = _opt(args, cfg, "method", "unknown")
    print(f"nRMSE = {err:.6e}")
    out_file = _opt(args, cfg, "out")
    if out_file:
        dest = Path(out_file)
        line = f"{scenario},{method},{err:.17g}\n"
        if dest.exists():
            dest.write_text(dest.read_text() + line)
        else:
            dest.write_text("scenario,method,nrmse\n" + line)
        print(f"appended to {dest}")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args.config)
    sources = _opt(args, cfg, "errors") or []
    if not sources:
        raise ConfigError("report needs at least one --errors CSV")
    reference = _opt(args, cfg, "reference")
    if reference is None:
        raise ConfigError("report needs --reference <scenario>")
    rows = []
    for src in sources:
        p = Path(src)
        if not p.is_file():
            raise ConfigError(f"errors file not found: {p}")
        lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
        if not lines or lines[0].split(",")[:3] != ["scenario", "method", "nrmse"]:
            raise ConfigError(f"{p}: expected header scenario,method,nrmse")
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) < 3:
                raise ConfigError(f"{p}: malformed row {ln!r}")
            rows.append({"scenario": parts[0], "method": parts[1], "nrmse": float(parts[2])})
    try:
        table = pipeline.ratio_table(rows, reference)
    except ValueError as err:
        raise ConfigError(str(err)) from err

    out_file = _opt(args, cfg, "out")
    if out_file:
        _write_rows(
            Path(out_file),
            "scenario,method,nrmse,ratio",
            [(r["scenario"], r["method"], r["nrmse"], r["ratio"]) for r in table],
        )
        print(f"wrote {out_file}")
    print(f"reference scenario: {reference}")
    for r in table:
        print(f"  {r['scenario']:>8s}  {r['method']:>6s}  nrmse={r['nrmse']:.4e}  ratio={r['ratio']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridid",
        description="Sparse system identification of power-grid voltage waveforms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run-config file; flags override its values")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")

    p = sub.add_parser("simulate", help="generate scenario waveform CSVs")
    common(p)
    p.add_argument("--scenario", help=f"one of {', '.join(SCENARIO_KINDS)}")
    p.add_argument("--bus", type=int, nargs="+", help="bus number(s) to record")
    p.add_argument("--duration", type=float, help="record length in seconds (default 10)")
    p.add_argument("--sample-rate", dest="sample_rate", type=float, help="samples per second (default 20000)")
    p.add_argument("--network", help="feeder CSV (default: shipped 15-bus case)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="fit a model to a waveform CSV")
    common(p)
    p.add_argument("--input", help="waveform CSV (time,value)")
    p.add_argument("--method", choices=METHODS, help="identification method (default sindy)")
    p.add_argument("--window", type=float, nargs=2, metavar=("START", "END"), help="time window in seconds")
    p.add_argument("--stride", type=int, help="decimation stride for the generic method")
    p.add_argument("--poly-order", dest="poly_order", type=int, help="polynomial library order")
    p.add_argument("--lambda", dest="lam", type=float, help="sparsity threshold")
    p.add_argument("--solver", choices=("stlsq", "ista-l1"), help="sparse solver (default stlsq)")
    p.add_argument("--delays", type=int, help="delay-embedding rows (havok/mixed)")
    p.add_argument("--lag", type=int, help="delay lag in samples (havok/mixed)")
    p.add_argument("--rank", type=int, help="fixed embedding rank (havok)")
    p.add_argument("--burst", type=int, help="burst length in samples; fit from periodic bursts")
    p.add_argument("--burst-period", dest="burst_period", type=float, help="burst start spacing in seconds (default 0.5)")
    p.add_argument(
        "--reanchor-cycles",
        dest="reanchor_cycles",
        type=float,
        help="carrier cycles between reconstruction re-anchors (default 1)",
    )
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", help="nRMSE between an actual and a predicted waveform")
    common(p)
    p.add_argument("--actual", help="measured waveform CSV")
    p.add_argument("--predicted", help="reconstructed waveform CSV")
    p.add_argument("--scenario", help="scenario label for the error row")
    p.add_argument("--method", help="method label for the error row")
    p.add_argument("--out", help="error table CSV to append to (scenario,method,nrmse)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="ratio table from error CSVs")
    common(p)
    p.add_argument("--errors", nargs="+", help="error CSV files (scenario,method,nrmse)")
    p.add_argument("--reference", help="scenario whose error is the per-method base")
    p.add_argument("--out", help="ratio table CSV to write (scenario,method,nrmse,ratio)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericsError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (ConfigError, CsvFormatError, TimeGridError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
