"""Command-line interface.

Subcommands::

    simulate   integrate the nonlinear model; writes trajectory.csv, diagnostics.csv
    r0         basic reproduction number; appends a row to r0_report.csv
    sweep      R0 over a parameter range; writes sweep.csv
    plotdata   heatmap / cross-section / contour data from a trajectory.csv
    scenarios  list the built-in presets (or print one as TOML)

Exit codes: 0 success, 2 configuration or usage error, 3 numerical
failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
from dataclasses import replace
from pathlib import Path

import contourpy
import numpy as np

from .config import PRESETS, ScenarioConfig, parse_config, preset, to_toml
from .errors import ConfigError, DomainError, ModelValidityError, PhytoColumnError
from .floquet import SWEEP_PARAMETERS, compute_r0, sweep_r0
from .timestep import SteppingConfig, classify, simulate

__all__ = ["main", "build_parser", "emit_plotdata", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL",
           "EXIT_IO"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

PLOT_MODES = ("heatmap", "cross-section", "contour")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _open_out(path: Path, mode="w"):
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, mode, newline="", encoding="utf-8")


# ---------------------------------------------------------------------------
# argument handling


def _steps_from_dt(text: str, period: float) -> int:
    m = re.fullmatch(r"\s*T\s*/\s*(\d+)\s*", text)
    if m:
        return int(m.group(1))
    try:
        dt = float(text)
    except ValueError:
        raise ConfigError(f"--dt must look like T/k or be a number, got {text!r}") from None
    return SteppingConfig.from_dt(dt, period).steps_per_period


def _load(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise OSError(f"config file not found: {path}")
        cfg = parse_config(path)
    elif args.preset:
        preset(args.preset)  # unknown names fail here with the list of presets
        cfg = parse_config(args.preset)
    else:
        raise ConfigError("give --config <file> or --preset <name>")
    stepping = cfg.stepping
    eigen = cfg.eigen
    if getattr(args, "dt", None):
        k = _steps_from_dt(args.dt, cfg.params.T)
        stepping = SteppingConfig(k, None, stepping.horizon_periods)
        eigen = replace(eigen, steps_per_period=k)
    if getattr(args, "periods", None):
        stepping = replace(stepping, horizon_periods=args.periods)
    cfg = replace(cfg, stepping=stepping, eigen=eigen)
    if getattr(args, "grid", None):
        cfg = replace(cfg, grid_N=args.grid)
        cfg.grid  # validates N
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _range(text: str, log: bool):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range must be start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"range must be start:stop:count, got {text!r}") from None
    if count < 1:
        raise ConfigError("range count must be positive")
    if count == 1:
        return [start]
    if log:
        if start <= 0 or stop <= 0:
            raise ConfigError("log-spaced ranges need positive endpoints")
        return list(np.geomspace(start, stop, count))
    return list(np.linspace(start, stop, count))


# ---------------------------------------------------------------------------
# subcommands


def run_simulate(cfg: ScenarioConfig, out: Path) -> int:
    grid = cfg.grid
    traj = simulate(cfg.params, cfg.initial_state(), cfg.stepping, grid=grid)
    verdict = classify(traj)
    with _open_out(out / "trajectory.csv") as fh:
        w = _writer(fh)
        w.writerow(["t"] + [_fmt(y) for y in grid.nodes])
        for t, row in zip(traj.times, traj.states):
            w.writerow([_fmt(t)] + [_fmt(x) for x in row])
    residual_at = dict(zip(traj.period_indices[1:], traj.period_residuals))
    with _open_out(out / "diagnostics.csv") as fh:
        w = _writer(fh)
        w.writerow(["t", "total_mass", "sup_norm", "min", "period_residual"])
        for j, t in enumerate(traj.times):
            w.writerow([_fmt(t), _fmt(traj.total_mass[j]), _fmt(traj.sup_norm[j]),
                        _fmt(traj.min_value[j]), _fmt(residual_at.get(j, math.nan))])
    print(f"verdict: {verdict.kind} (periods {traj.n_periods}, "
          f"decay factor per period {verdict.decay_factor:.6g}, "
          f"period residual {verdict.period_residual:.3e}, "
          f"final-period min {verdict.final_period_min:.6g})")
    return EXIT_OK


R0_COLUMNS = ["scenario", "N", "steps_per_period", "r0", "lambda0", "multiplier_residual",
              "lower_bound", "r0_star", "r0_star_numerator", "r0_star_denominator",
              "R2", "R2_numerator", "R2_denominator", "R1", "R1_numerator", "R1_denominator",
              "power_iterations", "root_iterations"]


def run_r0(cfg: ScenarioConfig, out: Path, bounds: bool, star: bool) -> int:
    if bounds and cfg.params.alpha != 0.0:
        raise DomainError("--bounds requires alpha = 0")
    rep = compute_r0(cfg.params, cfg.grid, cfg.eigen)
    nan = math.nan
    print(f"R0 = {rep.r0:.10g}")
    print(f"lambda0 = {rep.lambda0:.10g}")
    print(f"multiplier residual = {rep.multiplier_residual:.3e}")
    print(f"lower bound = {float(rep.lower_bound):.10g}")
    star_vals = [nan] * 3
    bound_vals = [nan] * 6
    if star:
        s = rep.r0_star
        star_vals = [float(s), s.numerator, s.denominator]
        print(f"R0* = {s.numerator:.6g} / {s.denominator:.6g} = {float(s):.10g}")
    if bounds:
        r2, r1 = rep.bounds
        bound_vals = [float(r2), r2.numerator, r2.denominator,
                      float(r1), r1.numerator, r1.denominator]
        print(f"R2 = {r2.numerator:.6g} / {r2.denominator:.6g} = {float(r2):.10g}")
        print(f"R1 = {r1.numerator:.6g} / {r1.denominator:.6g} = {float(r1):.10g}")
    path = out / "r0_report.csv"
    new = not path.exists()
    with _open_out(path, "a") as fh:
        w = _writer(fh)
        if new:
            w.writerow(R0_COLUMNS)
        w.writerow([cfg.name, cfg.grid_N, cfg.eigen.steps_per_period]
                   + [_fmt(x) for x in (rep.r0, rep.lambda0, rep.multiplier_residual,
                                        float(rep.lower_bound), *star_vals, *bound_vals)]
                   + [rep.power_iterations, rep.root_iterations])
    return EXIT_OK


def run_sweep(cfg: ScenarioConfig, out: Path, parameter: str, values) -> int:
    rows = sweep_r0(cfg.params, parameter, values, cfg.grid, cfg.eigen)
    with _open_out(out / "sweep.csv") as fh:
        w = _writer(fh)
        w.writerow([parameter, "r0", "lambda0", "residual", "status"])
        for r in rows:
            w.writerow([_fmt(r.value), _fmt(r.r0), _fmt(r.lambda0), _fmt(r.residual), r.status])
    good = [r for r in rows if r.status == "ok"]
    if not good:
        print("sweep: every row failed")
        return EXIT_NUMERICAL
    drops = [a.r0 - b.r0 for a, b in zip(good, good[1:])]
    if drops:
        verdict = "strictly decreasing" if all(d > 0 for d in drops) else "not strictly decreasing"
        print(f"sweep {parameter}: r0 {verdict} over {len(good)} rows "
              f"(smallest drop {min(drops):.3e}); {len(rows) - len(good)} failed")
    else:
        print(f"sweep {parameter}: single row, r0 = {good[0].r0:.10g}")
    return EXIT_OK


def _read_trajectory(path: Path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if len(header) < 2 or header[0] != "t":
                raise ConfigError(f"{path}: header must start with 't' and list node depths")
            y = np.array([float(h) for h in header[1:]])
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed trajectory CSV: {exc}") from exc
    if data.size == 0:
        raise ConfigError(f"{path}: no trajectory rows")
    if data.shape[1] != y.size + 1:
        raise ConfigError(f"{path}: row width does not match the header")
    return data[:, 0], y, data[:, 1:]


def emit_plotdata(trajectory_csv, mode: str, out_dir) -> Path:
    """Write plot-ready data derived from a ``trajectory.csv``.

    ``heatmap`` writes long-format ``(t, y, value)`` triples;
    ``cross-section`` writes the value against ``t`` at ``y = 0, L0/2, L0``
    (linear interpolation between nodes); ``contour`` writes level-set
    polylines of the ``(t, y)`` field at 10 evenly spaced interior levels as
    ``(level, line, t, y)`` rows.

    Returns the path written.
    """
    if mode not in PLOT_MODES:
        raise ConfigError(f"mode must be one of {PLOT_MODES}, got {mode!r}")
    t, y, vals = _read_trajectory(Path(trajectory_csv))
    out_dir = Path(out_dir)
    name = {"heatmap": "heatmap.csv", "cross-section": "cross_section.csv",
            "contour": "contour.csv"}[mode]
    path = out_dir / name
    with _open_out(path) as fh:
        w = _writer(fh)
        if mode == "heatmap":
            w.writerow(["t", "y", "value"])
            for ti, row in zip(t, vals):
                for yi, v in zip(y, row):
                    w.writerow([_fmt(ti), _fmt(yi), _fmt(v)])
        elif mode == "cross-section":
            depths = [y[0], 0.5 * (y[0] + y[-1]), y[-1]]
            w.writerow(["t"] + [_fmt(d) for d in depths])
            for ti, row in zip(t, vals):
                w.writerow([_fmt(ti)] + [_fmt(np.interp(d, y, row)) for d in depths])
        else:
            w.writerow(["level", "line", "t", "y"])
            lo, hi = float(np.min(vals)), float(np.max(vals))
            if t.size >= 2 and hi > lo:
                gen = contourpy.contour_generator(y, t, vals)
                line = 0
                for level in np.linspace(lo, hi, 12)[1:-1]:
                    for seg in gen.lines(level):
                        for yy, tt in seg:
                            w.writerow([_fmt(level), line, _fmt(tt), _fmt(yy)])
                        line += 1
    return path


def run_scenarios(show: str | None) -> int:
    if show:
        sys.stdout.write(to_toml(preset(show)))
        return EXIT_OK
    width = max(len(n) for n in PRESETS)
    for name, cfg in PRESETS.items():
        print(f"{name:<{width}}  {cfg.description}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phytocolumn",
        description="Phytoplankton in a periodically evolving water column: simulation and R0.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, stepping=False):
        p.add_argument("--config", help="scenario TOML file")
        p.add_argument("--preset", help="built-in scenario name (see the scenarios command)")
        p.add_argument("--out", help="output directory (default from the scenario, else .)")
        p.add_argument("--grid", type=int, help="number of grid nodes N")
        p.add_argument("--dt", help="time step as T/k (k steps per period) or a number")
        if stepping:
            p.add_argument("--periods", type=int, help="horizon in periods")

    p = sub.add_parser("simulate", help="integrate the nonlinear model")
    scenario_args(p, stepping=True)

    p = sub.add_parser("r0", help="basic reproduction number")
    scenario_args(p)
    p.add_argument("--bounds", action="store_true", help="also report R2 <= R0 <= R1 (alpha = 0)")
    p.add_argument("--star", action="store_true", help="also report the small-transport limit R0*")

    p = sub.add_parser("sweep", help="R0 over a parameter range")
    scenario_args(p)
    p.add_argument("parameter", choices=SWEEP_PARAMETERS)
    p.add_argument("range", help="start:stop:count")
    p.add_argument("--log", action="store_true", help="log-spaced values")

    p = sub.add_parser("plotdata", help="plot-ready CSV from a trajectory")
    p.add_argument("trajectory", help="path to trajectory.csv")
    p.add_argument("--mode", choices=PLOT_MODES, default="heatmap")
    p.add_argument("--out", help="output directory (default: next to the trajectory)")

    p = sub.add_parser("scenarios", help="list built-in presets")
    p.add_argument("--show", metavar="NAME", help="print one preset as TOML")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "scenarios":
            return run_scenarios(args.show)
        if args.command == "plotdata":
            out = Path(args.out) if args.out else Path(args.trajectory).parent
            path = emit_plotdata(args.trajectory, args.mode, out)
            print(f"wrote {path}")
            return EXIT_OK
        cfg = _load(args)
        out = Path(cfg.output_dir)
        if args.command == "simulate":
            return run_simulate(cfg, out)
        if args.command == "r0":
            return run_r0(cfg, out, args.bounds, args.star)
        if args.command == "sweep":
            values = _range(args.range, args.log)
            return run_sweep(cfg, out, args.parameter, values)
    except (ConfigError, DomainError, ModelValidityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PhytoColumnError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_CONFIG  # pragma: no cover - argparse enforces a command


if __name__ == "__main__":
    sys.exit(main())
