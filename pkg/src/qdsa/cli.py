"""Command-line front end: ``qdsa {quantify,run,sweep,render}``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 infeasible scenario.

CSV schemas (header row first, one row per cell in manifest order):

``run`` and metric ``sweep``::

    preset,variable,value,seed,sam,scheduled_count,unscheduled_count,harmful_count,
    available_pct,exploited_pct,available_before_W_unitregion,available_after_W_unitregion

availability ``sweep`` (presets without mechanisms)::

    preset,variable,value,seed,available_pct,available_W_unitregion,
    lost_available_W_unitregion,lost_available_pct

With several ``--sweep`` flags the cells form their cross product (first flag
outermost) and ``variable``/``value`` hold ``;``-joined entries.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .consumption import InfeasibleLinkError, consumption_report, opportunity_field
from .metrics import _background, assumed_view, availability_only, evaluate, lost_available
from .propagation import link_sinr, meets_threshold
from .sam import SAM_KINDS, run_sam
from .scenario import DEFAULT_SWEEPS, ConfigError, ScenarioConfig, generate, preset, with_value, canonical_variable

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INFEASIBLE = 0, 2, 3, 4

METRIC_COLUMNS = ["preset", "variable", "value", "seed", "sam", "scheduled_count", "unscheduled_count",
                  "harmful_count", "available_pct", "exploited_pct", "available_before_W_unitregion",
                  "available_after_W_unitregion"]
AVAIL_COLUMNS = ["preset", "variable", "value", "seed", "available_pct", "available_W_unitregion",
                 "lost_available_W_unitregion", "lost_available_pct"]


class CliIOError(Exception):
    pass


def _num(x) -> str:
    # repr round-trips, so equal floats always print identically
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


# --- argument helpers -----------------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or a mix such as ``"0-2,10"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                a, b = int(lo), int(hi)
                if b < a:
                    raise ConfigError(f"empty seed range {part!r}")
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise ConfigError("no seeds given")
    return seeds


def parse_sweep(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ConfigError(f"--sweep expects var=v1,v2,..., got {text!r}")
    var, vals = text.split("=", 1)
    values = []
    for v in vals.split(","):
        v = v.strip()
        if not v:
            continue
        try:
            values.append(int(v) if v.lstrip("-").isdigit() else float(v))
        except ValueError as exc:
            raise ConfigError(f"non-numeric sweep value {v!r}") from exc
    if not values:
        raise ConfigError(f"--sweep {var} has no values")
    return canonical_variable(var.strip()), values


def load_config(args) -> ScenarioConfig:
    if bool(args.preset) == bool(args.scenario):
        raise ConfigError("give exactly one of --preset or --scenario")
    if args.preset:
        cfg = preset(args.preset)
    else:
        try:
            text = Path(args.scenario).read_text()
        except OSError as exc:
            raise CliIOError(f"cannot read scenario file: {exc}") from exc
        cfg = ScenarioConfig.from_json(text)
    if getattr(args, "grid_mode", None):
        cfg.grid_mode = args.grid_mode
    return cfg


def thread_count(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("QDSA_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"QDSA_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliIOError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise CliIOError(f"output directory {out} is not writable")
    return out


def _write(path: Path, text: str | bytes) -> None:
    try:
        if isinstance(text, bytes):
            path.write_bytes(text)
        else:
            path.write_text(text, newline="")
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc}") from exc


def _csv_text(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


# --- cells ----------------------------------------------------------------------

def _points(cfg: ScenarioConfig, sweeps: Sequence[tuple[str, list]], seeds: Sequence[int]) -> list:
    """(config, variable label, value label, seed) in manifest order."""
    variables = ";".join(v for v, _ in sweeps)
    out = []
    for combo in itertools.product(*[vals for _, vals in sweeps]) if sweeps else [()]:
        point = cfg
        for (var, _), val in zip(sweeps, combo):
            point = with_value(point, var, val)
        label = ";".join(_num(v) for v in combo)
        for s in seeds:
            c = ScenarioConfig.from_dict(point.to_dict())
            c.seed = int(s)
            out.append((c, variables, label, int(s)))
    return out


def _metric_rows(job, sams: Sequence[str]) -> list[list[str]]:
    cfg, variable, value, seed = job
    scenario = generate(cfg)
    rows = []
    for sam in sams:
        m = evaluate(run_sam(sam, scenario), scenario, sam)
        rows.append([cfg.name, variable, value, str(seed), sam, _num(m.scheduled_count),
                     _num(m.unscheduled_count), _num(m.harmful_rx_count), _num(m.available_pct),
                     _num(m.exploited_pct), _num(m.available_before), _num(m.available_after)])
    return rows


def _availability_rows(job) -> list[list[str]]:
    cfg, variable, value, seed = job
    scenario = generate(cfg)
    lost = lost_available(scenario, assumed_view(scenario))
    avail = availability_only(scenario)
    return [[cfg.name, variable, value, str(seed), _num(avail),
             _num(avail / 100.0 * scenario.space.total), _num(lost),
             _num(100.0 * lost / scenario.space.total)]]


def _run_cells(jobs, fn, threads: int) -> list:
    if threads == 1:
        results = [fn(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, jobs))  # map keeps submission order
    return [row for rows in results for row in rows]


def metrics_csv(cfg: ScenarioConfig, sams: Sequence[str], seeds: Sequence[int],
                sweeps: Sequence[tuple[str, list]] = (), threads: int = 1) -> str:
    if not sams:
        raise ConfigError("at least one SAM is required")
    for s in sams:
        if s not in SAM_KINDS:
            raise ConfigError(f"unknown SAM {s!r}; expected one of {', '.join(SAM_KINDS)}")
    jobs = _points(cfg, sweeps, seeds)
    return _csv_text(METRIC_COLUMNS, _run_cells(jobs, lambda j: _metric_rows(j, sams), threads))


def availability_csv(cfg: ScenarioConfig, seeds: Sequence[int], sweeps: Sequence[tuple[str, list]] = (),
                     threads: int = 1) -> str:
    jobs = _points(cfg, sweeps, seeds)
    return _csv_text(AVAIL_COLUMNS, _run_cells(jobs, _availability_rows, threads))


# --- quantify / render ------------------------------------------------------------

def quantify(cfg: ScenarioConfig) -> tuple[dict, dict]:
    """Consumption report and opportunity grid of the networks on air."""
    scenario = generate(cfg)
    env = scenario.space.env
    networks = _background(scenario)
    for n in networks:
        for rx in n.receivers:
            if not meets_threshold(link_sinr(rx, n.transmitter, (), env), rx.beta):
                raise InfeasibleLinkError(f"network {n.id} cannot reach its receiver threshold")
    report = consumption_report(scenario.space, networks).to_dict()
    report["scenario"] = cfg.name
    field = opportunity_field(scenario.space, networks)
    grid = scenario.space.grid
    grid_doc = {
        "scenario": cfg.name,
        "mode": grid.mode,
        "columns": grid.columns,
        "rows": grid.rows,
        "region_width_m": grid.region_width,
        "region_height_m": grid.region_height,
        "p_max_W": env.p_max,
        "p_min_W": env.p_min,
        "bands": [
            [{"index": u.index, "col": u.col, "row": u.row, "x_m": u.center.x, "y_m": u.center.y,
              "gamma_W": float(field.values[b, u.index])} for u in grid.unit_regions]
            for b in range(scenario.space.bands)
        ],
    }
    return report, grid_doc


def render(grid_doc: dict, band: int = 0) -> tuple[bytes, str]:
    """PGM (P5) image and CSV of one band of an opportunity grid.

    Gray level is ``round(255 * gamma / (p_max - p_min))``: dark where little
    power may be added, white where the full range is free. North is up.
    """
    try:
        cols, rows = int(grid_doc["columns"]), int(grid_doc["rows"])
        span = float(grid_doc["p_max_W"]) - float(grid_doc["p_min_W"])
        cells = grid_doc["bands"][band]
        if cols < 1 or rows < 1 or not span > 0:
            raise ValueError("grid dimensions and span must be positive")
        img = np.zeros((rows, cols), dtype=np.uint8)
        out_rows = []
        for c in cells:
            g = float(c["gamma_W"])
            if not math.isfinite(g):
                raise ValueError("non-finite gamma")
            level = int(np.clip(np.rint(255.0 * g / span), 0, 255))
            col, row = int(c["col"]), int(c["row"])
            img[rows - 1 - row, col] = level
            out_rows.append([_num(int(c["index"])), _num(col), _num(row), _num(float(c["x_m"])),
                             _num(float(c["y_m"])), _num(g), _num(level)])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed grid file: {exc}") from exc
    pgm = f"P5\n{cols} {rows}\n255\n".encode() + img.tobytes()
    return pgm, _csv_text(["index", "col", "row", "x_m", "y_m", "gamma_W", "gray"], out_rows)


# --- commands -----------------------------------------------------------------------

def cmd_quantify(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args.out)
    report, grid_doc = quantify(cfg)
    _write(out / f"{cfg.name}_report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write(out / f"{cfg.name}_grid.json", json.dumps(grid_doc, sort_keys=True) + "\n")
    print(f"{cfg.name}: available {report['available_pct']:.2f}% of {report['total_space']:.6g} W_unitregion")
    return EXIT_OK


def _sweeps(args, cfg, use_defaults: bool) -> list:
    if args.sweep:
        return [parse_sweep(s) for s in args.sweep]
    if use_defaults:
        return [(canonical_variable(k), v) for k, v in DEFAULT_SWEEPS.get(cfg.name, {}).items()]
    return []


def cmd_run(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args.out)
    text = metrics_csv(cfg, args.sam or cfg.sams, parse_seeds(args.seeds), _sweeps(args, cfg, False),
                       thread_count(args))
    _write(out / f"{cfg.name}_metrics.csv", text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    out = _out_dir(args.out)
    sweeps = _sweeps(args, cfg, True)
    if not sweeps:
        raise ConfigError(f"no sweep variable given and {cfg.name!r} has no default sweep")
    seeds, threads = parse_seeds(args.seeds), thread_count(args)
    sams = args.sam or cfg.sams
    if sams:
        _write(out / f"{cfg.name}_sweep_metrics.csv", metrics_csv(cfg, sams, seeds, sweeps, threads))
    else:
        _write(out / f"{cfg.name}_sweep_availability.csv", availability_csv(cfg, seeds, sweeps, threads))
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        doc = json.loads(Path(args.grid).read_text())
    except OSError as exc:
        raise CliIOError(f"cannot read grid file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed grid file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("malformed grid file: expected an object")
    pgm, table = render(doc, args.band)
    out = _out_dir(args.out)
    stem = Path(args.grid).stem
    _write(out / f"{stem}.pgm", pgm)
    _write(out / f"{stem}.csv", table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdsa", description="Quantified spectrum-access simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--preset", help="built-in scenario name")
        sp.add_argument("--scenario", help="scenario JSON file")
        sp.add_argument("--grid-mode", choices=["paper26", "hex_pack"])
        sp.add_argument("--out", required=True, help="output directory")

    q = sub.add_parser("quantify", help="consumption report and opportunity grid")
    scenario_args(q)
    q.set_defaults(func=cmd_quantify)

    for name, func, help_ in (("run", cmd_run, "metrics CSV for one scenario"),
                              ("sweep", cmd_sweep, "availability or metrics over a parameter sweep")):
        sp = sub.add_parser(name, help=help_)
        scenario_args(sp)
        sp.add_argument("--sam", action="append", choices=SAM_KINDS)
        sp.add_argument("--seeds", default="0")
        sp.add_argument("--sweep", action="append", metavar="VAR=V1,V2,...")
        sp.add_argument("--threads", type=int, default=None)
        sp.set_defaults(func=func)

    r = sub.add_parser("render", help="PGM heatmap and CSV from a grid file")
    r.add_argument("grid")
    r.add_argument("--out", required=True)
    r.add_argument("--band", type=int, default=0)
    r.set_defaults(func=cmd_render)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except InfeasibleLinkError as exc:
        print(f"qdsa: infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CliIOError as exc:
        print(f"qdsa: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"qdsa: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
