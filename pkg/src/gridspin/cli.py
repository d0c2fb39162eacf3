"""Command-line entry point: ``gridspin run``, ``gridspin sweep``, ``gridspin rerun``.

Exit codes: 0 success, 1 configuration error, 2 infeasible scenario.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import itertools
import json
import logging
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .dispatch import InfeasibleDemandError, write_dispatch_csv
from .market import write_market_csv
from .metrics import (
    ADDITIVE,
    CONSTANT_TOTAL,
    MetricsSummary,
    level_config,
    run_ensemble,
    simulate,
    summary_row,
    write_series_csv,
    write_summary_csv,
)
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    TransportCostMatrix,
    check_scenario,
    load_scenario,
    resolve_scenario_path,
    scenario_from_dict,
    scenario_to_dict,
)
from .traces import write_traces_csv

log = logging.getLogger("gridspin")

DUMP_KINDS = ("traces", "dispatch", "market")


class UsageError(ScenarioError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems are config errors (exit 1)
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _choice_list(choices: Sequence[str]):
    def parse(text: str) -> list[str]:
        items = [x.strip() for x in text.split(",") if x.strip()]
        bad = [x for x in items if x not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"expected comma-separated values from {list(choices)}, got {text!r}")
        return items
    return parse


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario_pos", nargs="?", metavar="SCENARIO", help="shipped scenario name or JSON file")
    p.add_argument("--scenario", help="same as the positional SCENARIO")
    p.add_argument("--traces", type=int, default=None, help="number of Monte Carlo traces (default 100)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
    p.add_argument("--out", default=None, help="output root (default $GRIDSPIN_OUT or ./out)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    p.add_argument("--charts", action="store_true", help="also write SVG charts (needs matplotlib)")
    p.add_argument("--dump", type=_choice_list(DUMP_KINDS), default=[], help="comma list of traces,dispatch,market")
    p.add_argument("--sigma", type=float, default=None, help="random-walk step std dev, MW")
    p.add_argument("--horizon-steps", type=int, default=None)
    p.add_argument("--step-minutes", type=float, default=None)
    p.add_argument("--transport-cost", type=float, default=None, help="flat inter-node transport cost, $/MWh")
    p.add_argument("--initial-compute", type=float, default=None, help="initial compute arrivals, MW")
    p.add_argument("--compute-upper", type=float, default=None, help="upper clamp for compute arrivals, MW")
    p.add_argument("--initial-demand", type=_float_list, default=None, help="comma list, MW per node")
    p.add_argument("--initial-generation", type=_float_list, default=None, help="comma list, MW per node")
    p.add_argument("--compute-capacities", type=_float_list, default=None, help="comma list, MW of HPC per node")
    p.add_argument("--price-tick", type=float, default=None, help="market price resolution, $/MWh (0 = continuous)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridspin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gridspin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one scenario ensemble")
    _common(run)
    run.add_argument("--market", choices=["off", "merit", "plsf"], default=None)
    run.add_argument("--theta", type=float, default=None, help="shortfall penalty, $/MWh")
    run.add_argument("--policy", choices=["shed", "rollover"], default=None)

    sweep = sub.add_parser("sweep", help="sweep HPC distribution x theta x bid format x policy")
    _common(sweep)
    sweep.add_argument("--mode", choices=[ADDITIVE, CONSTANT_TOTAL], default=ADDITIVE)
    sweep.add_argument("--levels", type=_float_list, default=None, help="MW of HPC per renewable node")
    sweep.add_argument("--theta", type=_float_list, default=None)
    sweep.add_argument("--bids", "--market", dest="bids", type=_choice_list(["off", "merit", "plsf"]), default=None)
    sweep.add_argument("--policy", type=_choice_list(["shed", "rollover"]), default=None)

    rerun = sub.add_parser("rerun", help="regenerate a run from its manifest.json")
    rerun.add_argument("manifest")
    rerun.add_argument("--out", default=None)
    rerun.add_argument("--jobs", type=int, default=None)
    return parser


def apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    """CLI flag beats scenario file beats built-in default."""
    changes: dict[str, Any] = {}
    for flag, attr in (
        ("seed", "master_seed"), ("sigma", "walk_sigma"), ("horizon_steps", "horizon_steps"),
        ("step_minutes", "step_minutes"), ("initial_compute", "initial_compute_demand"),
        ("compute_upper", "compute_upper"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            changes[attr] = value
    for flag in ("initial_demand", "initial_generation"):
        value = getattr(args, flag, None)
        if value is not None:
            changes[flag] = tuple(value)
    if getattr(args, "transport_cost", None) is not None:
        changes["transport"] = TransportCostMatrix.flat(cfg.n_nodes, args.transport_cost)
    cfg = dataclasses.replace(cfg, **changes)
    caps = getattr(args, "compute_capacities", None)
    if caps is not None:
        if len(caps) != cfg.n_nodes:
            raise UsageError(f"--compute-capacities needs {cfg.n_nodes} values, got {len(caps)}")
        cfg = cfg.with_compute_capacities(caps)
    market: dict[str, Any] = {}
    if getattr(args, "price_tick", None) is not None:
        market["price_tick"] = args.price_tick
    if getattr(args, "market", None) is not None and not isinstance(args.market, list):
        market["bid_format"] = args.market
    if isinstance(getattr(args, "theta", None), (int, float)):
        market["theta"] = args.theta
    if isinstance(getattr(args, "policy", None), str):
        market["excess_policy"] = args.policy
    if market:
        cfg = cfg.with_market(**market)
    return check_scenario(cfg)


def _load(args: argparse.Namespace) -> tuple[ScenarioConfig, str]:
    name = args.scenario or args.scenario_pos
    if not name:
        raise UsageError("a scenario is required (positional or --scenario)")
    path = resolve_scenario_path(name)
    cfg = load_scenario(path)
    return apply_overrides(cfg, args), Path(name).stem


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _make_run_dir(root: Path, label: str) -> Path:
    base = root / label
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S_%f")
    run_dir = base / stamp
    run_dir.mkdir(parents=True, exist_ok=False)
    latest = base / "latest"
    try:
        if latest.is_symlink() or latest.exists():
            latest.unlink()
        latest.symlink_to(stamp, target_is_directory=True)
    except OSError:
        log.warning("could not update %s", latest)
    return run_dir


def _out_root(args: argparse.Namespace) -> Path:
    return Path(args.out or os.environ.get("GRIDSPIN_OUT") or "out")


@dataclasses.dataclass
class Cell:
    cfg: ScenarioConfig
    mode: str = ""
    level: float | str = ""

    @property
    def label(self) -> str:
        m = self.cfg.market
        parts = [f"L{self.level:g}" if self.level != "" else "base", m.bid_format.value]
        if m.enabled:
            parts += [f"theta{m.theta:g}", m.excess_policy.value]
        return "_".join(parts)


def execute(cells: list[Cell], n_traces: int, jobs: int, run_dir: Path, command: str,
            dumps: Sequence[str] = (), charts: bool = False) -> list[MetricsSummary]:
    """Run every cell and write manifest, summary.csv, series.csv and extras."""
    started = time.time()
    manifest = {
        "tool": "gridspin",
        "version": __version__,
        "command": command,
        "n_traces": n_traces,
        "cells": [
            {"mode": c.mode, "level": c.level, "master_seed": c.cfg.master_seed, "config": scenario_to_dict(c.cfg)}
            for c in cells
        ],
        "outputs": {"summary": "summary.csv", "series": "series.csv"},
        "started_utc": datetime.now(timezone.utc).isoformat(),
        "duration_s": None,
    }
    _atomic_write(run_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    if len(cells) > 1:
        for i, c in enumerate(cells):
            cell_manifest = dict(manifest, cells=[manifest["cells"][i]])
            _atomic_write(run_dir / "cells" / f"{i:03d}_{c.label}.json", json.dumps(cell_manifest, indent=2) + "\n")

    keep = bool(dumps)
    summaries, rows, series = [], [], []
    for c in cells:
        log.info("cell %s: %d traces", c.label, n_traces)
        s = run_ensemble(c.cfg, n_traces, jobs=jobs, keep_runs=keep)
        summaries.append(s)
        rows.append(summary_row(c.cfg, s, c.mode, c.level))
        series.append((c.label, s.runs[0] if keep else simulate(c.cfg, 0)))
        if dumps:
            _write_dumps(run_dir if len(cells) == 1 else run_dir / "cells" / c.label, c.cfg, s, dumps)

    buf = io.StringIO()
    write_summary_csv(rows, buf)
    _atomic_write(run_dir / "summary.csv", buf.getvalue())
    buf = io.StringIO()
    write_series_csv(series, buf)
    _atomic_write(run_dir / "series.csv", buf.getvalue())
    if charts:
        try:
            from .charts import write_charts
            manifest["outputs"]["charts"] = write_charts(run_dir, cells, summaries)
        except ImportError as exc:
            log.warning("charts skipped: %s", exc)
    manifest["duration_s"] = round(time.time() - started, 3)
    _atomic_write(run_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return summaries


def _write_dumps(where: Path, cfg: ScenarioConfig, s: MetricsSummary, dumps: Sequence[str]) -> None:
    where.mkdir(parents=True, exist_ok=True)
    runs = s.runs or ()
    if "traces" in dumps:
        with open(where / "traces.csv", "w", newline="") as fh:
            write_traces_csv((r.trace for r in runs), fh)
    if "dispatch" in dumps:
        with open(where / "dispatch.csv", "w", newline="") as fh:
            write_dispatch_csv(((r.trace.trace_id, r.records) for r in runs), fh)
    if "market" in dumps and cfg.market.enabled:
        with open(where / "market.csv", "w", newline="") as fh:
            write_market_csv(((r.trace.trace_id, r.outcomes) for r in runs), fh, cfg.n_nodes)


def sweep_cells(base: ScenarioConfig, mode: str, levels: Sequence[float], thetas: Sequence[float],
                bids: Sequence[str], policies: Sequence[str]) -> list[Cell]:
    cells = []
    for level in levels:
        lcfg = level_config(base, level, mode)
        for theta, bid, policy in itertools.product(thetas, bids, policies):
            cfg = lcfg.with_market(theta=theta, bid_format=bid, excess_policy=policy)
            cells.append(Cell(check_scenario(cfg), mode, level))
    return cells


def cmd_run(args: argparse.Namespace) -> int:
    cfg, label = _load(args)
    run_dir = _make_run_dir(_out_root(args), label)
    execute([Cell(cfg)], args.traces or 100, _jobs(args), run_dir, "run", args.dump, args.charts)
    print(run_dir)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    base, label = _load(args)
    m = base.market
    levels = args.levels if args.levels is not None else [0.0]
    if not levels:
        raise UsageError("--levels needs at least one value")
    cells = sweep_cells(
        base, args.mode, levels,
        args.theta or [m.theta],
        args.bids or [m.bid_format.value],
        args.policy or [m.excess_policy.value],
    )
    run_dir = _make_run_dir(_out_root(args), label)
    execute(cells, args.traces or 100, _jobs(args), run_dir, "sweep", args.dump, args.charts)
    print(run_dir)
    return 0


def cmd_rerun(args: argparse.Namespace) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest: {exc}") from None
    cells = [Cell(scenario_from_dict(c["config"]), c["mode"], c["level"]) for c in manifest["cells"]]
    run_dir = _make_run_dir(_out_root(args), cells[0].cfg.name + "_rerun")
    execute(cells, manifest["n_traces"], _jobs(args), run_dir, manifest["command"])
    print(run_dir)
    return 0


def _jobs(args: argparse.Namespace) -> int:
    return args.jobs if args.jobs else (os.cpu_count() or 1)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "rerun": cmd_rerun}[args.command]
    try:
        return handler(args)
    except ScenarioError as exc:
        print(f"gridspin: config error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleDemandError as exc:
        print(f"gridspin: infeasible: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
