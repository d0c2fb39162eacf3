"""Optional SVG line charts. Imports matplotlib lazily; CSV stays the contract."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsSummary, normalize_by_max, simulate  # noqa: E402


def _series_chart(path: Path, cfg, title: str) -> None:
    run = simulate(cfg, 0)
    hours = [r.t * r.step_hours for r in run.records]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(hours, [r.gas_output for r in run.records], label="gas output")
    ax.plot(hours, [float(r.curtailed.sum()) for r in run.records], label="curtailed")
    ax.plot(hours, [float(r.compute_placed.sum()) for r in run.records], label="compute served")
    ax.set_xlabel("hour")
    ax.set_ylabel("MW")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _level_chart(path: Path, levels: Sequence[float], columns: dict[str, list[float]], title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    usable = {k: v for k, v in columns.items() if max(v, default=0) > 0}
    for name, values in (normalize_by_max(usable) if usable else {}).items():
        ax.plot(levels, values, marker="o", label=name)
    ax.set_xlabel("HPC per renewable node, MW")
    ax.set_ylabel("fraction of max")
    ax.set_title(title)
    if usable:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_charts(run_dir: Path, cells, summaries: Sequence[MetricsSummary]) -> list[str]:
    """Trace-0 time series for the first cell plus one normalized chart per
    (bid format, theta, policy) group when the run spans several levels."""
    out_dir = run_dir / "charts"
    out_dir.mkdir(exist_ok=True)
    written = []
    first = out_dir / "series_trace0.svg"
    _series_chart(first, cells[0].cfg, cells[0].label)
    written.append(str(first.relative_to(run_dir)))

    groups: dict[tuple, list[tuple[float, MetricsSummary]]] = defaultdict(list)
    for cell, s in zip(cells, summaries):
        if cell.level == "":
            continue
        m = cell.cfg.market
        groups[(m.bid_format.value, m.theta, m.excess_policy.value)].append((float(cell.level), s))
    for (bid, theta, policy), points in groups.items():
        if len(points) < 2:
            continue
        points.sort(key=lambda x: x[0])
        levels = [lv for lv, _ in points]
        cols = {
            "COE": [s.coe for _, s in points],
            "curtailed": [s.curtailed for _, s in points],
            "gas mean": [s.gas_mean for _, s in points],
            "gas peak": [s.gas_peak for _, s in points],
        }
        if bid != "off":
            cols["compute served"] = [s.compute_served for _, s in points]
            cols["total cost"] = [s.total_cost for _, s in points]
        name = f"levels_{bid}_theta{theta:g}_{policy}.svg"
        _level_chart(out_dir / name, levels, cols, f"{bid}, theta={theta:g}, {policy}")
        written.append(f"charts/{name}")
    return written
