"""Monte Carlo ensembles, HPC-distribution sweeps and summary statistics."""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .dispatch import DispatchRecord, run_trace
from .market import MarketOutcome, run_market_trace
from .scenario import ExcessPolicy, ScenarioConfig, ScenarioError, check_scenario
from .traces import Trace, gen_trace

Z95 = 1.959963984540054


class SweepSpecError(ScenarioError):
    pass


class DegenerateGroupError(ValueError):
    pass


@dataclass
class TraceRun:
    trace: Trace
    records: list[DispatchRecord]
    outcomes: list[MarketOutcome] | None = None


@dataclass(frozen=True)
class TraceMetrics:
    trace_id: int
    energy_cost: float  # $, generation + transport for all loads
    delivered_mwh: float
    coe: float  # $/MWh
    curtailed_mw: float  # time-mean
    curtailed_mwh: float
    gas_mean: float
    gas_peak: float
    compute_served_mwh: float
    total_cost: float  # $ paid for compute: market payments, or energy cost in greedy mode
    shortfall_mwh: float
    final_queue_mw: float
    max_node_imbalance: float
    max_compute_imbalance: float


_AVERAGED = (
    "coe", "curtailed_mw", "curtailed_mwh", "gas_mean", "gas_peak",
    "compute_served_mwh", "total_cost", "shortfall_mwh",
)


@dataclass(frozen=True)
class MetricsSummary:
    n_traces: int
    coe: float
    curtailed: float
    curtailed_mwh: float
    gas_mean: float
    gas_peak: float
    compute_served: float
    total_cost: float
    shortfall_mwh: float
    unit_cost: float | None
    ci: Mapping[str, float]  # 95% normal-approximation half-widths, keyed like _AVERAGED
    per_trace: tuple[TraceMetrics, ...] = field(repr=False, default=())
    runs: tuple[TraceRun, ...] | None = field(repr=False, default=None)

    @property
    def curtail_after_hpc(self) -> float:
        # No storage: everything not taken by local load or HPC is curtailed.
        return self.curtailed

    def stderr(self, name: str) -> float:
        return self.ci[name] / Z95

    @property
    def max_node_imbalance(self) -> float:
        return max((m.max_node_imbalance for m in self.per_trace), default=0.0)

    @property
    def max_compute_imbalance(self) -> float:
        return max((m.max_compute_imbalance for m in self.per_trace), default=0.0)


def node_imbalance(rec: DispatchRecord) -> float:
    """Largest per-node |generation + imports - exports - uses| in MW."""
    worst = 0.0
    for n in range(len(rec.generation)):
        lhs = rec.generation[n] + rec.imports(n) - rec.exports(n)
        rhs = rec.local_served[n] + rec.compute_placed[n] + rec.curtailed[n]
        worst = max(worst, abs(lhs - rhs))
    return worst


def compute_imbalance(rec: DispatchRecord) -> float:
    return abs(rec.compute_placed.sum() + rec.unserved_compute - rec.compute_demand)


def simulate(cfg: ScenarioConfig, trace_id: int) -> TraceRun:
    trace = gen_trace(cfg, trace_id)
    if cfg.market.enabled:
        records, outcomes = run_market_trace(cfg, trace)
        return TraceRun(trace, records, outcomes)
    return TraceRun(trace, run_trace(cfg, trace))


def trace_metrics(cfg: ScenarioConfig, run: TraceRun) -> TraceMetrics:
    recs = run.records
    h = recs[0].step_hours
    energy_cost = math.fsum(r.energy_cost_total for r in recs)
    delivered = math.fsum(r.delivered_mw for r in recs) * h
    curtailed = [float(r.curtailed.sum()) for r in recs]
    gas = [r.gas_output for r in recs]
    served = math.fsum(float(r.compute_placed.sum()) for r in recs) * h
    if run.outcomes is not None:
        total_cost = math.fsum(o.payment for o in run.outcomes)
        final_queue = run.outcomes[-1].queue_after
    else:
        total_cost = math.fsum(r.compute_cost for r in recs)
        final_queue = recs[-1].unserved_compute if cfg.excess_policy is ExcessPolicy.ROLLOVER else 0.0
    shortfall = math.fsum(r.unserved_compute for r in recs) * h
    return TraceMetrics(
        trace_id=run.trace.trace_id,
        energy_cost=energy_cost,
        delivered_mwh=delivered,
        coe=energy_cost / delivered if delivered > 0 else 0.0,
        curtailed_mw=math.fsum(curtailed) / len(recs),
        curtailed_mwh=math.fsum(curtailed) * h,
        gas_mean=math.fsum(gas) / len(recs),
        gas_peak=max(gas),
        compute_served_mwh=served,
        total_cost=total_cost,
        shortfall_mwh=shortfall,
        final_queue_mw=final_queue,
        max_node_imbalance=max(node_imbalance(r) for r in recs),
        max_compute_imbalance=max(compute_imbalance(r) for r in recs),
    )


def _trace_job(args: tuple[ScenarioConfig, int, bool]) -> tuple[TraceMetrics, TraceRun | None]:
    cfg, trace_id, keep = args
    run = simulate(cfg, trace_id)
    return trace_metrics(cfg, run), (run if keep else None)


def summarize(per_trace: Sequence[TraceMetrics]) -> MetricsSummary:
    """Ordered reduction of per-trace metrics into ensemble means and 95% CIs."""
    n = len(per_trace)
    means = {}
    ci = {}
    for name in _AVERAGED:
        values = np.array([getattr(m, name) for m in per_trace])
        means[name] = math.fsum(values) / n
        ci[name] = Z95 * float(values.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    served = means["compute_served_mwh"]
    return MetricsSummary(
        n_traces=n,
        coe=means["coe"],
        curtailed=means["curtailed_mw"],
        curtailed_mwh=means["curtailed_mwh"],
        gas_mean=means["gas_mean"],
        gas_peak=means["gas_peak"],
        compute_served=served,
        total_cost=means["total_cost"],
        shortfall_mwh=means["shortfall_mwh"],
        unit_cost=means["total_cost"] / served if served > 0 else None,
        ci=ci,
        per_trace=tuple(per_trace),
    )


def run_ensemble(cfg: ScenarioConfig, n_traces: int, jobs: int = 1, keep_runs: bool = False) -> MetricsSummary:
    """Simulate trace ids ``0..n_traces-1`` and aggregate them.

    Results are identical for any ``jobs``: traces are seeded by id and the
    reduction runs in id order.
    """
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    check_scenario(cfg)
    tasks = [(cfg, k, keep_runs) for k in range(n_traces)]
    if jobs > 1 and n_traces > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trace_job, tasks, chunksize=max(1, n_traces // (4 * jobs))))
    else:
        results = [_trace_job(t) for t in tasks]
    summary = summarize([m for m, _ in results])
    if keep_runs:
        summary = dataclasses.replace(summary, runs=tuple(r for _, r in results))
    return summary


ADDITIVE = "additive"
CONSTANT_TOTAL = "constant-total"


def level_config(base: ScenarioConfig, level: float, mode: str = ADDITIVE) -> ScenarioConfig:
    """Base scenario with ``level`` MW of HPC at every renewable node.

    ``additive`` keeps the dispatchable nodes' HPC as in ``base``;
    ``constant-total`` gives them whatever is left of the base total. Compute
    arrival parameters are pinned to the base so every level sees the same
    traces.
    """
    if level < 0:
        raise SweepSpecError(f"level must be >= 0, got {level}")
    base = base.resolved()
    renewable = [n.id for n in base.nodes if not n.dispatchable]
    slack = [n.id for n in base.nodes if n.dispatchable]
    caps = [n.compute_capacity for n in base.nodes]
    for i in renewable:
        caps[i] = float(level)
    if mode == CONSTANT_TOTAL:
        total = base.total_compute_capacity
        left = total - len(renewable) * level
        if left < -1e-12:
            raise SweepSpecError(
                f"constant-total: {len(renewable)} x {level} MW exceeds the {total:g} MW network total"
            )
        for i in slack:
            caps[i] = max(left, 0.0) / len(slack)
    elif mode != ADDITIVE:
        raise SweepSpecError(f"unknown sweep mode {mode!r}")
    return base.with_compute_capacities(caps)


@dataclass(frozen=True)
class SweepPoint:
    level: float
    capacities: tuple[float, ...]
    summary: MetricsSummary


def sweep_distribution(
    base: ScenarioConfig,
    levels: Iterable[float],
    n_traces: int,
    mode: str = ADDITIVE,
    jobs: int = 1,
) -> list[SweepPoint]:
    cfgs = [level_config(base, lv, mode) for lv in levels]
    return [
        SweepPoint(float(lv), tuple(n.compute_capacity for n in c.nodes), run_ensemble(c, n_traces, jobs))
        for lv, c in zip(levels, cfgs)
    ]


def normalize_by_max(table: Mapping[str, Sequence[float]]) -> dict[str, np.ndarray]:
    """Divide every group by its own maximum."""
    out = {}
    for name, values in table.items():
        arr = np.asarray(values, dtype=float)
        top = arr.max() if arr.size else 0.0
        if not top > 0:
            raise DegenerateGroupError(f"group {name!r} has no positive value to normalize by")
        out[name] = arr / top
    return out


SUMMARY_COLUMNS = (
    "scenario", "mode", "level", "market", "theta", "policy", "n_traces", "seed",
    "cap_node_0", "cap_node_1", "cap_node_2",
    "coe_usd_per_mwh", "coe_ci",
    "curtailed_mw", "curtailed_ci", "curtailed_mwh", "curtail_after_hpc_mw",
    "gas_mean_mw", "gas_mean_ci", "gas_peak_mw", "gas_peak_ci",
    "compute_served_mwh", "compute_served_ci", "total_cost_usd", "total_cost_ci",
    "unit_cost_usd_per_mwh", "shortfall_mwh",
)


def summary_row(cfg: ScenarioConfig, s: MetricsSummary, mode: str = "", level: float | str = "") -> dict[str, object]:
    caps = [n.compute_capacity for n in cfg.nodes] + [""] * 3
    return {
        "scenario": cfg.name,
        "mode": mode,
        "level": level,
        "market": cfg.market.bid_format.value,
        "theta": cfg.market.theta,
        "policy": cfg.market.excess_policy.value,
        "n_traces": s.n_traces,
        "seed": cfg.master_seed,
        "cap_node_0": caps[0],
        "cap_node_1": caps[1],
        "cap_node_2": caps[2],
        "coe_usd_per_mwh": s.coe,
        "coe_ci": s.ci["coe"],
        "curtailed_mw": s.curtailed,
        "curtailed_ci": s.ci["curtailed_mw"],
        "curtailed_mwh": s.curtailed_mwh,
        "curtail_after_hpc_mw": s.curtail_after_hpc,
        "gas_mean_mw": s.gas_mean,
        "gas_mean_ci": s.ci["gas_mean"],
        "gas_peak_mw": s.gas_peak,
        "gas_peak_ci": s.ci["gas_peak"],
        "compute_served_mwh": s.compute_served,
        "compute_served_ci": s.ci["compute_served_mwh"],
        "total_cost_usd": s.total_cost,
        "total_cost_ci": s.ci["total_cost"],
        "unit_cost_usd_per_mwh": "" if s.unit_cost is None else s.unit_cost,
        "shortfall_mwh": s.shortfall_mwh,
    }


def _fmt(value: object) -> object:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else value


def write_summary_csv(rows: Iterable[Mapping[str, object]], fh: TextIO) -> None:
    w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(v) for k, v in row.items()})


SERIES_COLUMNS = (
    "cell", "trace_id", "t", "gas_output_mw", "curtailed_mw", "compute_demand_mw",
    "compute_served_mw", "unserved_mw", "price",
    *(f"curtailed_node_{i}_mw" for i in range(3)),
)


def write_series_csv(cells: Iterable[tuple[str, TraceRun]], fh: TextIO) -> None:
    """Per-timestep series of one trace per sweep cell."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for cell, run in cells:
        prices = [o.price for o in run.outcomes] if run.outcomes else [None] * len(run.records)
        for rec, price in zip(run.records, prices):
            per_node = [repr(float(x)) for x in rec.curtailed[:3]] + [""] * (3 - min(3, len(rec.curtailed)))
            w.writerow((
                cell, run.trace.trace_id, rec.t, repr(rec.gas_output), repr(float(rec.curtailed.sum())),
                repr(rec.compute_demand), repr(float(rec.compute_placed.sum())), repr(rec.unserved_compute),
                "" if price is None else repr(price), *per_node,
            ))
