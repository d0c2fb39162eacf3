"""Seeded Gaussian random-walk traces for demand, renewables and compute arrivals.

Every (trace_id, channel, node) triple gets its own Philox stream derived
from the scenario master seed, so a trace never depends on which other
traces were drawn before it or on which worker drew it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, TextIO

import numpy as np

from .scenario import ScenarioConfig


class Channel(IntEnum):
    LOCAL_DEMAND = 0
    RENEWABLE = 1
    COMPUTE = 2


class TraceBoundsError(ValueError):
    pass


def stream(master_seed: int, trace_id: int, channel: int, node: int = 0) -> np.random.Generator:
    """Independent counter-based generator for one trace channel."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(trace_id, int(channel), node))
    return np.random.Generator(np.random.Philox(seq))


def gen_random_walk(
    x0: float,
    sigma: float,
    steps: int,
    lower: float,
    upper: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Clamped Gaussian random walk starting at ``x0``.

    ``out[t] = clip(out[t-1] + N(0, sigma**2), lower, upper)``; the increments
    are drawn in one block of ``steps - 1`` normals from ``rng``.
    """
    if not lower <= x0 <= upper:
        raise TraceBoundsError(f"start {x0} outside [{lower}, {upper}]")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = np.empty(steps)
    if steps == 0:
        return out
    eps = rng.normal(0.0, sigma, steps - 1) if sigma > 0 else np.zeros(steps - 1)
    x = float(x0)
    out[0] = x
    for t in range(1, steps):
        x = min(max(x + eps[t - 1], lower), upper)
        out[t] = x
    return out


@dataclass(frozen=True)
class Trace:
    trace_id: int
    local_demand: np.ndarray  # (nodes, steps)
    renewable_availability: np.ndarray  # (nodes, steps); zero rows for dispatchable nodes
    compute_arrivals: np.ndarray  # (steps,)

    @property
    def horizon_steps(self) -> int:
        return self.compute_arrivals.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.trace_id == other.trace_id
            and np.array_equal(self.local_demand, other.local_demand)
            and np.array_equal(self.renewable_availability, other.renewable_availability)
            and np.array_equal(self.compute_arrivals, other.compute_arrivals)
        )


def gen_trace(cfg: ScenarioConfig, trace_id: int) -> Trace:
    cfg = cfg.resolved()
    steps, sigma, seed = cfg.horizon_steps, cfg.walk_sigma, cfg.master_seed
    m = cfg.n_nodes
    demand = np.empty((m, steps))
    renew = np.zeros((m, steps))
    for node in cfg.nodes:
        i = node.id
        demand[i] = gen_random_walk(
            cfg.initial_demand[i], sigma, steps, 0.0, np.inf,
            stream(seed, trace_id, Channel.LOCAL_DEMAND, i),
        )
        if not node.dispatchable:
            renew[i] = gen_random_walk(
                cfg.initial_generation[i], sigma, steps, 0.0, node.energy_capacity,
                stream(seed, trace_id, Channel.RENEWABLE, i),
            )
    arrivals = gen_random_walk(
        cfg.initial_compute_demand, sigma, steps, 0.0, cfg.compute_upper,
        stream(seed, trace_id, Channel.COMPUTE, 0),
    )
    return Trace(trace_id, demand, renew, arrivals)


TRACE_CSV_COLUMNS = ("trace_id", "t", "channel", "node_id", "value_mw")


def write_traces_csv(traces: Iterable[Trace], fh: TextIO) -> None:
    """Long-format dump; the compute channel uses node_id -1 (system level)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_CSV_COLUMNS)
    for tr in traces:
        for t in range(tr.horizon_steps):
            for i in range(tr.local_demand.shape[0]):
                w.writerow((tr.trace_id, t, "local_demand", i, repr(float(tr.local_demand[i, t]))))
            for i in range(tr.renewable_availability.shape[0]):
                w.writerow((tr.trace_id, t, "renewable", i, repr(float(tr.renewable_availability[i, t]))))
            w.writerow((tr.trace_id, t, "compute_arrivals", -1, repr(float(tr.compute_arrivals[t]))))
