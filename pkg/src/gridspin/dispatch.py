"""Greedy cost-ordered dispatch of local demand and flexible compute load.

Each timestep runs in two stages. Local (non-compute) demand is served
first from each node's own generation, then any shortfall from the cheapest
remaining sources, with the dispatchable unit as slack. The system compute
demand is then routed to (source, sink) pairs in ascending delivered cost
``energy_cost[source] + transport[source, sink]``, bounded by each source's
excess energy and each sink's spare compute capacity. Equal delivered costs
go to the lower-carbon source, then the lower node ids.

Renewable energy left over after both stages is curtailed; there is no
storage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .scenario import ExcessPolicy, Node, ScenarioConfig
from .traces import Trace

TOL = 1e-9


class InfeasibleDemandError(RuntimeError):
    """Local demand exceeds what every source together can supply."""


@dataclass(frozen=True)
class Transfer:
    source: int
    sink: int
    mw: float
    energy_cost: float  # $/MWh at the source
    transport_cost: float  # $/MWh from source to sink
    purpose: str  # "local" or "compute"

    @property
    def unit_cost(self) -> float:
        return self.energy_cost + self.transport_cost


@dataclass(frozen=True)
class NodeState:
    node: Node
    available: float  # renewable availability, or energy_capacity if dispatchable
    committed: float = 0.0  # energy already drawn from this node
    compute_placed: float = 0.0


def compute_excess(state: NodeState) -> tuple[float, float]:
    """Return ``(excess_energy, excess_compute)`` in MW for one node."""
    excess_energy = max(state.available - state.committed, 0.0)
    excess_compute = max(state.node.compute_capacity - state.compute_placed, 0.0)
    return excess_energy, excess_compute


@dataclass
class LocalDispatch:
    """State after local demand is served at one timestep."""

    t: int
    available: np.ndarray
    demand: np.ndarray
    drawn: np.ndarray  # energy drawn from each source so far
    flows: list[Transfer] = field(default_factory=list)

    def node_states(self, cfg: ScenarioConfig, compute_placed: Sequence[float] | None = None) -> list[NodeState]:
        placed = compute_placed if compute_placed is not None else [0.0] * cfg.n_nodes
        return [
            NodeState(n, float(self.available[n.id]), float(self.drawn[n.id]), float(placed[n.id]))
            for n in cfg.nodes
        ]


@dataclass
class ComputePlacement:
    demand: float
    placed: np.ndarray
    unserved: float
    flows: list[Transfer] = field(default_factory=list)


@dataclass
class DispatchRecord:
    t: int
    generation: np.ndarray  # renewable availability, or dispatched output for the slack unit
    local_demand: np.ndarray
    local_served: np.ndarray
    compute_placed: np.ndarray
    curtailed: np.ndarray
    flows: list[Transfer]
    gas_output: float
    compute_demand: float
    unserved_compute: float
    energy_cost_total: float  # $ over the step
    step_hours: float

    @property
    def transfers(self) -> list[Transfer]:
        return [f for f in self.flows if f.source != f.sink]

    @property
    def delivered_mw(self) -> float:
        return float(self.local_served.sum() + self.compute_placed.sum())

    @property
    def compute_cost(self) -> float:
        return self.step_hours * sum(f.mw * f.unit_cost for f in self.flows if f.purpose == "compute")

    def imports(self, node: int) -> float:
        return sum(f.mw for f in self.flows if f.sink == node and f.source != node)

    def exports(self, node: int) -> float:
        return sum(f.mw for f in self.flows if f.source == node and f.sink != node)


def _availability(cfg: ScenarioConfig, renewable: Sequence[float]) -> list[float]:
    return [n.energy_capacity if n.dispatchable else float(renewable[n.id]) for n in cfg.nodes]


def _pair_cost(cfg: ScenarioConfig, m: int, n: int) -> float:
    return cfg.nodes[m].energy_cost + cfg.transport[m, n]


def _route(
    cfg: ScenarioConfig,
    supply: list[float],
    room: list[float],
    total: float,
    purpose: str,
) -> tuple[list[Transfer], float]:
    """Fill sink ``room`` from ``supply`` cheapest-pair-first, up to ``total`` MW.

    The greedy pass is followed by negative-cycle canceling, which leaves a
    greedy result untouched when it is already cost-minimal and repairs the
    degenerate cases (ties, contested sinks) where it is not. Mutates
    ``supply`` and ``room``; returns the flows and the amount left.
    """
    nodes = cfg.nodes
    m_count = len(nodes)
    pairs = sorted(
        (_pair_cost(cfg, m, n), nodes[m].carbon_intensity, m, n)
        for m in range(m_count) if supply[m] > TOL
        for n in range(m_count) if room[n] > TOL
    )
    x = [[0.0] * m_count for _ in range(m_count)]
    remaining = total
    for _, _, m, n in pairs:
        if remaining <= TOL:
            break
        amount = min(supply[m], room[n], remaining)
        if amount <= TOL:
            continue
        supply[m] -= amount
        room[n] -= amount
        remaining -= amount
        x[m][n] += amount
    if len(pairs) > 1:
        _cancel_negative_cycles(cfg, x, supply, room)
    flows = [
        Transfer(m, n, x[m][n], nodes[m].energy_cost, cfg.transport[m, n], purpose)
        for m in range(m_count) for n in range(m_count) if x[m][n] > TOL
    ]
    return flows, max(remaining, 0.0)


def _cancel_negative_cycles(cfg: ScenarioConfig, x: list[list[float]], supply: list[float], room: list[float]) -> None:
    """Re-route flow ``x`` along negative-cost residual cycles until none remain.

    Residual graph: source m -> sink n at +cost (always open), sink n ->
    source m at -cost while x[m][n] > 0, plus zero-cost hubs that let a source
    with spare supply replace a used one and a sink with spare room replace
    a used one. Total flow is unchanged. Mutates all three arguments.
    """
    k = len(x)
    hub_s, hub_k = 2 * k, 2 * k + 1  # vertices: sources 0..k-1, sinks k..2k-1
    for _ in range(4 * k * k):
        edges = []
        for m in range(k):
            if supply[m] > TOL:
                edges.append((hub_s, m, 0.0, supply[m]))
            if sum(x[m]) > TOL:
                edges.append((m, hub_s, 0.0, sum(x[m])))
            for n in range(k):
                c = _pair_cost(cfg, m, n)
                edges.append((m, k + n, c, float("inf")))
                if x[m][n] > TOL:
                    edges.append((k + n, m, -c, x[m][n]))
        for n in range(k):
            if room[n] > TOL:
                edges.append((k + n, hub_k, 0.0, room[n]))
            used = sum(x[m][n] for m in range(k))
            if used > TOL:
                edges.append((hub_k, k + n, 0.0, used))
        cycle = _find_negative_cycle(2 * k + 2, edges)
        if cycle is None:
            return
        push = min(cap for _, _, _, cap in cycle)
        for u, v, _, _ in cycle:
            if u < k and k <= v < 2 * k:
                x[u][v - k] += push
            elif k <= u < 2 * k and v < k:
                x[v][u - k] -= push
            elif u == hub_s:
                supply[v] -= push
            elif v == hub_s:
                supply[u] += push
            elif v == hub_k:
                room[u - k] -= push
            elif u == hub_k:
                room[v - k] += push


def _find_negative_cycle(n_vertices: int, edges: list[tuple[int, int, float, float]]):
    dist = [0.0] * n_vertices
    pred: list[tuple[int, int, float, float] | None] = [None] * n_vertices
    last = -1
    for _ in range(n_vertices):
        last = -1
        for e in edges:
            u, v, c, _ = e
            if dist[u] + c < dist[v] - 1e-9:
                dist[v] = dist[u] + c
                pred[v] = e
                last = v
        if last < 0:
            return None
    v = last
    for _ in range(n_vertices):
        v = pred[v][0]
    cycle = []
    u = v
    while True:
        e = pred[u]
        cycle.append(e)
        u = e[0]
        if u == v:
            break
    return cycle[::-1]


def serve_local_demand(cfg: ScenarioConfig, demand: Sequence[float], renewable: Sequence[float], t: int = 0) -> LocalDispatch:
    """Serve each node's local demand, own generation first, then cheapest imports."""
    available = _availability(cfg, renewable)
    demand = [float(x) for x in demand]
    own = [min(a, x) for a, x in zip(available, demand)]
    flows = [
        Transfer(n.id, n.id, own[n.id], n.energy_cost, 0.0, "local")
        for n in cfg.nodes if own[n.id] > TOL
    ]
    supply = [a - o for a, o in zip(available, own)]
    deficit = [x - o for x, o in zip(demand, own)]
    imported, _ = _route(cfg, supply, deficit, float("inf"), "local")
    if sum(deficit) > 1e-9:
        raise InfeasibleDemandError(
            f"t={t}: {sum(deficit):.6g} MW of local demand cannot be served by any source"
        )
    flows.extend(imported)
    drawn = np.array([a - s for a, s in zip(available, supply)])
    return LocalDispatch(t, np.array(available), np.array(demand), drawn, flows)


def place_compute(cfg: ScenarioConfig, local: LocalDispatch, compute_demand: float) -> ComputePlacement:
    """Place ``compute_demand`` MW on the cheapest (energy, compute) pairs.

    Mirrors the "while low-cost excess remains" loop: every pass recomputes
    each node's excess energy and spare compute, then moves load onto the
    cheapest pair. The slack unit takes part like any other source.
    """
    placed = [0.0] * cfg.n_nodes
    drawn = local.drawn.tolist()
    available = local.available.tolist()
    flows: list[Transfer] = []
    remaining = float(compute_demand)
    while remaining > TOL:
        excess = [compute_excess(NodeState(n, available[n.id], drawn[n.id], placed[n.id])) for n in cfg.nodes]
        supply = [e for e, _ in excess]
        room = [c for _, c in excess]
        step_flows, left = _route(cfg, supply, room, remaining, "compute")
        if not step_flows:
            break
        for f in step_flows:
            placed[f.sink] += f.mw
            drawn[f.source] += f.mw
        flows.extend(step_flows)
        remaining = left
    return ComputePlacement(float(compute_demand), np.array(placed), max(remaining, 0.0), _merge(flows))


def _merge(flows: Iterable[Transfer]) -> list[Transfer]:
    merged: dict[tuple[int, int, str], Transfer] = {}
    for f in flows:
        key = (f.source, f.sink, f.purpose)
        if key in merged:
            g = merged[key]
            merged[key] = Transfer(f.source, f.sink, g.mw + f.mw, f.energy_cost, f.transport_cost, f.purpose)
        else:
            merged[key] = f
    return list(merged.values())


def book_record(
    cfg: ScenarioConfig,
    local: LocalDispatch,
    compute_flows: list[Transfer],
    compute_demand: float,
) -> DispatchRecord:
    """Assemble the full timestep record from local and compute flows."""
    flows = local.flows + compute_flows
    m = cfg.n_nodes
    local_served = [0.0] * m
    placed = [0.0] * m
    drawn = [0.0] * m
    cost = 0.0
    for f in flows:
        drawn[f.source] += f.mw
        if f.purpose == "local":
            local_served[f.sink] += f.mw
        else:
            placed[f.sink] += f.mw
        cost += f.mw * f.unit_cost
    available = local.available.tolist()
    generation = [drawn[n.id] if n.dispatchable else available[n.id] for n in cfg.nodes]
    curtailed = [0.0 if n.dispatchable else max(available[n.id] - drawn[n.id], 0.0) for n in cfg.nodes]
    gas_output = sum(drawn[n.id] for n in cfg.nodes if n.dispatchable)
    unserved = max(compute_demand - sum(placed), 0.0)
    return DispatchRecord(
        t=local.t,
        generation=np.array(generation),
        local_demand=local.demand,
        local_served=np.array(local_served),
        compute_placed=np.array(placed),
        curtailed=np.array(curtailed),
        flows=flows,
        gas_output=gas_output,
        compute_demand=float(compute_demand),
        unserved_compute=unserved,
        energy_cost_total=cost * cfg.step_hours,
        step_hours=cfg.step_hours,
    )


def run_trace(cfg: ScenarioConfig, trace: Trace) -> list[DispatchRecord]:
    """Greedy dispatch over every timestep of ``trace``.

    Unplaced compute is dropped under the shed policy and carried into the
    next step's demand under rollover; the queue starts empty each trace.
    """
    records = []
    queue = 0.0
    rollover = cfg.excess_policy is ExcessPolicy.ROLLOVER
    demand_cols = trace.local_demand.T.tolist()
    renew_cols = trace.renewable_availability.T.tolist()
    for t in range(trace.horizon_steps):
        local = serve_local_demand(cfg, demand_cols[t], renew_cols[t], t)
        demand = float(trace.compute_arrivals[t]) + queue
        placement = place_compute(cfg, local, demand)
        rec = book_record(cfg, local, placement.flows, demand)
        queue = rec.unserved_compute if rollover else 0.0
        records.append(rec)
    return records


DISPATCH_CSV_COLUMNS = (
    "trace_id", "t", "node_id", "generation_mw", "local_served_mw",
    "compute_placed_mw", "curtailed_mw", "gas_output_mw", "cost_usd",
)


def node_costs(rec: DispatchRecord, n_nodes: int) -> np.ndarray:
    """Dollar cost of the step attributed to the consuming node."""
    out = np.zeros(n_nodes)
    for f in rec.flows:
        out[f.sink] += f.mw * f.unit_cost * rec.step_hours
    return out


def write_dispatch_csv(rows: Iterable[tuple[int, list[DispatchRecord]]], fh: TextIO, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(DISPATCH_CSV_COLUMNS)
    for trace_id, records in rows:
        for rec in records:
            m = len(rec.generation)
            costs = node_costs(rec, m)
            for i in range(m):
                w.writerow((
                    trace_id, rec.t, i,
                    repr(float(rec.generation[i])), repr(float(rec.local_served[i])),
                    repr(float(rec.compute_placed[i])), repr(float(rec.curtailed[i])),
                    repr(rec.gas_output), repr(float(costs[i])),
                ))
