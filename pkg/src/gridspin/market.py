"""Spot market for HPC capacity with consumer-side price selection.

At each step every HPC provider posts a supply curve. The compute consumer
picks the uniform price ``p >= 0`` minimizing

    p * q(p) + theta * max(d - q(p), 0),   q(p) = min(d, sum_i s_i(p)),

i.e. what it pays for the capacity it takes plus a penalty ``theta`` per MW
left unserved. Curves are either merit-order steps (nothing below the
supplier's cost, everything at or above it) or piecewise-linear ramps from
zero at ``p = 0`` to full capacity at the supplier's cost.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, TextIO

import numpy as np

from .dispatch import DispatchRecord, LocalDispatch, Transfer, book_record, compute_excess, serve_local_demand
from .scenario import BidFormat, ExcessPolicy, MarketConfig, ScenarioConfig
from .traces import Trace

_REL_TIE = 1e-12


class CurveKind(str, Enum):
    MERIT_STEP = "merit_step"
    PLSF_RAMP = "plsf_ramp"


@dataclass(frozen=True)
class SupplyCurve:
    supplier_id: int
    kind: CurveKind
    marginal_cost: float
    max_capacity: float

    def quantity(self, p: float) -> float:
        if p < 0 or self.max_capacity <= 0:
            return 0.0
        if self.kind is CurveKind.MERIT_STEP:
            return self.max_capacity if p >= self.marginal_cost else 0.0
        if p >= self.marginal_cost:
            return self.max_capacity
        return self.max_capacity * p / self.marginal_cost


@dataclass
class MarketOutcome:
    t: int
    price: float
    demand: float
    quantities: np.ndarray
    served: float
    shortfall: float
    payment: float
    queue_after: float = 0.0
    shed: float = 0.0
    supplier_ids: tuple[int, ...] = field(default=())


def total_supply(curves: Sequence[SupplyCurve], p: float) -> float:
    return sum(c.quantity(p) for c in curves)


def eval_objective(p: float, curves: Sequence[SupplyCurve], d: float, theta: float) -> float:
    q = min(d, total_supply(curves, p))
    return p * q + theta * max(d - q, 0.0)


def _candidate_prices(curves: Sequence[SupplyCurve], d: float, theta: float) -> list[float]:
    """Prices that can minimize the objective on ``[0, theta]``.

    On each interval between consecutive supplier costs, total supply is
    affine, ``alpha + beta * p``. The objective is then ``p * d`` once supply
    covers ``d`` and the convex quadratic ``beta p^2 + (alpha - theta beta) p
    + theta d`` before that, so only interval ends, the coverage crossing and
    the quadratic's vertex need checking.
    """
    live = [c for c in curves if c.max_capacity > 0]
    bps = sorted({0.0, theta, *(c.marginal_cost for c in live if 0.0 <= c.marginal_cost <= theta)})
    out = list(bps)
    for a, b in zip(bps, bps[1:]):
        alpha = 0.0
        beta = 0.0
        for c in live:
            if c.marginal_cost <= a:
                alpha += c.max_capacity
            elif c.kind is CurveKind.PLSF_RAMP:
                beta += c.max_capacity / c.marginal_cost
        if beta <= 0:
            continue
        for p in ((d - alpha) / beta, (theta * beta - alpha) / (2.0 * beta)):
            if a < p < b:
                out.append(p)
    return out


def _snap_to_grid(prices: Sequence[float], theta: float, ticks_per_dollar: int) -> list[float]:
    """Grid prices next to each continuous candidate.

    Between consecutive candidates the objective is convex, so its minimum
    over grid prices sits on a grid point adjacent to a candidate.
    """
    n = ticks_per_dollar
    top = math.floor(theta * n + 1e-9)
    ks = set()
    for x in prices:
        k = math.floor(x * n + 1e-9)
        ks.update(j for j in (k - 1, k, k + 1, k + 2) if 0 <= j <= top)
    return [k / n for k in sorted(ks)]


def dispatch_at(curves: Sequence[SupplyCurve], p: float, d: float) -> np.ndarray:
    """Split ``min(d, S(p))`` across suppliers: cheapest first, pro-rata in ties."""
    offered = [c.quantity(p) for c in curves]
    take = [0.0] * len(curves)
    remaining = min(d, sum(offered))
    for cost in sorted({c.marginal_cost for c in curves}):
        if remaining <= 0:
            break
        tier = [i for i, c in enumerate(curves) if c.marginal_cost == cost and offered[i] > 0]
        tier_total = sum(offered[i] for i in tier)
        if tier_total <= 0:
            continue
        share = min(1.0, remaining / tier_total)
        for i in tier:
            take[i] = offered[i] * share
        remaining = max(remaining - tier_total, 0.0)
    return np.array(take)


def select_price(
    curves: Sequence[SupplyCurve],
    d: float,
    theta: float,
    t: int = 0,
    hours: float = 1.0,
    ticks_per_dollar: int = 0,
) -> tuple[float, MarketOutcome]:
    """Exact minimizer of the consumer objective.

    With ``ticks_per_dollar`` = n > 0 prices are restricted to multiples of
    ``1/n`` in ``[0, theta]``; 0 searches all real prices. Ties go to the
    lowest price, then to the larger served quantity. ``payment`` is
    ``price * served * hours``.
    """
    if d < 0:
        raise ValueError("demand must be >= 0")
    prices = _candidate_prices(curves, d, theta)
    if ticks_per_dollar > 0:
        prices = _snap_to_grid(prices, theta, ticks_per_dollar)
    scored = []
    for p in prices:
        served = min(d, total_supply(curves, p))
        scored.append((p * served + theta * max(d - served, 0.0), p, served))
    best = min(f for f, _, _ in scored)
    tol = _REL_TIE * max(1.0, abs(best))
    ties = [(p, -served) for f, p, served in scored if f <= best + tol]
    price, _ = min(ties)
    quantities = dispatch_at(curves, price, d)
    served = float(quantities.sum())
    outcome = MarketOutcome(
        t=t,
        price=price,
        demand=d,
        quantities=quantities,
        served=served,
        shortfall=max(d - served, 0.0),
        payment=price * served * hours,
        supplier_ids=tuple(c.supplier_id for c in curves),
    )
    return price, outcome


def build_supply_curves(cfg: ScenarioConfig, local: LocalDispatch) -> list[SupplyCurve]:
    """One curve per node, capped by its spare energy and its HPC capacity.

    Renewable HPC runs only on co-located energy that would otherwise be
    curtailed; the dispatchable unit always bids a merit step.
    """
    bid = cfg.market.bid_format
    renewable_kind = CurveKind.PLSF_RAMP if bid is BidFormat.PLSF else CurveKind.MERIT_STEP
    curves = []
    for state in local.node_states(cfg):
        excess_energy, excess_compute = compute_excess(state)
        node = state.node
        curves.append(SupplyCurve(
            supplier_id=node.id,
            kind=CurveKind.MERIT_STEP if node.dispatchable else renewable_kind,
            marginal_cost=node.energy_cost,
            max_capacity=min(excess_compute, excess_energy),
        ))
    return curves


def step_market(
    queue_in: float,
    arrivals: float,
    curves: Sequence[SupplyCurve],
    market: MarketConfig,
    t: int = 0,
    hours: float = 1.0,
) -> tuple[MarketOutcome, float]:
    """Clear one step; returns the outcome and the queue carried forward."""
    d = arrivals + queue_in
    _, outcome = select_price(curves, d, market.theta, t=t, hours=hours, ticks_per_dollar=market.ticks_per_dollar)
    if market.excess_policy is ExcessPolicy.ROLLOVER:
        outcome.queue_after = outcome.shortfall
    else:
        outcome.shed = outcome.shortfall
    return outcome, outcome.queue_after


def run_market_trace(cfg: ScenarioConfig, trace: Trace) -> tuple[list[DispatchRecord], list[MarketOutcome]]:
    """Serve local demand, then sell all HPC capacity through the market.

    Each supplier's sold capacity is booked as compute running on its own
    node's energy. The rollover queue starts empty for every trace.
    """
    records: list[DispatchRecord] = []
    outcomes: list[MarketOutcome] = []
    queue = 0.0
    demand_cols = trace.local_demand.T.tolist()
    renew_cols = trace.renewable_availability.T.tolist()
    for t in range(trace.horizon_steps):
        local = serve_local_demand(cfg, demand_cols[t], renew_cols[t], t)
        curves = build_supply_curves(cfg, local)
        outcome, queue = step_market(queue, float(trace.compute_arrivals[t]), curves, cfg.market, t, cfg.step_hours)
        flows = [
            Transfer(c.supplier_id, c.supplier_id, float(q), cfg.nodes[c.supplier_id].energy_cost, 0.0, "compute")
            for c, q in zip(curves, outcome.quantities) if q > 0
        ]
        records.append(book_record(cfg, local, flows, outcome.demand))
        outcomes.append(outcome)
    return records, outcomes


def market_csv_columns(n_suppliers: int) -> tuple[str, ...]:
    return (
        "trace_id", "t", "price", "demand_mw", "served_mw", "shortfall_mw", "payment_usd", "queue_mw",
        *(f"q{i}_mw" for i in range(n_suppliers)),
    )


def write_market_csv(rows: Iterable[tuple[int, list[MarketOutcome]]], fh: TextIO, n_suppliers: int, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(market_csv_columns(n_suppliers))
    for trace_id, outcomes in rows:
        for o in outcomes:
            w.writerow((
                trace_id, o.t, repr(o.price), repr(o.demand), repr(o.served), repr(o.shortfall),
                repr(o.payment), repr(o.queue_after), *(repr(float(q)) for q in o.quantities),
            ))


def conservation_gap(arrivals: Sequence[float], outcomes: Sequence[MarketOutcome]) -> float:
    """``sum(arrivals) - (served + shed + final queue)``; zero up to rounding."""
    final_queue = outcomes[-1].queue_after if outcomes else 0.0
    return math.fsum(arrivals) - math.fsum([o.served for o in outcomes] + [o.shed for o in outcomes] + [final_queue])
