"""Scenario data model, loading and validation.

A scenario file is JSON. Units: power in MW, energy cost in $/MWh, carbon
intensity in lb CO2/kWh, time in minutes. See ``docs/scenario_schema.md``
for the field reference.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

DEFAULT_TRANSPORT_COST = 40.0
DEFAULT_LOCAL_DEMAND = 40.0


class ScenarioError(Exception):
    """Base class for scenario problems (exit code 1 in the CLI)."""


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = [f"{v.path}: {v.message} [{v.code}]" for v in self.violations]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))


class NodeKind(str, Enum):
    SOLAR = "solar"
    WIND = "wind"
    GAS = "gas"


class BidFormat(str, Enum):
    OFF = "off"
    MERIT = "merit"
    PLSF = "plsf"


class ExcessPolicy(str, Enum):
    SHED = "shed"
    ROLLOVER = "rollover"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    energy_capacity: float
    compute_capacity: float
    energy_cost: float
    carbon_intensity: float = 0.0
    dispatchable: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.dispatchable is None:
            object.__setattr__(self, "dispatchable", self.kind is NodeKind.GAS)


@dataclass(frozen=True)
class TransportCostMatrix:
    cost: tuple[tuple[float, ...], ...]

    @classmethod
    def flat(cls, n: int, value: float = DEFAULT_TRANSPORT_COST) -> "TransportCostMatrix":
        return cls(tuple(tuple(0.0 if i == j else float(value) for j in range(n)) for i in range(n)))

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        return self.cost[i][j]

    def __len__(self) -> int:
        return len(self.cost)


@dataclass(frozen=True)
class MarketConfig:
    """Spot HPC market settings.

    ``bid_format`` ``off`` runs the greedy placement only; ``merit`` and
    ``plsf`` clear compute through the market. ``excess_policy`` also governs
    unplaced compute in greedy mode. ``price_tick`` is the price resolution
    in $/MWh; it must be ``1/n`` for a whole ``n``, or 0 for continuous prices.
    """

    theta: float = 100.0
    bid_format: BidFormat = BidFormat.OFF
    excess_policy: ExcessPolicy = ExcessPolicy.SHED
    price_tick: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "bid_format", BidFormat(self.bid_format))
        object.__setattr__(self, "excess_policy", ExcessPolicy(self.excess_policy))

    @property
    def enabled(self) -> bool:
        return self.bid_format is not BidFormat.OFF

    @property
    def ticks_per_dollar(self) -> int:
        """``1 / price_tick`` as an integer; 0 means continuous prices."""
        return round(1.0 / self.price_tick) if self.price_tick > 0 else 0


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple[Node, ...]
    transport: TransportCostMatrix
    walk_sigma: float = 5.0
    step_minutes: float = 5.0
    horizon_steps: int = 288
    initial_demand: tuple[float, ...] | None = None
    initial_generation: tuple[float, ...] | None = None
    initial_compute_demand: float | None = None
    compute_upper: float | None = None
    master_seed: int = 0
    market: MarketConfig = field(default_factory=MarketConfig)
    name: str = "scenario"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def excess_policy(self) -> ExcessPolicy:
        return self.market.excess_policy

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def total_compute_capacity(self) -> float:
        return sum(n.compute_capacity for n in self.nodes)

    def resolved(self) -> "ScenarioConfig":
        """Return a copy with every optional default materialized."""
        init_demand = self.initial_demand
        if init_demand is None:
            init_demand = tuple(DEFAULT_LOCAL_DEMAND for _ in self.nodes)
        init_gen = self.initial_generation
        if init_gen is None:
            init_gen = tuple(0.5 * n.energy_capacity for n in self.nodes)
        compute0 = self.initial_compute_demand
        if compute0 is None:
            compute0 = self.total_compute_capacity
        upper = self.compute_upper
        if upper is None:
            upper = 2.0 * self.total_compute_capacity
        return dataclasses.replace(
            self,
            initial_demand=tuple(float(x) for x in init_demand),
            initial_generation=tuple(float(x) for x in init_gen),
            initial_compute_demand=float(compute0),
            compute_upper=float(upper),
        )

    def with_compute_capacities(self, capacities: Sequence[float]) -> "ScenarioConfig":
        nodes = tuple(
            dataclasses.replace(n, compute_capacity=float(c)) for n, c in zip(self.nodes, capacities)
        )
        return dataclasses.replace(self, nodes=nodes)

    def with_market(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, market=dataclasses.replace(self.market, **changes))


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str


def validate_scenario(cfg: ScenarioConfig) -> list[Violation]:
    """Collect every invariant violation in ``cfg``; an empty list means valid."""
    out: list[Violation] = []

    def bad(code: str, path: str, message: str) -> None:
        out.append(Violation(code, path, message))

    if not cfg.nodes:
        bad("nodes.empty", "nodes", "at least one node is required")
    for i, node in enumerate(cfg.nodes):
        if node.id != i:
            bad("node.id_order", f"nodes[{i}].id", f"node id {node.id} must equal its position {i}")
        for attr in ("energy_capacity", "compute_capacity", "energy_cost", "carbon_intensity"):
            value = getattr(node, attr)
            if not math.isfinite(value) or value < 0:
                bad(f"node.negative_{attr}", f"nodes[{i}].{attr}", f"must be finite and >= 0, got {value}")

    m = len(cfg.nodes)
    cost = cfg.transport.cost
    if len(cost) != m or any(len(row) != m for row in cost):
        bad("transport.shape", "transport", f"matrix must be {m}x{m}")
    else:
        for i in range(m):
            if cost[i][i] != 0:
                bad("transport.nonzero_diagonal", f"transport[{i}][{i}]", "diagonal must be zero")
            for j in range(m):
                if cost[i][j] < 0 or not math.isfinite(cost[i][j]):
                    bad("transport.negative", f"transport[{i}][{j}]", "cost must be finite and >= 0")
        if any(cost[i][j] != cost[j][i] for i in range(m) for j in range(i + 1, m)):
            bad("transport.not_symmetric", "transport", "matrix must be symmetric")

    if cfg.horizon_steps < 1:
        bad("horizon.empty", "horizon_steps", "must be >= 1")
    if not cfg.step_minutes > 0:
        bad("step.nonpositive", "step_minutes", "must be > 0")
    if not cfg.walk_sigma >= 0:
        bad("sigma.negative", "walk_sigma", "must be >= 0")
    if not 0 <= cfg.master_seed < 2**64:
        bad("seed.range", "master_seed", "must be a 64-bit unsigned integer")
    if cfg.market.theta < 0 or not math.isfinite(cfg.market.theta):
        bad("market.negative_theta", "market.theta", "must be finite and >= 0")
    tick = cfg.market.price_tick
    if not (tick == 0 or (0 < tick <= 1 and abs(1.0 / tick - round(1.0 / tick)) < 1e-9 * (1.0 / tick))):
        bad("market.price_tick", "market.price_tick", "must be 0 or 1/n for a whole n (e.g. 0.01)")

    for name in ("initial_demand", "initial_generation"):
        values = getattr(cfg, name)
        if values is None:
            continue
        if len(values) != m:
            bad(f"{name}.length", name, f"needs one value per node ({m})")
            continue
        for i, v in enumerate(values):
            if v < 0:
                bad(f"{name}.negative", f"{name}[{i}]", "must be >= 0")
    if cfg.initial_generation is not None and len(cfg.initial_generation) == m:
        for i, (v, node) in enumerate(zip(cfg.initial_generation, cfg.nodes)):
            if not node.dispatchable and v > node.energy_capacity:
                bad("initial_generation.above_capacity", f"initial_generation[{i}]",
                    "renewable start exceeds energy_capacity")
    if cfg.initial_compute_demand is not None and cfg.initial_compute_demand < 0:
        bad("initial_compute_demand.negative", "initial_compute_demand", "must be >= 0")
    if cfg.compute_upper is not None:
        if cfg.compute_upper < 0:
            bad("compute_upper.negative", "compute_upper", "must be >= 0")
        start = cfg.initial_compute_demand
        if start is None:
            start = cfg.total_compute_capacity
        if start > cfg.compute_upper:
            bad("compute_upper.below_start", "compute_upper", "must be >= initial_compute_demand")
    return out


def check_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    """Raise :class:`ScenarioValidationError` unless ``cfg`` is valid."""
    violations = validate_scenario(cfg)
    if violations:
        raise ScenarioValidationError(violations)
    return cfg


def _as_float_tuple(value: Any, path: str) -> tuple[float, ...] | None:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ScenarioParseError(f"{path}: expected an array")
    return tuple(float(v) for v in value)


def scenario_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    """Build a config from parsed JSON, apply defaults and validate."""
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario root must be an object")
    try:
        nodes = tuple(
            Node(
                id=int(raw.get("id", i)),
                kind=NodeKind(raw["kind"]),
                energy_capacity=float(raw["energy_capacity"]),
                compute_capacity=float(raw.get("compute_capacity", 0.0)),
                energy_cost=float(raw["energy_cost"]),
                carbon_intensity=float(raw.get("carbon_intensity", 0.0)),
                dispatchable=raw.get("dispatchable"),
            )
            for i, raw in enumerate(data["nodes"])
        )
    except KeyError as exc:
        raise ScenarioParseError(f"nodes: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(f"nodes: {exc}") from None

    raw_t = data.get("transport", {})
    if isinstance(raw_t, (int, float)):
        raw_t = {"default_cost": raw_t}
    if "matrix" in raw_t:
        transport = TransportCostMatrix(tuple(tuple(float(x) for x in row) for row in raw_t["matrix"]))
    else:
        transport = TransportCostMatrix.flat(len(nodes), float(raw_t.get("default_cost", DEFAULT_TRANSPORT_COST)))

    raw_m = dict(data.get("market", {}))
    if "excess_policy" in data:
        raw_m.setdefault("excess_policy", data["excess_policy"])
    try:
        market = MarketConfig(
            theta=float(raw_m.get("theta", 100.0)),
            bid_format=BidFormat(raw_m.get("bid_format", "off")),
            excess_policy=ExcessPolicy(raw_m.get("excess_policy", "shed")),
            price_tick=float(raw_m.get("price_tick", 0.01)),
        )
        cfg = ScenarioConfig(
            nodes=nodes,
            transport=transport,
            walk_sigma=float(data.get("walk_sigma", 5.0)),
            step_minutes=float(data.get("step_minutes", 5.0)),
            horizon_steps=int(data.get("horizon_steps", 288)),
            initial_demand=_as_float_tuple(data.get("initial_demand"), "initial_demand"),
            initial_generation=_as_float_tuple(data.get("initial_generation"), "initial_generation"),
            initial_compute_demand=_opt_float(data.get("initial_compute_demand")),
            compute_upper=_opt_float(data.get("compute_upper")),
            master_seed=int(data.get("master_seed", 0)),
            market=market,
            name=str(data.get("name", "scenario")),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(str(exc)) from None
    # Validate before resolving so length errors surface instead of zip truncation.
    check_scenario(cfg)
    return check_scenario(cfg.resolved())


def _opt_float(value: Any) -> float | None:
    return None if value is None else float(value)


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return {
        "name": cfg.name,
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind.value,
                "energy_capacity": n.energy_capacity,
                "compute_capacity": n.compute_capacity,
                "energy_cost": n.energy_cost,
                "carbon_intensity": n.carbon_intensity,
                "dispatchable": n.dispatchable,
            }
            for n in cfg.nodes
        ],
        "transport": {"matrix": [list(row) for row in cfg.transport.cost]},
        "walk_sigma": cfg.walk_sigma,
        "step_minutes": cfg.step_minutes,
        "horizon_steps": cfg.horizon_steps,
        "initial_demand": None if cfg.initial_demand is None else list(cfg.initial_demand),
        "initial_generation": None if cfg.initial_generation is None else list(cfg.initial_generation),
        "initial_compute_demand": cfg.initial_compute_demand,
        "compute_upper": cfg.compute_upper,
        "master_seed": cfg.master_seed,
        "market": {
            "theta": cfg.market.theta,
            "bid_format": cfg.market.bid_format.value,
            "excess_policy": cfg.market.excess_policy.value,
            "price_tick": cfg.market.price_tick,
        },
    }


def builtin_scenarios() -> list[str]:
    root = resources.files("gridspin") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """Map a shipped scenario name (``case_a``) or a file path to a path."""
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = resources.files("gridspin") / "scenarios" / f"{name_or_path}.json"
    if candidate.is_file():
        return Path(str(candidate))
    raise ScenarioParseError(f"no such scenario file or shipped scenario: {name_or_path}")


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = resolve_scenario_path(path)
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: malformed JSON: {exc}") from None
    return scenario_from_dict(data)


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")
