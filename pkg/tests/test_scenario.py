import dataclasses
import json

import pytest
from hypothesis import given, strategies as st

from conftest import three_node
from gridspin.scenario import (
    BidFormat,
    ExcessPolicy,
    ScenarioParseError,
    ScenarioValidationError,
    TransportCostMatrix,
    builtin_scenarios,
    load_scenario,
    resolve_scenario_path,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)


def test_shipped_scenarios_listed():
    assert {"case_a", "case_b", "sweep"} <= set(builtin_scenarios())


def test_case_a_values(case_a):
    assert [n.kind.value for n in case_a.nodes] == ["solar", "wind", "gas"]
    assert [n.energy_cost for n in case_a.nodes] == [10.0, 20.0, 50.0]
    assert [n.compute_capacity for n in case_a.nodes] == [0.0, 0.0, 100.0]
    assert case_a.transport[0, 2] == 40.0
    assert case_a.transport[1, 1] == 0.0
    assert [n.dispatchable for n in case_a.nodes] == [False, False, True]


def test_case_b_adds_distributed_hpc(case_b):
    assert [n.compute_capacity for n in case_b.nodes] == [33.0, 33.0, 100.0]


def test_case_a_validates_clean(case_a):
    assert validate_scenario(case_a) == []


def test_negative_energy_cost_rejected(tmp_path, case_a):
    data = scenario_to_dict(case_a)
    data["nodes"][0]["energy_cost"] = -1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(path)
    assert "nodes[0].energy_cost" in str(err.value)


def test_asymmetric_transport_single_violation(case_a):
    m = [list(r) for r in case_a.transport.cost]
    m[0][1] = 41.0
    cfg = dataclasses.replace(case_a, transport=TransportCostMatrix(tuple(map(tuple, m))))
    assert [v.code for v in validate_scenario(cfg)] == ["transport.not_symmetric"]


def test_empty_horizon_single_violation(case_a):
    cfg = dataclasses.replace(case_a, horizon_steps=0)
    assert [v.code for v in validate_scenario(cfg)] == ["horizon.empty"]


def test_malformed_file_is_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioParseError):
        load_scenario(path)


def test_missing_field_is_parse_error():
    with pytest.raises(ScenarioParseError):
        scenario_from_dict({"nodes": [{"id": 0, "kind": "solar"}]})


def test_unknown_name_is_parse_error():
    with pytest.raises(ScenarioParseError):
        resolve_scenario_path("no_such_scenario")


def test_transport_forms_equivalent(case_a):
    base = scenario_to_dict(case_a)
    scalar = dict(base, transport=40.0)
    default = dict(base, transport={"default_cost": 40.0})
    assert scenario_from_dict(scalar) == scenario_from_dict(default) == scenario_from_dict(base)


def test_defaults_materialized():
    cfg = three_node().resolved()
    assert cfg.initial_demand == (40.0, 40.0, 40.0)
    assert cfg.initial_generation == (75.0, 75.0, 250.0)
    assert cfg.initial_compute_demand == 100.0
    assert cfg.compute_upper == 200.0
    assert cfg.market.bid_format is BidFormat.OFF
    assert cfg.market.excess_policy is ExcessPolicy.SHED
    assert cfg.step_hours == pytest.approx(5 / 60)


def test_generation_above_capacity_flagged():
    cfg = three_node(initial_generation=(200.0, 10.0, 10.0))
    assert "initial_generation.above_capacity" in [v.code for v in validate_scenario(cfg)]


def test_compute_upper_below_start_flagged():
    cfg = three_node(initial_compute_demand=80.0, compute_upper=50.0)
    assert "compute_upper.below_start" in [v.code for v in validate_scenario(cfg)]


@pytest.mark.parametrize("tick,ok", [(0.0, True), (0.01, True), (0.25, True), (1.0, True), (0.03, False), (-0.01, False), (2.0, False)])
def test_price_tick_validation(tick, ok):
    cfg = three_node().with_market(price_tick=tick)
    assert ("market.price_tick" not in [v.code for v in validate_scenario(cfg)]) is ok


@given(
    caps=st.tuples(*[st.floats(0, 200, allow_nan=False)] * 3),
    transport=st.floats(0, 100, allow_nan=False),
    theta=st.floats(0, 500, allow_nan=False),
    bid=st.sampled_from(list(BidFormat)),
    policy=st.sampled_from(list(ExcessPolicy)),
    tick=st.sampled_from([0.0, 0.01, 0.5]),
    seed=st.integers(0, 2**32 - 1),
)
def test_save_load_round_trip(tmp_path_factory, caps, transport, theta, bid, policy, tick, seed):
    cfg = three_node(caps, transport, master_seed=seed).with_market(
        theta=theta, bid_format=bid, excess_policy=policy, price_tick=tick
    ).resolved()
    path = tmp_path_factory.mktemp("rt") / "cfg.json"
    save_scenario(cfg, path)
    assert load_scenario(path) == cfg
