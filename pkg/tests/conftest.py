import os

import pytest
from hypothesis import settings

from gridspin.scenario import (
    MarketConfig, Node, ScenarioConfig, TransportCostMatrix, load_scenario, resolve_scenario_path,
)

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def three_node(compute=(0.0, 0.0, 100.0), transport=40.0, **kw):
    nodes = (
        Node(0, "solar", 150.0, compute[0], 10.0, 0.0),
        Node(1, "wind", 150.0, compute[1], 20.0, 0.0),
        Node(2, "gas", 500.0, compute[2], 50.0, 0.91),
    )
    return ScenarioConfig(nodes, TransportCostMatrix.flat(3, transport), **kw)


@pytest.fixture
def case_a():
    return load_scenario(resolve_scenario_path("case_a"))


@pytest.fixture
def case_b():
    return load_scenario(resolve_scenario_path("case_b"))


@pytest.fixture
def small_cfg():
    return three_node(horizon_steps=24, master_seed=3, initial_compute_demand=50.0, compute_upper=100.0).resolved()


__all__ = ["three_node", "MarketConfig"]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
