import csv
import dataclasses
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import three_node
from gridspin.metrics import (
    ADDITIVE,
    CONSTANT_TOTAL,
    DegenerateGroupError,
    SUMMARY_COLUMNS,
    SweepSpecError,
    level_config,
    normalize_by_max,
    run_ensemble,
    simulate,
    summary_row,
    sweep_distribution,
    trace_metrics,
    write_summary_csv,
)


def test_normalize_examples():
    out = normalize_by_max({"a": [2, 4, 8], "b": [5, 5], "c": [1, 3]})
    assert out["a"].tolist() == [0.25, 0.5, 1.0]
    assert out["b"].tolist() == [1.0, 1.0]
    assert out["c"].max() == 1.0


def test_normalize_degenerate():
    with pytest.raises(DegenerateGroupError):
        normalize_by_max({"z": [0.0, 0.0]})


@given(st.dictionaries(st.text(min_size=1, max_size=3),
                       st.lists(st.floats(0, 1e6), min_size=1, max_size=8).filter(lambda v: max(v) > 0),
                       min_size=1, max_size=4))
def test_normalize_properties(table):
    out = normalize_by_max(table)
    for name, values in out.items():
        assert values.max() == 1.0
        assert (values >= 0).all() and (values <= 1.0).all()
        assert np.allclose(values * max(table[name]), table[name])


def test_constant_total_level_30(case_a):
    cfg = level_config(case_a, 30, CONSTANT_TOTAL)
    assert [n.compute_capacity for n in cfg.nodes] == [30.0, 30.0, 40.0]


def test_constant_total_over_budget(case_a):
    with pytest.raises(SweepSpecError):
        level_config(case_a, 60, CONSTANT_TOTAL)


def test_unknown_mode(case_a):
    with pytest.raises(SweepSpecError):
        level_config(case_a, 10, "sideways")


def test_additive_levels(case_a, case_b):
    assert level_config(case_a, 0, ADDITIVE) == case_a
    assert [n.compute_capacity for n in level_config(case_a, 33, ADDITIVE).nodes] == \
        [n.compute_capacity for n in case_b.nodes]


def test_single_deterministic_trace():
    cfg = three_node((10, 10, 60), walk_sigma=0.0, horizon_steps=12, initial_compute_demand=50.0).resolved()
    s = run_ensemble(cfg, 1)
    m = trace_metrics(cfg, simulate(cfg, 0))
    assert s.coe == m.coe and s.gas_peak == m.gas_peak and s.curtailed == m.curtailed_mw
    assert s.ci["coe"] == 0.0


def test_unit_cost_absent_without_service():
    cfg = three_node((0, 0, 0), horizon_steps=12).resolved()
    cfg = dataclasses.replace(cfg, initial_compute_demand=0.0)
    s = run_ensemble(cfg, 2)
    assert s.compute_served == 0.0 and s.unit_cost is None
    row = summary_row(cfg, s)
    assert row["unit_cost_usd_per_mwh"] == ""


def test_summary_invariants(small_cfg):
    for cfg in (small_cfg, small_cfg.with_market(bid_format="merit")):
        s = run_ensemble(cfg, 6)
        assert s.gas_peak >= s.gas_mean >= 0
        assert s.curtail_after_hpc == s.curtailed
        assert s.unit_cost == pytest.approx(s.total_cost / s.compute_served)
        assert s.max_node_imbalance <= 1e-9 and s.max_compute_imbalance <= 1e-9


def test_ensemble_order_and_jobs_independent(small_cfg):
    one = run_ensemble(small_cfg, 6, jobs=1)
    two = run_ensemble(small_cfg, 6, jobs=2)
    assert one.per_trace == two.per_trace
    assert [m.trace_id for m in one.per_trace] == list(range(6))


def test_mean_and_ci_match_numpy(small_cfg):
    s = run_ensemble(small_cfg, 8)
    coe = np.array([m.coe for m in s.per_trace])
    assert s.coe == pytest.approx(coe.mean(), rel=1e-15)
    assert s.ci["coe"] == pytest.approx(1.959964 * coe.std(ddof=1) / math.sqrt(8), rel=1e-6)


def test_stderr_shrinks_with_more_traces():
    cfg = three_node((20, 20, 100), horizon_steps=48, master_seed=11, initial_compute_demand=50.0,
                     compute_upper=100.0).resolved()
    small, big = run_ensemble(cfg, 100), run_ensemble(cfg, 400)
    for name in ("coe", "gas_peak", "curtailed_mw"):
        ratio = small.ci[name] / big.ci[name]
        assert 1.6 < ratio < 2.5, (name, ratio)


def test_sweep_distribution_levels(case_a):
    cfg = dataclasses.replace(case_a, horizon_steps=24)
    points = sweep_distribution(cfg, [0, 30], 3, CONSTANT_TOTAL)
    assert [p.capacities for p in points] == [(0.0, 0.0, 100.0), (30.0, 30.0, 40.0)]


def test_summary_csv_columns(small_cfg):
    s = run_ensemble(small_cfg, 2)
    buf = io.StringIO()
    write_summary_csv([summary_row(small_cfg, s, ADDITIVE, 0.0)], buf)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert float(rows[0]["coe_usd_per_mwh"]) == s.coe
