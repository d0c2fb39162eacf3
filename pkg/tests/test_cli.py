import csv
import json
from pathlib import Path

import pytest

from gridspin.cli import apply_overrides, build_parser, main
from gridspin.metrics import SUMMARY_COLUMNS
from gridspin.scenario import load_scenario, resolve_scenario_path, save_scenario, scenario_to_dict

FAST = ["--traces", "2", "--horizon-steps", "12", "--jobs", "1"]


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, Path(out.out.strip()) if code == 0 else None, out.err


def rows(run_dir):
    with open(run_dir / "summary.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_artifacts(tmp_path, capsys):
    code, run_dir, _ = run_cli(["run", "case_a", "--out", str(tmp_path), *FAST], capsys)
    assert code == 0
    assert {"summary.csv", "series.csv", "manifest.json"} <= {p.name for p in run_dir.iterdir()}
    assert run_dir.parent == tmp_path / "case_a"
    assert (tmp_path / "case_a" / "latest").resolve() == run_dir.resolve()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["version"] and manifest["duration_s"] is not None
    assert manifest["cells"][0]["master_seed"] == 1
    assert tuple(rows(run_dir)[0]) == SUMMARY_COLUMNS


def test_run_twice_identical(tmp_path, capsys):
    args = ["run", "case_b", "--seed", "7", "--out", str(tmp_path), *FAST]
    _, first, _ = run_cli(args, capsys)
    _, second, _ = run_cli(args, capsys)
    assert first != second
    assert (first / "summary.csv").read_bytes() == (second / "summary.csv").read_bytes()


def test_env_output_root(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GRIDSPIN_OUT", str(tmp_path / "env"))
    _, run_dir, _ = run_cli(["run", "--scenario", "case_a", *FAST], capsys)
    assert run_dir.is_relative_to(tmp_path / "env")


def test_market_columns_populated(tmp_path, capsys):
    _, run_dir, _ = run_cli(["run", "case_a", "--market", "merit", "--theta", "52", "--out", str(tmp_path), *FAST],
                            capsys)
    row = rows(run_dir)[0]
    assert row["market"] == "merit" and float(row["theta"]) == 52.0
    assert float(row["total_cost_usd"]) > 0 and row["unit_cost_usd_per_mwh"] != ""


def test_missing_scenario_exit_1(capsys):
    code, _, err = run_cli(["run", "missing.file"], capsys)
    assert code == 1 and "missing.file" in err


def test_bad_flag_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "case_a", "--policy", "hoard"])
    assert exc.value.code == 1


def test_invalid_override_exit_1(tmp_path, capsys):
    code, _, err = run_cli(["run", "case_a", "--sigma", "-1", "--out", str(tmp_path)], capsys)
    assert code == 1 and "sigma" in err


def test_infeasible_exit_2(tmp_path, capsys, case_a):
    data = scenario_to_dict(case_a)
    data["initial_demand"] = [0.0, 0.0, 900.0]
    path = tmp_path / "overload.json"
    path.write_text(json.dumps(data))
    code, _, err = run_cli(["run", str(path), "--out", str(tmp_path), *FAST], capsys)
    assert code == 2 and "infeasible" in err


def test_sweep_cross_product(tmp_path, capsys):
    code, run_dir, _ = run_cli([
        "sweep", "sweep", "--mode", "constant-total", "--levels", "0,10,20,30,40,50",
        "--theta", "12,50,52,100", "--bids", "merit,plsf", "--policy", "shed,rollover",
        "--out", str(tmp_path), "--traces", "1", "--horizon-steps", "4", "--jobs", "1",
    ], capsys)
    assert code == 0
    assert len(rows(run_dir)) == 96
    assert len(list((run_dir / "cells").glob("*.json"))) == 96


def test_sweep_over_budget_exit_1(tmp_path, capsys):
    code, _, err = run_cli(["sweep", "sweep", "--levels", "60", "--mode", "constant-total",
                            "--out", str(tmp_path)], capsys)
    assert code == 1 and "60" in err


def test_sweep_level_zero_matches_run(tmp_path, capsys):
    _, sweep_dir, _ = run_cli(["sweep", "case_a", "--levels", "0", "--out", str(tmp_path), *FAST], capsys)
    _, run_dir, _ = run_cli(["run", "case_a", "--out", str(tmp_path), *FAST], capsys)
    a, b = rows(sweep_dir)[0], rows(run_dir)[0]
    assert a["mode"] == "additive" and b["mode"] == ""
    skip = {"mode", "level"}
    assert {k: v for k, v in a.items() if k not in skip} == {k: v for k, v in b.items() if k not in skip}


def test_manifest_alone_reproduces(tmp_path, capsys):
    _, run_dir, _ = run_cli(["sweep", "sweep", "--levels", "0,20", "--theta", "52", "--bids", "plsf",
                             "--policy", "rollover", "--seed", "5", "--out", str(tmp_path), *FAST], capsys)
    code, again, _ = run_cli(["rerun", str(run_dir / "manifest.json"), "--out", str(tmp_path / "r")], capsys)
    assert code == 0
    assert (again / "summary.csv").read_bytes() == (run_dir / "summary.csv").read_bytes()
    assert (again / "series.csv").read_bytes() == (run_dir / "series.csv").read_bytes()


def test_jobs_do_not_change_output(tmp_path, capsys):
    base = ["run", "case_b", "--traces", "4", "--horizon-steps", "12", "--out", str(tmp_path)]
    _, one, _ = run_cli(base + ["--jobs", "1"], capsys)
    _, two, _ = run_cli(base + ["--jobs", "3"], capsys)
    assert (one / "summary.csv").read_bytes() == (two / "summary.csv").read_bytes()


def test_dumps(tmp_path, capsys):
    _, run_dir, _ = run_cli(["run", "case_a", "--market", "plsf", "--dump", "traces,dispatch,market",
                             "--out", str(tmp_path), *FAST], capsys)
    for name in ("traces.csv", "dispatch.csv", "market.csv"):
        assert (run_dir / name).stat().st_size > 0


def test_charts_written(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    _, run_dir, _ = run_cli(["sweep", "case_a", "--levels", "0,33", "--charts", "--out", str(tmp_path), *FAST],
                            capsys)
    assert (run_dir / "charts" / "series_trace0.svg").exists()
    assert list((run_dir / "charts").glob("levels_*.svg"))


# flag > file > built-in default, one flag at a time
PRECEDENCE = [
    (["--seed", "9"], "master_seed", 9, 1, 0),
    (["--sigma", "2.5"], "walk_sigma", 2.5, 3.0, 5.0),
    (["--horizon-steps", "10"], "horizon_steps", 10, 20, 288),
    (["--step-minutes", "15"], "step_minutes", 15.0, 10.0, 5.0),
    (["--initial-compute", "20"], "initial_compute_demand", 20.0, 30.0, 100.0),
    (["--compute-upper", "150"], "compute_upper", 150.0, 120.0, 200.0),
    (["--theta", "52"], ("market", "theta"), 52.0, 75.0, 100.0),
    (["--market", "plsf"], ("market", "bid_format"), "plsf", "merit", "off"),
    (["--policy", "rollover"], ("market", "excess_policy"), "rollover", "rollover", "shed"),
    (["--transport-cost", "12"], ("transport", 0, 1), 12.0, 30.0, 40.0),
    (["--price-tick", "0"], ("market", "price_tick"), 0.0, 0.1, 0.01),
    (["--initial-demand", "1,2,3"], "initial_demand", (1.0, 2.0, 3.0), [5.0, 6.0, 7.0], (40.0, 40.0, 40.0)),
    (["--initial-generation", "1,2,3"], "initial_generation", (1.0, 2.0, 3.0), [5.0, 6.0, 7.0], (75.0, 75.0, 250.0)),
]


def _get(cfg, attr):
    if isinstance(attr, str):
        return getattr(cfg, attr)
    if attr[0] == "market":
        value = getattr(cfg.market, attr[1])
        return getattr(value, "value", value)
    return cfg.transport[attr[1], attr[2]]


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


def _minimal(case_a):
    data = scenario_to_dict(case_a)
    for key in ("walk_sigma", "step_minutes", "horizon_steps", "initial_demand", "initial_generation",
                "initial_compute_demand", "compute_upper", "master_seed", "market", "transport"):
        data.pop(key, None)
    return data


@pytest.mark.parametrize("flag,attr,flag_value,file_value,default", PRECEDENCE)
def test_flag_precedence(tmp_path, case_a, flag, attr, flag_value, file_value, default):
    from gridspin.scenario import scenario_from_dict

    bare = scenario_from_dict(_minimal(case_a))
    assert _get(bare, attr) == default

    data = _minimal(case_a)
    if isinstance(attr, str):
        data[attr] = file_value
    elif attr[0] == "market":
        data["market"] = {attr[1]: file_value}
    else:
        data["transport"] = {"default_cost": file_value}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    from_file = load_scenario(path)
    assert _get(from_file, attr) == _tupled(file_value)

    parser = build_parser()
    unset = apply_overrides(from_file, parser.parse_args(["run", str(path)]))
    assert _get(unset, attr) == _tupled(file_value)
    flagged = apply_overrides(from_file, parser.parse_args(["run", str(path), *flag]))
    assert _get(flagged, attr) == flag_value


def test_compute_capacities_flag(case_a):
    args = build_parser().parse_args(["run", "case_a", "--compute-capacities", "30,30,40"])
    cfg = apply_overrides(case_a, args)
    assert [n.compute_capacity for n in cfg.nodes] == [30.0, 30.0, 40.0]


def test_compute_capacities_wrong_length(capsys):
    code, _, err = run_cli(["run", "case_a", "--compute-capacities", "1,2"], capsys)
    assert code == 1 and "3 values" in err


def test_shipped_scenarios_round_trip(tmp_path):
    for name in ("case_a", "case_b", "sweep"):
        cfg = load_scenario(resolve_scenario_path(name))
        save_scenario(cfg, tmp_path / f"{name}.json")
        assert load_scenario(tmp_path / f"{name}.json") == cfg
