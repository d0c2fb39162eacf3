"""
Market sweep over HPC distribution
==================================

The network keeps 100 MW of compute in total; `level` MW of it sits at each
renewable node and the rest at the gas node. Each cell is cleared step by
step through the spot market. Results are normalized per metric, as in a
figure panel.
"""

from gridspin.metrics import CONSTANT_TOTAL, level_config, normalize_by_max, run_ensemble
from gridspin.scenario import load_scenario, resolve_scenario_path

base = load_scenario(resolve_scenario_path("sweep"))
levels = [0, 10, 20, 30, 40, 50]
n_traces = 20

for bid in ("merit", "plsf"):
    for policy in ("shed", "rollover"):
        rows = []
        for level in levels:
            cfg = level_config(base, level, CONSTANT_TOTAL).with_market(
                bid_format=bid, theta=100.0, excess_policy=policy)
            rows.append(run_ensemble(cfg, n_traces))
        norm = normalize_by_max({
            "served": [s.compute_served for s in rows],
            "cost": [s.total_cost for s in rows],
            "curtailed": [s.curtail_after_hpc for s in rows],
        })
        print(f"\n{bid} bids, {policy}")
        print(" level  served  cost  curtailed  unit $/MWh")
        for i, level in enumerate(levels):
            unit = "-" if rows[i].unit_cost is None else f"{rows[i].unit_cost:.2f}"
            print(f"  {level:3d}   {norm['served'][i]:.3f}  {norm['cost'][i]:.3f}   {norm['curtailed'][i]:.3f}     {unit}")
