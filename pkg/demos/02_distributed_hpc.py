"""
Concentrated vs distributed HPC
===============================

Case (a) puts all 100 MW of compute at the gas node. Case (b) adds 33 MW
next to each renewable farm. Both see the same seeded traces, so the
difference is purely the placement.
"""

from gridspin.dispatch import run_trace
from gridspin.metrics import ADDITIVE, level_config, run_ensemble
from gridspin.scenario import load_scenario, resolve_scenario_path
from gridspin.traces import gen_trace

case_a = load_scenario(resolve_scenario_path("case_a"))
case_b = load_scenario(resolve_scenario_path("case_b"))

# one step of one trace, to see where compute lands
tr = gen_trace(case_a, 0)
for name, cfg in (("a", case_a), ("b", case_b)):
    rec = run_trace(cfg, tr)[0]
    print(f"case {name}, t=0: compute placed per node {rec.compute_placed.round(2)}, "
          f"gas {rec.gas_output:.1f} MW, curtailed {rec.curtailed.sum():.1f} MW")

# ensembles of 40 traces
a = run_ensemble(case_a, 40)
b = run_ensemble(case_b, 40)
print(f"COE      a {a.coe:7.3f}  b {b.coe:7.3f}  $/MWh  ({100 * (1 - b.coe / a.coe):.1f}% lower)")
print(f"gas peak a {a.gas_peak:7.2f}  b {b.gas_peak:7.2f}  MW     ({100 * (1 - b.gas_peak / a.gas_peak):.1f}% lower)")
print(f"curtail  a {a.curtailed:7.2f}  b {b.curtailed:7.2f}  MW")

# intermediate distribution levels
for level in (0, 11, 22, 33):
    s = run_ensemble(level_config(case_a, level, ADDITIVE), 40)
    print(f"level {level:2d} MW: COE {s.coe:.3f} +/- {s.ci['coe']:.3f}, "
          f"curtailed {s.curtailed:.2f}, gas mean {s.gas_mean:.2f}")
