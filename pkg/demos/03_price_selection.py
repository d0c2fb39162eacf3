"""
Consumer price selection
========================

Given the suppliers' curves, the compute consumer picks the single price
that minimizes what it pays plus a penalty theta for each unserved MW.
"""

import numpy as np

from gridspin.market import CurveKind, SupplyCurve, eval_objective, select_price

merit = [
    SupplyCurve(0, CurveKind.MERIT_STEP, 10.0, 30.0),   # solar HPC
    SupplyCurve(1, CurveKind.MERIT_STEP, 20.0, 30.0),   # wind HPC
    SupplyCurve(2, CurveKind.MERIT_STEP, 50.0, 100.0),  # gas HPC
]

# the objective at the three cost breakpoints for 50 MW of demand
for p in (10.0, 20.0, 50.0):
    print(f"p = {p:4.0f}: objective {eval_objective(p, merit, 50.0, 100.0):7.1f}")

price, out = select_price(merit, 50.0, 100.0)
print("chosen price", price, "served", out.served, "per supplier", out.quantities)

# a penalty below wind's cost shuts wind and gas out
price, out = select_price(merit, 50.0, 12.0)
print("theta 12 ->", price, "served", out.served)

# ramped (PLSF) renewable bids: quantity grows linearly up to the cost
plsf = [SupplyCurve(0, CurveKind.PLSF_RAMP, 10.0, 30.0),
        SupplyCurve(1, CurveKind.PLSF_RAMP, 20.0, 30.0),
        merit[2]]
exact, _ = select_price(plsf, 25.0, 100.0)
cents, out = select_price(plsf, 25.0, 100.0, ticks_per_dollar=100)
print(f"plsf: continuous optimum {exact:.4f}, on a cent grid {cents:.2f}, served {out.served:.2f}")

# brute force over a fine grid agrees
grid = np.arange(0, 10001) / 100
best = min(grid, key=lambda p: eval_objective(p, plsf, 25.0, 100.0))
print("fine-grid minimizer", best)
