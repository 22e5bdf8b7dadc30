"""Desk-scale run of the Monte Carlo study.

Runs a slice of the full study grid (all four designs at one sample
size) with a reduced replication count and prints the classification
table. The full grids live behind ``table_grid`` and the ``groupediv
replicate`` command; at 100 replications x 100 restarts they reproduce
the headline tables.
"""

import time

from groupediv import run_monte_carlo
from groupediv.sim import McCell

methods = ("ig", "2sls", "tgfe2", "ugfe")
grid = [
    McCell(dgp=d, n=100, t=20, sigma=0.5, methods=methods) for d in ("1", "2", "3", "4")
]

start = time.time()
report = run_monte_carlo(grid, n_reps=25, n_starts=100, master_seed=7)
print(f"ran {len(grid)} cells x 25 replications in {time.time() - start:.1f}s\n")

print("mean rand index (classification accuracy against the true grouping):")
print(report.to_text("mean_ri"))
print()
print("mean Hausdorff distance of the post estimates from the true coefficients:")
print(report.to_text("mean_hausdorff_post"))
print(
    "\nReading the table: the pooled first stage ('2sls') collapses on designs\n"
    "2 and 3, where instrument strength averages out across units; the\n"
    "endogeneity-ignoring fit ('ig') collapses on design 4, where the error\n"
    "correlation pattern fights the outcome grouping; the heterogeneous\n"
    "first-stage strategies hold up everywhere."
)
