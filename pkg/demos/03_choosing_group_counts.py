"""Choosing the number of groups by information criterion.

Simulates a panel with two latent outcome groups and a two-group first
stage, then scans candidate counts for both stages. The first-stage
criterion penalizes the instrument-regressor fit; the second-stage
criterion penalizes the fit of the outcome on the fitted regressors.
"""

from groupediv import GfeOptions, select_g_second_stage, select_k_first_stage
from groupediv.sim import DgpConfig, gen_dgp

panel, _ = gen_dgp(DgpConfig(dgp="2", n=100, t=20, sigma=0.75, seed=8))
opts = GfeOptions(n_groups=1, n_starts=100, seed=0)

k_res = select_k_first_stage(panel, k_max=5, penalty_name="pcp3", opts=opts)
print("first stage (instrument groups):")
print("  K   SSR/NT      criterion")
for k, ssr, crit in zip(k_res.candidates, k_res.ssr, k_res.criteria):
    nt = panel.n_units * panel.n_periods
    marker = "  <- chosen" if k == k_res.chosen else ""
    print(f"  {k}   {ssr / nt:.5f}     {crit:.5f}{marker}")

g_res = select_g_second_stage(
    panel, g_max=5, method="tgfe", penalty_name="pcp3", opts=opts,
    k=k_res.chosen, k_max=5,
)
print("\nsecond stage (outcome groups), given the chosen K:")
print("  G   SSR/NT      criterion")
for g, ssr, crit in zip(g_res.candidates, g_res.ssr, g_res.criteria):
    nt = panel.n_units * panel.n_periods
    marker = "  <- chosen" if g == g_res.chosen else ""
    print(f"  {g}   {ssr / nt:.5f}     {crit:.5f}{marker}")

print(
    f"\nchosen K = {k_res.chosen}, G = {g_res.chosen} "
    f"(true values: 2 and 2). The SSR keeps falling as candidates grow;\n"
    "the penalty turns the elbow into an argmin."
)
