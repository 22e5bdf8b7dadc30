"""End-to-end walkthrough: five estimation strategies on one panel.

Generates a panel whose outcome coefficients take two latent values
(+1 / -1) while the regressor is endogenous, then runs every strategy
and compares classification accuracy and coefficient estimates.
"""

import numpy as np

from groupediv import GfeOptions, estimate, hausdorff, rand_index
from groupediv.sim import DgpConfig, gen_dgp

# Design 3: every unit has its own instrument strength, with signs split
# across the sample, so the pooled first stage is nearly uninformative.
cfg = DgpConfig(dgp="3", n=100, t=20, sigma=0.75, seed=42)
panel, truth = gen_dgp(cfg)
print(f"panel: N={panel.n_units}, T={panel.n_periods}, d={panel.d}, m={panel.m}")
print(f"true coefficients per group: {truth.beta.ravel()}")

opts = GfeOptions(n_groups=2, n_starts=100, seed=0)
for method in ("ig", "2sls", "tgfe", "ugfe", "rf"):
    res = estimate(panel, method, 2, opts, k=2 if method == "tgfe" else None)
    ri = rand_index(res.grouping, truth.grouping)
    post = np.sort(res.post_beta.ravel())
    line = f"{method:>5s}: rand index {ri:.3f}  post estimates {post.round(3)}"
    if method not in ("rf",):
        line += f"  pre {np.sort(res.pre_beta.ravel()).round(3)}"
        line += f"  hausdorff(pre) {hausdorff(res.pre_beta, truth.beta):.3f}"
    print(line)

print(
    "\nThe pooled ('2sls') first stage averages the unit strengths to ~0, so its\n"
    "fitted regressors carry no signal -- its rand index sits at chance level.\n"
    "Modeling first-stage heterogeneity (tgfe/ugfe) restores classification."
)

# Standard errors: pre estimates come with clustered standard errors from
# the second-stage residuals; post estimates from group-by-group IV.
res = estimate(panel, "tgfe", 2, opts, k=2)
for g in range(2):
    print(
        f"group {g + 1} (size {res.group_sizes[g]}): "
        f"pre {res.pre_beta[g, 0]:+.3f} (se {res.pre_se[g, 0]:.3f})  "
        f"post {res.post_beta[g, 0]:+.3f} (se {res.post_se[g, 0]:.3f})"
    )
