"""Fixed effects and dynamic panels.

Two devices extend the estimators beyond the static exogenous-effects
model: removing unit fixed effects by the within or first-difference
transform, and collapsing period-varying instrument sets (lag
instruments in autoregressive models) to a fixed width by per-period
cross-sectional regression.
"""

import numpy as np

from groupediv import (
    GfeOptions,
    Grouping,
    PanelData,
    combine_dynamic_instruments,
    estimate,
    first_difference,
    rand_index,
    within_transform,
)

rng = np.random.default_rng(1)
n, t = 100, 21

# --- unit fixed effects -------------------------------------------------
z = rng.normal(size=(n, t, 1))
eta = 3.0 * rng.normal(size=(n, 1))          # unit effects, correlated with z? keep simple
beta = np.repeat([1.0, -1.0], n // 2)
x = 1.0 * z + 0.5 * rng.normal(size=(n, t, 1))
y = x[:, :, 0] * beta[:, None] + eta + rng.normal(size=(n, t))
panel = PanelData(y=y, x=x, z=z)
truth = Grouping(np.repeat([1, 2], n // 2), 2)

opts = GfeOptions(n_groups=2, n_starts=100, seed=0)
raw = estimate(panel, "2sls", 2, opts)
within = estimate(panel, "2sls", 2, opts, transform="within")
fd = estimate(panel, "2sls", 2, opts, transform="fd")
print("unit fixed effects, rand index by transform:")
print(f"  none    {rand_index(raw.grouping, truth):.3f}   (effects contaminate the fit)")
print(f"  within  {rand_index(within.grouping, truth):.3f}")
print(f"  fd      {rand_index(fd.grouping, truth):.3f}")

# --- dynamic panel: AR(1) with grouped autoregressive coefficients ------
t = 60
rho_g = np.where(np.arange(n) < n // 2, 0.6, 0.0)
y_dyn = rng.normal(size=(n, 1)) * np.ones((n, t + 6))
for s in range(1, t + 6):
    y_dyn[:, s] = rho_g * y_dyn[:, s - 1] + rng.normal(size=n)
y_dyn = y_dyn[:, 5:]                 # burn in, keep t + 1 periods

# difference away the unit effects; regressor = lagged dy
dy = np.diff(y_dyn, axis=1)          # t columns
dy_out = dy[:, 1:]                   # dependent: dy at times 2..t
dy_lag = dy[:, :-1]                  # regressor: dy one period earlier

# instruments for dy_lag at output period j: the levels two and three
# periods back; only one lag exists at the first period (width varies)
periods = dy_out.shape[1]
z_by_period = [
    y_dyn[:, [0]] if s == 0 else np.column_stack([y_dyn[:, s], y_dyn[:, s - 1]])
    for s in range(periods)
]
z_comb = combine_dynamic_instruments(z_by_period, dy_lag)

panel_dyn = PanelData(y=dy_out, x=dy_lag[:, :, None], z=z_comb)
print("\ndynamic AR(1) with grouped coefficients (0.6 vs 0.0):")
for method in ("2sls", "ig"):
    res = estimate(panel_dyn, method, 2, opts)
    print(
        f"  {method:>4s}: rand index {rand_index(res.grouping, truth):.3f}  "
        f"pre {np.sort(res.pre_beta.ravel()).round(3)}  "
        f"post {np.sort(res.post_beta.ravel()).round(3)}"
    )
print(
    "\nthe lag instruments change width over time; the combination step projects\n"
    "each period's set onto a single column so every estimator can consume\n"
    "them. Differenced-lag instruments are weak, so classification improves\n"
    "only slowly with T -- and the biased least-squares fit ('ig', whose pre\n"
    "estimates are pushed far below the truth by the differencing correlation)\n"
    "can still classify units well, after which the group-by-group IV refit\n"
    "('post') repairs the coefficients."
)
