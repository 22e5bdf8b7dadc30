"""Information criteria for choosing the number of latent groups.

Both stages are selected by penalized mean squared residuals. The
first-stage criterion scores the instrument-to-regressor fit over
candidate K; the second-stage criterion scores the fit of y on the
fitted regressors over candidate G -- note these are second-stage
residuals, not structural ones. The variance scale multiplying the
penalty always comes from the largest candidate fit.

Two penalty shapes ship: ``pcp3`` (the default; scales with
NT/min(N,T) and log(min(N,T))) and ``bm`` (BIC-like, scales with
(params + N) log(NT)). ``bm`` tends to over-select when N and T are
moderate, which is why ``pcp3`` is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import LengthMismatch
from .first_stage import fs_grouped, fs_unit_specific
from .gfe import GfeOptions, gfe_fit
from .panel import PanelData

__all__ = ["ICResult", "penalty", "select_k_first_stage", "select_g_second_stage"]

PENALTIES = ("bm", "pcp3")
DEFAULT_MAX_GROUPS = 5


@dataclass(frozen=True)
class ICResult:
    """Criterion values per candidate and the minimizing choice."""

    candidates: np.ndarray
    criteria: np.ndarray
    ssr: np.ndarray
    chosen: int
    sigma2_hat: float
    penalty_name: str


def penalty(name: str, n: int, t: int, d: int, m: int, k: int) -> float:
    """Penalty term before multiplication by the variance scale.

    ``bm``: (m*d*k + N) log(NT) -- pass m = 1 for a second-stage count,
    where each group contributes d parameters.
    ``pcp3``: k log(min(N,T)) NT / min(N,T); ignores d and m.
    """
    if min(n, t, d, m) < 1 or k < 0:
        raise LengthMismatch("penalty needs positive counts")
    if name == "bm":
        return (m * d * k + n) * np.log(n * t)
    if name == "pcp3":
        nt_min = min(n, t)
        return k * np.log(nt_min) * (n * t / nt_min)
    raise LengthMismatch(f"unknown penalty {name!r}; expected one of {PENALTIES}")


def _ic_result(candidates, ssr_values, nt, sigma2, penalty_name, pen_values):
    criteria = ssr_values / nt + sigma2 * pen_values / nt
    chosen = int(candidates[int(np.argmin(criteria))])
    return ICResult(
        candidates=np.asarray(candidates),
        criteria=criteria,
        ssr=ssr_values,
        chosen=chosen,
        sigma2_hat=float(sigma2),
        penalty_name=penalty_name,
    )


def select_k_first_stage(
    p: PanelData,
    k_max: int = DEFAULT_MAX_GROUPS,
    penalty_name: str = "pcp3",
    opts: GfeOptions | None = None,
    time_effects: bool = False,
) -> ICResult:
    """Choose the first-stage group count by penalized first-stage SSR."""
    if k_max < 1:
        raise LengthMismatch("k_max must be >= 1")
    if opts is None:
        opts = GfeOptions(n_groups=1)
    nt = p.n_units * p.n_periods
    candidates = np.arange(1, k_max + 1)
    ssr_values = np.empty(k_max)
    for i, k in enumerate(candidates):
        ssr_values[i] = fs_grouped(p, int(k), opts, time_effects=time_effects).residual_ss
    sigma2 = ssr_values[-1] / nt
    pen = np.array([penalty(penalty_name, p.n_units, p.n_periods, p.d, p.m, int(k)) for k in candidates])
    return _ic_result(candidates, ssr_values, nt, sigma2, penalty_name, pen)


def _second_stage_regressors(p, method, k, k_max, opts, time_effects):
    """Fitted regressor panels for the chosen K and for K_max."""
    method = method.lower()
    if method in ("ig", "rf"):
        w = p.x if method == "ig" else p.z
        return w, w
    if method == "2sls":
        fit = fs_grouped(p, 1, opts, time_effects=time_effects)
        return fit.x_hat, fit.x_hat
    if method == "tgfe":
        if k is None:
            raise LengthMismatch("tgfe selection needs the chosen first-stage k")
        fit_k = fs_grouped(p, int(k), opts, time_effects=time_effects)
        if k_max is None or int(k_max) == int(k):
            return fit_k.x_hat, fit_k.x_hat
        fit_kmax = fs_grouped(p, int(k_max), opts, time_effects=time_effects)
        return fit_k.x_hat, fit_kmax.x_hat
    if method == "ugfe":
        fit = fs_unit_specific(
            p, time_effects=time_effects, k_for_mu=k if time_effects else None, opts=opts
        )
        return fit.x_hat, fit.x_hat
    raise LengthMismatch(f"unknown method {method!r}")


def select_g_second_stage(
    p: PanelData,
    g_max: int = DEFAULT_MAX_GROUPS,
    method: str = "tgfe",
    penalty_name: str = "pcp3",
    opts: GfeOptions | None = None,
    k: int | None = None,
    k_max: int | None = None,
    time_effects: bool = False,
) -> ICResult:
    """Choose the second-stage group count by penalized second-stage SSR.

    The criterion's residuals are those of the regression of y on the
    method's fitted regressors (for ``ig``/``rf``: on x/z directly).
    For ``tgfe`` pass the previously chosen ``k``; the variance scale is
    then taken from the (G_max, ``k_max``) fit as the plug-in, with
    ``k_max`` defaulting to ``k``.
    """
    if g_max < 1:
        raise LengthMismatch("g_max must be >= 1")
    if opts is None:
        opts = GfeOptions(n_groups=1)
    nt = p.n_units * p.n_periods
    w, w_sigma = _second_stage_regressors(p, method, k, k_max, opts, time_effects)
    candidates = np.arange(1, g_max + 1)
    ssr_values = np.empty(g_max)
    for i, g in enumerate(candidates):
        fit = gfe_fit(p.y, w, replace(opts, n_groups=int(g), time_effects=time_effects))
        ssr_values[i] = fit.objective * nt
    if w_sigma is w:
        sigma2 = ssr_values[-1] / nt
    else:
        fit = gfe_fit(p.y, w_sigma, replace(opts, n_groups=g_max, time_effects=time_effects))
        sigma2 = fit.objective
    pen = np.array(
        [penalty(penalty_name, p.n_units, p.n_periods, p.d, 1, int(g)) for g in candidates]
    )
    return _ic_result(candidates, ssr_values, nt, sigma2, penalty_name, pen)
