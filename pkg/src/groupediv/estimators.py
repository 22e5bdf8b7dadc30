"""End-to-end estimation strategies and post-estimation inference.

Five strategies estimate the group-specific coefficients of a linear
panel model with endogenous regressors:

* ``2sls``  -- homogeneous first stage, then grouped least squares of
  y on the fitted regressors;
* ``tgfe``  -- K-group first stage, then the same second stage;
* ``ugfe``  -- unit-specific first stage, then the same second stage;
* ``ig``    -- grouped least squares of y directly on x (endogeneity
  ignored; memberships may still be consistent, coefficients biased);
* ``rf``    -- grouped least squares of y directly on z (reduced form);
  structural coefficients come only from the post fit.

Every strategy reports *pre* estimates (the second-stage coefficients
with clustered standard errors from the second-stage residuals) and
*post* estimates (instrumental-variables refits group by group on the
estimated memberships).

The module also carries the naive GMM objective and its exact
just-identified minimizers. Those exist to demonstrate why minimizing
a GMM criterion over coefficients and memberships jointly fails: with
m = d, any assignment admits coefficients that zero the objective, so
the criterion cannot identify the grouping. They are demonstrators,
never estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateAssignment,
    GroupTooSmall,
    InsufficientClusters,
    LengthMismatch,
    NotJustIdentified,
    SingularDesign,
)
from .first_stage import FirstStageFit, fs_grouped, fs_homogeneous, fs_unit_specific
from .gfe import GfeOptions, GroupedLinearFit, gfe_fit
from .panel import Grouping, PanelData, first_difference, within_transform

__all__ = [
    "EstimationResult",
    "GmmWeighting",
    "estimate",
    "estimate_2sls",
    "estimate_tgfe",
    "estimate_ugfe",
    "estimate_ig",
    "estimate_rf",
    "post_iv_by_group",
    "clustered_se_pre",
    "naive_gmm_objective",
    "just_identified_beta",
    "pseudo_true_beta",
]

METHODS = ("2sls", "tgfe", "ugfe", "ig", "rf")


@dataclass(frozen=True)
class EstimationResult:
    """Pre and post estimates plus the fitted pieces behind them.

    ``pre_beta`` always equals ``second_stage.beta``; for the reduced
    form those are coefficients on the instruments (width m) and only
    the post estimates are on the structural scale. ``group_sizes``
    sums to N.
    """

    method: str
    second_stage: GroupedLinearFit
    pre_beta: np.ndarray
    pre_se: np.ndarray
    post_beta: np.ndarray
    post_se: np.ndarray
    group_sizes: np.ndarray
    first_stage: FirstStageFit | None = None
    config: dict = field(default_factory=dict)

    @property
    def grouping(self) -> Grouping:
        return self.second_stage.grouping


@dataclass(frozen=True)
class GmmWeighting:
    """A symmetric positive-definite m x m weighting (or one per group)."""

    w: np.ndarray | list

    def __post_init__(self):
        mats = self.w if isinstance(self.w, list) else [self.w]
        for mat in mats:
            mat = np.asarray(mat, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise LengthMismatch("weighting must be square")
            if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12):
                raise LengthMismatch("weighting must be symmetric (within 1e-12)")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise LengthMismatch("weighting must be positive definite")

    @classmethod
    def identity(cls, m: int) -> "GmmWeighting":
        return cls(w=np.eye(m))

    def for_group(self, g: int) -> np.ndarray:
        if isinstance(self.w, list):
            return np.asarray(self.w[g], dtype=float)
        return np.asarray(self.w, dtype=float)


def _apply_transform(p: PanelData, transform: str) -> PanelData:
    if transform in (None, "none"):
        return p
    if transform == "within":
        return within_transform(p)
    if transform in ("fd", "first_difference"):
        return first_difference(p)
    raise LengthMismatch(f"unknown transform {transform!r}")


def _second_stage(p, x_hat, g, opts, time_effects):
    opts = replace(opts, n_groups=g, time_effects=time_effects)
    return gfe_fit(p.y, x_hat, opts)


def _assemble(method, p, fs, second, regressors, time_effects, config, cr1=False):
    pre_se = clustered_se_pre(p.y, regressors, second, cr1=cr1)
    post_beta, post_se = post_iv_by_group(
        p, second.grouping, time_effects=time_effects, cr1=cr1
    )
    return EstimationResult(
        method=method,
        second_stage=second,
        pre_beta=second.beta,
        pre_se=pre_se,
        post_beta=post_beta,
        post_se=post_se,
        group_sizes=second.grouping.sizes,
        first_stage=fs,
        config=config,
    )


def estimate_2sls(
    p: PanelData,
    g: int,
    opts: GfeOptions,
    time_effects: bool = False,
    transform: str = "none",
) -> EstimationResult:
    """Homogeneous first stage, grouped second stage of y on fitted x."""
    p = _apply_transform(p, transform)
    fs = fs_homogeneous(p)
    second = _second_stage(p, fs.x_hat, g, opts, time_effects)
    config = {"method": "2sls", "g": g, "time_effects": time_effects, "transform": transform}
    return _assemble("2sls", p, fs, second, fs.x_hat, time_effects, config)


def estimate_tgfe(
    p: PanelData,
    g: int,
    k: int,
    opts: GfeOptions,
    time_effects: bool = False,
    transform: str = "none",
) -> EstimationResult:
    """K-group first stage, grouped second stage; K = 1 matches 2sls."""
    p = _apply_transform(p, transform)
    fs = fs_grouped(p, k, opts, time_effects=time_effects)
    second = _second_stage(p, fs.x_hat, g, opts, time_effects)
    config = {
        "method": "tgfe",
        "g": g,
        "k": k,
        "time_effects": time_effects,
        "transform": transform,
    }
    return _assemble("tgfe", p, fs, second, fs.x_hat, time_effects, config)


def estimate_ugfe(
    p: PanelData,
    g: int,
    opts: GfeOptions,
    time_effects: bool = False,
    k_for_mu: int | None = None,
    transform: str = "none",
) -> EstimationResult:
    """Unit-specific first stage, grouped second stage."""
    p = _apply_transform(p, transform)
    fs = fs_unit_specific(p, time_effects=time_effects, k_for_mu=k_for_mu, opts=opts)
    second = _second_stage(p, fs.x_hat, g, opts, time_effects)
    config = {
        "method": "ugfe",
        "g": g,
        "k_for_mu": k_for_mu,
        "time_effects": time_effects,
        "transform": transform,
    }
    return _assemble("ugfe", p, fs, second, fs.x_hat, time_effects, config)


def estimate_ig(
    p: PanelData,
    g: int,
    opts: GfeOptions,
    time_effects: bool = False,
    transform: str = "none",
) -> EstimationResult:
    """Grouped least squares of y on x, endogeneity ignored.

    The pre coefficients inherit any endogeneity bias; the post
    estimates refit each estimated group by instrumental variables.
    """
    p = _apply_transform(p, transform)
    second = _second_stage(p, p.x, g, opts, time_effects)
    config = {"method": "ig", "g": g, "time_effects": time_effects, "transform": transform}
    return _assemble("ig", p, None, second, p.x, time_effects, config)


def estimate_rf(
    p: PanelData,
    g: int,
    opts: GfeOptions,
    time_effects: bool = False,
    transform: str = "none",
) -> EstimationResult:
    """Grouped least squares of y on the instruments (reduced form).

    The second-stage coefficients are reduced-form loadings on z,
    reported as diagnostics in ``pre_beta``; structural estimates come
    from the group-by-group post fit.
    """
    p = _apply_transform(p, transform)
    second = _second_stage(p, p.z, g, opts, time_effects)
    config = {"method": "rf", "g": g, "time_effects": time_effects, "transform": transform}
    return _assemble("rf", p, None, second, p.z, time_effects, config)


def estimate(
    p: PanelData,
    method: str,
    g: int,
    opts: GfeOptions,
    k: int | None = None,
    time_effects: bool = False,
    k_for_mu: int | None = None,
    transform: str = "none",
) -> EstimationResult:
    """Dispatch on the method tag; see the individual estimators."""
    method = method.lower()
    if method == "2sls":
        return estimate_2sls(p, g, opts, time_effects, transform)
    if method == "tgfe":
        if k is None:
            raise LengthMismatch("tgfe needs the first-stage group count k")
        return estimate_tgfe(p, g, k, opts, time_effects, transform)
    if method == "ugfe":
        return estimate_ugfe(p, g, opts, time_effects, k_for_mu, transform)
    if method == "ig":
        return estimate_ig(p, g, opts, time_effects, transform)
    if method == "rf":
        return estimate_rf(p, g, opts, time_effects, transform)
    raise LengthMismatch(f"unknown method {method!r}; expected one of {METHODS}")


# --- post-estimation ------------------------------------------------------


def _demean_by_period(arr, members):
    """Within-(group, period) demeaning of a member slice."""
    return arr[members] - arr[members].mean(axis=0, keepdims=True)


def post_iv_by_group(
    p: PanelData,
    grouping: Grouping,
    time_effects: bool = False,
    cr1: bool = False,
):
    """Separate instrumental-variables fit within each estimated group.

    Just identified (m == d): solve the group moment equations exactly.
    Over identified: two-stage least squares within the group. With
    ``time_effects`` all series are demeaned within (group, period)
    cells first. Standard errors are cluster robust with units as
    clusters; ``cr1`` applies an N_g/(N_g - 1) small-sample factor.

    Returns ``(beta, se)``, each of shape (G, d).
    """
    labels = grouping.labels - 1
    if labels.size != p.n_units:
        raise LengthMismatch("grouping does not match the panel")
    n_groups = grouping.n_groups
    d = p.d
    beta = np.full((n_groups, d), np.nan)
    se = np.full((n_groups, d), np.nan)
    for g in range(n_groups):
        members = labels == g
        n_g = int(members.sum())
        if n_g < 2:
            raise GroupTooSmall(
                f"group {g + 1} has {n_g} unit(s); need >= 2 for clustering"
            )
        if time_effects:
            y_g = _demean_by_period(p.y, members)
            x_g = _demean_by_period(p.x, members)
            z_g = _demean_by_period(p.z, members)
        else:
            y_g = p.y[members]
            x_g = p.x[members]
            z_g = p.z[members]
        if p.m == d:
            zx = np.einsum("ntm,ntd->md", z_g, x_g)
            zy = np.einsum("ntm,nt->m", z_g, y_g)
            try:
                b_g = np.linalg.solve(zx, zy)
            except np.linalg.LinAlgError:
                raise SingularDesign(f"group {g + 1}: moment matrix z'x is singular") from None
            if not np.isfinite(b_g).all():
                raise SingularDesign(f"group {g + 1}: moment matrix z'x is singular")
            resid = y_g - np.einsum("ntd,d->nt", x_g, b_g)
            scores = np.einsum("ntm,nt->nm", z_g, resid)
            meat = scores.T @ scores
            try:
                bread = np.linalg.inv(zx)
            except np.linalg.LinAlgError:
                raise SingularDesign(f"group {g + 1}: moment matrix z'x is singular") from None
            cov = bread @ meat @ bread.T
        else:
            zz = np.einsum("ntm,nto->mo", z_g, z_g)
            zx = np.einsum("ntm,ntd->md", z_g, x_g)
            try:
                pi_g = np.linalg.solve(zz, zx)
            except np.linalg.LinAlgError:
                raise SingularDesign(f"group {g + 1}: instrument moments singular") from None
            xh = np.einsum("ntm,md->ntd", z_g, pi_g)
            xx = np.einsum("ntd,nte->de", xh, xh)
            xy = np.einsum("ntd,nt->d", xh, y_g)
            try:
                b_g = np.linalg.solve(xx, xy)
            except np.linalg.LinAlgError:
                raise SingularDesign(f"group {g + 1}: projected design singular") from None
            resid = y_g - np.einsum("ntd,d->nt", x_g, b_g)
            scores = np.einsum("ntd,nt->nd", xh, resid)
            meat = scores.T @ scores
            bread = np.linalg.inv(xx)
            cov = bread @ meat @ bread.T
        if cr1:
            cov = cov * n_g / (n_g - 1)
        beta[g] = b_g
        se[g] = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return beta, se


def clustered_se_pre(y, w, fit: GroupedLinearFit, cr1: bool = False) -> np.ndarray:
    """Clustered standard errors for the second-stage coefficients.

    The G group-coefficient blocks are stacked as group-dummy
    interactions of the second-stage regressors ``w`` so a single
    sandwich covers them all: bread from the stacked cross product,
    meat from unit-level score sums of the second-stage residuals.
    Units are the clusters. When the fit carries per-period effects the
    regressors are demeaned within (group, period) cells, which is
    equivalent to partialling the effect dummies out of the sandwich.

    Returns an array shaped like ``fit.beta`` (G x p).
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim == 2:
        w = w[:, :, None]
    n, t, p_w = w.shape
    if n < 2:
        raise InsufficientClusters("clustered errors need at least two units")
    labels = fit.grouping.labels - 1
    n_groups = fit.grouping.n_groups
    beta = fit.beta
    if beta.ndim != 2 or beta.shape != (n_groups, p_w):
        raise LengthMismatch("fit coefficients do not match the regressors")

    resid = y - np.einsum("ntp,np->nt", w, beta[labels])
    w_tilde = w
    if fit.alpha is not None:
        resid = resid - fit.alpha[labels]
        w_tilde = w.copy()
        for g in range(n_groups):
            members = labels == g
            if members.any():
                w_tilde[members] -= w_tilde[members].mean(axis=0, keepdims=True)

    # stacked design: column block g is 1{g_i = g} * w_it
    k = n_groups * p_w
    bread_inv = np.zeros((k, k))
    scores = np.zeros((n, k))
    for g in range(n_groups):
        members = labels == g
        if not members.any():
            continue
        block = slice(g * p_w, (g + 1) * p_w)
        wg = w_tilde[members]
        bread_inv[block, block] = np.einsum("ntp,nto->po", wg, wg)
        scores[members, block] = np.einsum("ntp,nt->np", wg, resid[members])
    meat = scores.T @ scores
    try:
        bread = np.linalg.pinv(bread_inv, hermitian=True)
    except np.linalg.LinAlgError:
        raise SingularDesign("stacked second-stage design is singular") from None
    cov = bread @ meat @ bread
    if cr1:
        cov = cov * n / (n - 1)
    return np.sqrt(np.maximum(np.diag(cov), 0.0)).reshape(n_groups, p_w)


# --- naive GMM demonstrators ---------------------------------------------


def naive_gmm_objective(
    p: PanelData,
    beta,
    grouping: Grouping,
    weighting: GmmWeighting | None = None,
    pooled: bool = True,
) -> float:
    """Quadratic-form GMM criterion at given coefficients and memberships.

    Moments are averaged by 1/(NT). ``pooled`` evaluates one quadratic
    form in the summed moment; otherwise group moments are evaluated
    separately (each against its own weighting) and summed.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.ndim == 1:
        beta = beta[:, None]
    labels = grouping.labels - 1
    if beta.shape != (grouping.n_groups, p.d):
        raise LengthMismatch("beta must be (G, d)")
    if labels.size != p.n_units:
        raise LengthMismatch("grouping does not match the panel")
    if weighting is None:
        weighting = GmmWeighting.identity(p.m)
    nt = p.n_units * p.n_periods
    resid = p.y - np.einsum("ntd,nd->nt", p.x, beta[labels])
    unit_moments = np.einsum("ntm,nt->nm", p.z, resid) / nt
    if pooled:
        u = unit_moments.sum(axis=0)
        w_mat = weighting.for_group(0)
        if w_mat.shape[0] != p.m:
            raise LengthMismatch("weighting must be m x m")
        return float(u @ w_mat @ u)
    total = 0.0
    for g in range(grouping.n_groups):
        u_g = unit_moments[labels == g].sum(axis=0)
        w_mat = weighting.for_group(g)
        if w_mat.shape[0] != p.m:
            raise LengthMismatch("weighting must be m x m")
        total += float(u_g @ w_mat @ u_g)
    return total


def just_identified_beta(p: PanelData, grouping: Grouping) -> np.ndarray:
    """Exact group-wise IV coefficients that zero the moment equations.

    Requires m == d. For *any* assignment with invertible group moment
    matrices the resulting coefficients drive both GMM criteria to
    zero, which is precisely why those criteria cannot pin down the
    grouping.
    """
    if p.m != p.d:
        raise NotJustIdentified(f"needs m == d, got m={p.m}, d={p.d}")
    labels = grouping.labels - 1
    if labels.size != p.n_units:
        raise LengthMismatch("grouping does not match the panel")
    beta = np.empty((grouping.n_groups, p.d))
    for g in range(grouping.n_groups):
        members = labels == g
        zx = np.einsum("ntm,ntd->md", p.z[members], p.x[members])
        zy = np.einsum("ntm,nt->m", p.z[members], p.y[members])
        try:
            beta[g] = np.linalg.solve(zx, zy)
        except np.linalg.LinAlgError:
            raise SingularDesign(f"group {g + 1}: moment matrix z'x is singular") from None
        if not np.isfinite(beta[g]).all():
            raise SingularDesign(f"group {g + 1}: moment matrix z'x is singular")
    return beta


def pseudo_true_beta(beta0, lambda1: float, lambda11: float, lambda22: float):
    """Two-group mixture values at which the pooled criterion limit vanishes.

    ``beta0`` holds the two true coefficient vectors; ``lambda1`` is the
    population share of group 1 and ``lambda11``/``lambda22`` the shares
    correctly kept in groups 1 and 2 under some assignment. When the
    first-stage relationship carries no group pattern, the limit of the
    pooled criterion is zero at the returned pair -- for *any* such
    assignment -- so the criterion admits a continuum of minimizers.
    """
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.ndim == 1:
        beta0 = beta0[:, None]
    if beta0.shape[0] != 2:
        raise LengthMismatch("pseudo-true values are defined for two groups")
    lambda2 = 1.0 - lambda1
    for name, lam in (("lambda1", lambda1), ("lambda11", lambda11), ("lambda22", lambda22)):
        if not 0.0 <= lam <= 1.0:
            raise LengthMismatch(f"{name} must lie in [0, 1]")
    if lambda11 > lambda1 + 1e-12 or lambda22 > lambda2 + 1e-12:
        raise LengthMismatch("correct-share fractions cannot exceed the group shares")
    den1 = lambda11 + lambda2 - lambda22
    den2 = lambda22 + lambda1 - lambda11
    if den1 <= 0.0 or den2 <= 0.0:
        raise DegenerateAssignment("a mixture denominator is zero for these shares")
    b1 = (lambda11 * beta0[0] + (lambda2 - lambda22) * beta0[1]) / den1
    b2 = (lambda22 * beta0[1] + (lambda1 - lambda11) * beta0[0]) / den2
    return np.vstack([b1, b2])
