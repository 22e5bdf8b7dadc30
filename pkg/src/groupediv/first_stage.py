"""First-stage fits: instrument-to-regressor models and fitted regressors.

Three heterogeneity regimes are supported for the regression of the
endogenous block x on the instruments z:

* homogeneous    -- one m x d coefficient matrix for the whole panel;
* grouped        -- K latent groups of coefficient matrices, estimated
                    by the grouped least-squares engine (optionally with
                    per-group per-period effects);
* unit-specific  -- one matrix per unit, closed form; when per-period
                    group effects are requested the unit coefficients
                    and the K period-effect paths are estimated jointly
                    by block coordinate descent.

Also provides the instrument-combination device for dynamic panels,
which collapses a period-varying instrument set to a fixed width by a
per-period cross-sectional regression.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import LengthMismatch, SingularDesign
from .gfe import GfeOptions, GroupedLinearFit, gfe_fit
from .panel import Grouping, PanelData

__all__ = [
    "FirstStageFit",
    "fs_homogeneous",
    "fs_grouped",
    "fs_unit_specific",
    "combine_dynamic_instruments",
]


@dataclass(frozen=True)
class FirstStageFit:
    """A fitted first stage and the implied regressor panel.

    ``kind`` is one of ``"homogeneous"``, ``"grouped"`` or
    ``"unit_specific"``; ``pi`` holds the m x d coefficient matrix
    (homogeneous), the K matrices (grouped) or the N matrices
    (unit-specific). ``mu`` ((K, T, d)) and ``kappa`` are present for
    fits with per-group period effects; ``kappa`` also identifies the
    grouped fit's memberships. ``min_f_stat`` is a relevance
    diagnostic: the smallest F-like statistic across the fit's units or
    groups (small values warn of weak instruments).
    """

    kind: str
    pi: np.ndarray
    x_hat: np.ndarray
    residual_ss: float
    mu: np.ndarray | None = None
    kappa: Grouping | None = None
    n_fs_groups: int | None = None
    min_f_stat: float | None = None


def _f_like(x_hat_block, resid_block, m):
    """Crude relevance statistic: explained vs residual mean square."""
    n_obs = x_hat_block.shape[0] * x_hat_block.shape[1] * x_hat_block.shape[2]
    dof_resid = max(n_obs - m, 1)
    rss = float((resid_block ** 2).sum())
    ess = float((x_hat_block ** 2).sum())
    if rss == 0.0:
        return np.inf
    return (ess / m) / (rss / dof_resid)


def fs_homogeneous(p: PanelData) -> FirstStageFit:
    """Pooled regression of every regressor column on the instruments.

    A single coefficient matrix solves the pooled normal equations; the
    fitted panel is its image of z. Raises :class:`SingularDesign` when
    the pooled instrument moment matrix is (numerically) singular.
    """
    fit = fs_grouped(p, 1, GfeOptions(n_groups=1, n_starts=1, seed=0, strict=True))
    resid = p.x - fit.x_hat
    return FirstStageFit(
        kind="homogeneous",
        pi=fit.pi[0],
        x_hat=fit.x_hat,
        residual_ss=fit.residual_ss,
        min_f_stat=_f_like(fit.x_hat, resid, p.m),
    )


def fs_grouped(
    p: PanelData, k: int, opts: GfeOptions, time_effects: bool = False
) -> FirstStageFit:
    """Latent-group first stage with K groups of coefficient matrices.

    All d regressor columns are fit jointly under the Frobenius-norm
    objective; with ``time_effects`` each group also carries a (T, d)
    path of period effects. K = 1 without time effects reproduces the
    homogeneous fit exactly.
    """
    if k < 1:
        raise LengthMismatch("need at least one first-stage group")
    opts = replace(opts, n_groups=k, time_effects=time_effects)
    fit: GroupedLinearFit = gfe_fit(p.x, p.z, opts)
    labels0 = fit.grouping.labels - 1
    x_hat = np.einsum("ntm,nmd->ntd", p.z, fit.beta[labels0])
    if fit.alpha is not None:
        x_hat = x_hat + fit.alpha[labels0]
    resid = p.x - x_hat
    rss = float((resid ** 2).sum())
    min_f = np.inf
    for g in range(k):
        members = labels0 == g
        if members.any():
            min_f = min(min_f, _f_like(x_hat[members], resid[members], p.m))
    grouped = k > 1 or time_effects
    return FirstStageFit(
        kind="grouped" if grouped else "homogeneous",
        pi=fit.beta,
        x_hat=x_hat,
        residual_ss=rss,
        mu=fit.alpha,
        kappa=fit.grouping if grouped else None,
        n_fs_groups=k if grouped else None,
        min_f_stat=float(min_f),
    )


def _per_unit_pi(z, target):
    """Closed-form per-unit solve of z-moment equations; names offenders."""
    a = np.einsum("ntm,nto->nmo", z, z)
    b = np.einsum("ntm,ntd->nmd", z, target)
    try:
        pi = np.linalg.solve(a, b)
        if np.isfinite(pi).all():
            return pi
    except np.linalg.LinAlgError:
        pass
    m = z.shape[2]
    for i in range(z.shape[0]):
        if np.linalg.matrix_rank(a[i], hermitian=True) < m:
            raise SingularDesign(
                f"instrument moment matrix for unit index {i} is singular"
            )
    raise SingularDesign("per-unit instrument moment matrix is ill conditioned")


def fs_unit_specific(
    p: PanelData,
    time_effects: bool = False,
    k_for_mu: int | None = None,
    opts: GfeOptions | None = None,
) -> FirstStageFit:
    """Fully heterogeneous first stage, one coefficient matrix per unit.

    Without time effects each unit's matrix has a closed form. With
    ``time_effects`` the unit matrices and K group-shared period-effect
    paths are estimated jointly: alternate (a) per-unit solves on the
    effect-adjusted regressand and (b) clustering of the unit-level
    residual paths into K period-effect groups, until the joint
    objective improves by less than 1e-10 (relative) or 200 rounds.
    """
    if not time_effects:
        pi = _per_unit_pi(p.z, p.x)
        x_hat = np.einsum("ntm,nmd->ntd", p.z, pi)
        resid = p.x - x_hat
        min_f = min(
            _f_like(x_hat[i : i + 1], resid[i : i + 1], p.m) for i in range(p.n_units)
        )
        return FirstStageFit(
            kind="unit_specific",
            pi=pi,
            x_hat=x_hat,
            residual_ss=float((resid ** 2).sum()),
            min_f_stat=float(min_f),
        )

    if k_for_mu is None or k_for_mu < 1:
        raise LengthMismatch("time effects need k_for_mu >= 1 period-effect groups")
    if opts is None:
        opts = GfeOptions(n_groups=k_for_mu)
    n, t = p.n_units, p.n_periods
    warm = fs_grouped(p, k_for_mu, opts, time_effects=True)
    mu = warm.mu                       # (K, T, d)
    labels = warm.kappa.labels - 1     # 0-based
    zero_w = np.zeros((n, t, 0))
    mu_opts = GfeOptions(
        n_groups=k_for_mu,
        time_effects=True,
        n_starts=1,
        max_iter=opts.max_iter,
        seed=opts.seed,
        strict=opts.strict,
    )

    last = np.inf
    for _ in range(200):
        pi = _per_unit_pi(p.z, p.x - mu[labels])
        resid_paths = p.x - np.einsum("ntm,nmd->ntd", p.z, pi)
        # warm-started pure-period-effect clustering keeps the joint
        # objective nonincreasing; the random restarts can only improve it
        cluster = gfe_fit(resid_paths, zero_w, mu_opts, init_labels=labels[None, :])
        mu = cluster.alpha
        labels = cluster.grouping.labels - 1
        obj = cluster.objective
        if np.isfinite(last) and last - obj <= 1e-10 * max(last, 1e-300):
            break
        last = obj

    x_hat = np.einsum("ntm,nmd->ntd", p.z, pi) + mu[labels]
    resid = p.x - x_hat
    min_f = min(
        _f_like(x_hat[i : i + 1], resid[i : i + 1], p.m) for i in range(p.n_units)
    )
    return FirstStageFit(
        kind="unit_specific",
        pi=pi,
        x_hat=x_hat,
        residual_ss=float((resid ** 2).sum()),
        mu=mu,
        kappa=Grouping(labels=labels + 1, n_groups=k_for_mu),
        n_fs_groups=k_for_mu,
        min_f_stat=float(min_f),
    )


def combine_dynamic_instruments(z_by_period, target, gammas=None) -> np.ndarray:
    """Collapse period-varying instrument sets to a fixed-width panel.

    Parameters
    ----------
    z_by_period : sequence of ndarrays
        One (N, m_t) array per period; widths m_t may differ.
    target : ndarray, shape (N, T) or (N, T, d)
        The endogenous quantity the combined instrument should track
        (the lagged differenced outcome in an AR(1) design).
    gammas : sequence of ndarrays, optional
        User-supplied (m_t, d) combination weights per period; when
        omitted each period's weights come from the cross-sectional
        regression of the target on that period's instruments.

    Returns
    -------
    ndarray, shape (N, T, d)
        The combined instrument panel, usable by every estimator.
    """
    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        target = target[:, :, None]
    n, t, d = target.shape
    if len(z_by_period) != t:
        raise LengthMismatch(f"{len(z_by_period)} instrument blocks for T={t} periods")
    out = np.empty((n, t, d))
    for s in range(t):
        z_t = np.asarray(z_by_period[s], dtype=float)
        if z_t.ndim == 1:
            z_t = z_t[:, None]
        if z_t.shape[0] != n:
            raise LengthMismatch(f"period {s}: {z_t.shape[0]} rows for N={n} units")
        if gammas is not None:
            gamma = np.asarray(gammas[s], dtype=float)
            if gamma.shape != (z_t.shape[1], d):
                raise LengthMismatch(f"period {s}: gamma must be (m_t, d)")
        else:
            a = z_t.T @ z_t / n
            b = z_t.T @ target[:, s, :] / n
            try:
                gamma = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                raise SingularDesign(
                    f"cross-sectional instrument moments singular at period {s}"
                ) from None
            if not np.isfinite(gamma).all():
                raise SingularDesign(
                    f"cross-sectional instrument moments singular at period {s}"
                )
        out[:, s, :] = z_t @ gamma
    return out
