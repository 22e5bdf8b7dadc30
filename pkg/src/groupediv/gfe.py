"""Grouped-fixed-effects least squares: the Kmeans-style engine.

Jointly estimates group memberships and group-specific regression
coefficients by alternating two exact steps until the assignment stops
changing:

* update  -- pooled least squares within each group (with per-group,
  per-period intercepts when ``time_effects`` is on);
* assign  -- each unit moves to the group whose coefficients minimize
  its own sum of squared residuals, ties to the smallest label.

The alternation is restarted from ``n_starts`` independent random
initial assignments and the lowest-objective fit wins (ties to the
lowest start index). Every restart owns an RNG stream derived from
``(seed, start_index)``, so results are bit-reproducible regardless of
how restarts are scheduled.

The response may be a vector: ``y`` with shape (N, T, q) fits one
coefficient matrix per group under the Frobenius-norm objective, which
is how the first-stage regression of a d-wide regressor block on the
instruments is estimated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyGroup,
    LengthMismatch,
    MonotonicityViolation,
    NonFiniteValue,
    SingularDesign,
)
from .panel import Grouping

__all__ = ["GfeOptions", "GroupedLinearFit", "gfe_fit", "assign_groups", "group_ols"]

COND_LIMIT = 1e10
_REL_SLACK = 1e-9


@dataclass(frozen=True)
class GfeOptions:
    """Tuning knobs for :func:`gfe_fit`.

    ``tol=0`` (the default) stops only when the assignment repeats
    exactly; a positive value additionally stops once the relative
    objective improvement falls below it. ``strict`` turns numerically
    rank-deficient group designs (condition number above 1e10) into
    :class:`SingularDesign` errors instead of minimum-norm solutions.
    ``validate_monotone`` raises if the objective ever increases across
    an update or assignment step (a debugging aid; repairs of emptied
    groups reset the baseline).
    """

    n_groups: int
    time_effects: bool = False
    n_starts: int = 100
    max_iter: int = 1000
    seed: int = 0
    tol: float = 0.0
    strict: bool = False
    validate_monotone: bool = False

    def __post_init__(self):
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass(frozen=True)
class GroupedLinearFit:
    """Result of a grouped least-squares fit.

    ``beta`` has shape (G, p) for a scalar response and (G, p, q) for a
    q-wide response; ``alpha`` ((G, T) or (G, T, q)) is present only for
    fits with time effects. ``objective`` is the sum of squared
    residuals divided by NT. ``degenerate`` flags that some group's
    normal matrix was rank deficient at the solution (minimum-norm
    coefficients were returned).
    """

    beta: np.ndarray
    grouping: Grouping
    objective: float
    n_iterations: int
    converged: bool
    start_index: int
    alpha: np.ndarray | None = None
    degenerate: bool = False


# --- shared helpers -------------------------------------------------------


def _as_response(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 2:
        return y[:, :, None], True
    if y.ndim == 3:
        return y, False
    raise LengthMismatch(f"response must be (N, T) or (N, T, q), got {y.shape}")


def _check_inputs(y3, w):
    if w.ndim != 3 or w.shape[:2] != y3.shape[:2]:
        raise LengthMismatch(
            f"regressors must be (N, T, p) aligned with the response; "
            f"got {w.shape} vs {y3.shape[:2]}"
        )
    if not np.isfinite(y3).all() or not np.isfinite(w).all():
        raise NonFiniteValue("non-finite value in gfe inputs")


def _unit_moments(y3, w):
    """Per-unit sufficient statistics for the no-time-effects steps."""
    s = np.einsum("ntp,nto->npo", w, w)               # (N, p, p)
    m = np.einsum("ntp,ntq->npq", w, y3)              # (N, p, q)
    qn = np.einsum("ntq,ntq->n", y3, y3)              # (N,)
    return s, m, qn


def _solve_normal(a, b, strict=False):
    """Solve a @ beta = b batched over leading axes.

    Returns minimum-norm solutions on rank-deficient blocks together
    with a per-block degeneracy flag. With ``strict`` a condition number
    above ``COND_LIMIT`` raises :class:`SingularDesign` instead.
    """
    p = a.shape[-1]
    lead = a.shape[:-2]
    if p == 0:
        return np.zeros(lead + (0, b.shape[-1])), np.zeros(lead, dtype=bool)
    if strict:
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.linalg.cond(a)
        if np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
            idx = np.unravel_index(
                int(np.argmax(np.where(np.isfinite(cond), cond, np.inf))), lead or (1,)
            )
            raise SingularDesign(
                f"group design at index {idx} has condition number above {COND_LIMIT:g}"
            )
    if p == 1:
        diag = a[..., 0, 0]
        deg = diag == 0.0
        safe = np.where(deg, 1.0, diag)
        beta = b / safe[..., None, None]
        if deg.any():
            beta[deg] = 0.0
        return beta, deg
    try:
        beta = np.linalg.solve(a, b)
        if np.isfinite(beta).all():
            return beta, np.zeros(lead, dtype=bool)
    except np.linalg.LinAlgError:
        pass
    flat_a = a.reshape(-1, p, p)
    flat_b = b.reshape(-1, p, b.shape[-1])
    out = np.empty_like(flat_b)
    deg = np.zeros(flat_a.shape[0], dtype=bool)
    for i in range(flat_a.shape[0]):
        if np.linalg.matrix_rank(flat_a[i], hermitian=True) < p:
            deg[i] = True
            out[i] = np.linalg.pinv(flat_a[i], hermitian=True) @ flat_b[i]
        else:
            out[i] = np.linalg.solve(flat_a[i], flat_b[i])
    return out.reshape(b.shape), deg.reshape(lead)


def _initial_labels(n_units, n_groups, n_starts, seed):
    """One random initial assignment per restart, no group left empty."""
    labels = np.empty((n_starts, n_units), dtype=np.int64)
    if n_groups == 1:
        labels[:] = 0
        return labels
    children = np.random.SeedSequence(seed).spawn(n_starts)
    for r in range(n_starts):
        rng = np.random.default_rng(children[r])
        for _ in range(1000):
            draw = rng.integers(0, n_groups, size=n_units)
            if np.bincount(draw, minlength=n_groups).min() > 0:
                break
        else:
            # all-groups-present fallback: seed one unit per group, rest random
            draw = np.concatenate(
                [np.arange(n_groups), rng.integers(0, n_groups, size=n_units - n_groups)]
            )
            draw = rng.permutation(draw)
        labels[r] = draw
    return labels


def _repair_empty(labels, ssr_row, n_groups):
    """Move worst-fitting units into emptied groups (smallest label first)."""
    counts = np.bincount(labels, minlength=n_groups)
    cur = ssr_row[np.arange(labels.size), labels]
    for g_empty in np.flatnonzero(counts == 0):
        order = np.argsort(-cur, kind="stable")
        for j in order:
            if counts[labels[j]] >= 2:
                counts[labels[j]] -= 1
                labels[j] = g_empty
                counts[g_empty] += 1
                cur[j] = ssr_row[j, g_empty]
                break
    return labels


def _objective(y3, w, beta, alpha, labels):
    """Mean squared residual recomputed directly from a stored fit."""
    fitted = np.einsum("ntp,npq->ntq", w, beta[labels])
    if alpha is not None:
        fitted = fitted + alpha[labels]
    resid = y3 - fitted
    n, t = y3.shape[:2]
    return float(np.einsum("ntq,ntq->", resid, resid) / (n * t))


# --- no-time-effects path: all restarts iterate together -----------------


def _fit_batch_plain(y3, w, opts: GfeOptions, labels0):
    n, t, q = y3.shape
    p = w.shape[2]
    g = opts.n_groups
    r = labels0.shape[0]
    s, m, qn = _unit_moments(y3, w)
    group_ids = np.arange(g)

    labels = labels0.copy()
    beta = np.zeros((r, g, p, q))
    obj = np.full(r, np.inf)
    last_obj = np.full(r, np.inf)
    n_iter = np.zeros(r, dtype=np.int64)
    converged = np.zeros(r, dtype=bool)
    degenerate = np.zeros(r, dtype=bool)
    active = np.arange(r)

    for it in range(opts.max_iter):
        lab = labels[active]
        onehot = (lab[:, :, None] == group_ids).astype(float)      # (ra, N, G)
        a_mat = np.einsum("rng,npo->rgpo", onehot, s)
        b_mat = np.einsum("rng,npq->rgpq", onehot, m)
        bet, deg = _solve_normal(a_mat, b_mat, strict=opts.strict)
        ssr = (
            qn[None, :, None]
            - 2.0 * np.einsum("rgpq,npq->rng", bet, m)
            + np.einsum("rgpq,npo,rgoq->rng", bet, s, bet)
        )
        np.maximum(ssr, 0.0, out=ssr)

        obj_update = np.take_along_axis(ssr, lab[:, :, None], axis=2)[:, :, 0].sum(axis=1)
        new_lab = np.argmin(ssr, axis=2)
        obj_assign = ssr.min(axis=2).sum(axis=1)
        if opts.validate_monotone:
            prev = last_obj[active]
            bad = (obj_update > prev * (1 + _REL_SLACK) + 1e-12) | (
                obj_assign > obj_update * (1 + _REL_SLACK) + 1e-12
            )
            if bad.any():
                raise MonotonicityViolation(
                    f"objective increased at iteration {it} for restart "
                    f"{int(active[np.argmax(bad)])}"
                )

        repaired = np.zeros(active.size, dtype=bool)
        if g > 1:
            counts = np.zeros((active.size, g), dtype=np.int64)
            rows = np.repeat(np.arange(active.size), n)
            np.add.at(counts, (rows, new_lab.reshape(-1)), 1)
            for i in np.flatnonzero((counts == 0).any(axis=1)):
                new_lab[i] = _repair_empty(new_lab[i], ssr[i], g)
                repaired[i] = True
                obj_assign[i] = ssr[i, np.arange(n), new_lab[i]].sum()

        beta[active] = bet
        degenerate[active] |= deg.any(axis=1)
        done = (~repaired) & (new_lab == lab).all(axis=1)
        if opts.tol > 0:
            prev = last_obj[active]
            with np.errstate(invalid="ignore"):
                small = (prev - obj_assign) < opts.tol * np.maximum(prev, 1e-300)
            done |= (~repaired) & np.isfinite(prev) & small
        labels[active] = new_lab
        obj[active] = obj_assign
        last_obj[active] = np.where(repaired, np.inf, obj_assign)
        n_iter[active] = it + 1
        if done.any():
            converged[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break

    return labels, beta, None, obj, n_iter, converged, degenerate


# --- time-effects path: one restart at a time -----------------------------


def _group_ols_time_effects(y3, w, onehot, counts, s, m, strict):
    """Exact per-group OLS with per-(group, period) intercepts."""
    inv_counts = 1.0 / counts
    ybar = np.einsum("ng,ntq->gtq", onehot, y3) * inv_counts[:, None, None]
    wbar = np.einsum("ng,ntp->gtp", onehot, w) * inv_counts[:, None, None]
    a_mat = np.einsum("ng,npo->gpo", onehot, s) - counts[:, None, None] * np.einsum(
        "gtp,gto->gpo", wbar, wbar
    )
    b_mat = np.einsum("ng,npq->gpq", onehot, m) - counts[:, None, None] * np.einsum(
        "gtp,gtq->gpq", wbar, ybar
    )
    beta, deg = _solve_normal(a_mat, b_mat, strict=strict)
    alpha = ybar - np.einsum("gtp,gpq->gtq", wbar, beta)
    return beta, alpha, deg


def _ssr_matrix_time_effects(y3, w, beta, alpha, s, m, qn):
    ssr = (
        qn[:, None]
        - 2.0 * np.einsum("gpq,npq->ng", beta, m)
        + np.einsum("gpq,npo,goq->ng", beta, s, beta)
        + np.einsum("gtq,gtq->g", alpha, alpha)[None, :]
        - 2.0 * np.einsum("gtq,ntq->ng", alpha, y3)
        + 2.0 * np.einsum("gtq,gpq,ntp->ng", alpha, beta, w)
    )
    np.maximum(ssr, 0.0, out=ssr)
    return ssr


def _fit_one_time_effects(y3, w, opts: GfeOptions, labels):
    n, t, q = y3.shape
    g = opts.n_groups
    s, m, qn = _unit_moments(y3, w)
    group_ids = np.arange(g)
    labels = labels.copy()
    last_obj = np.inf
    degenerate = False
    beta = alpha = None
    obj = np.inf
    converged = False
    n_iter = 0

    for it in range(opts.max_iter):
        onehot = (labels[:, None] == group_ids).astype(float)
        counts = onehot.sum(axis=0)
        beta, alpha, deg = _group_ols_time_effects(
            y3, w, onehot, counts, s, m, opts.strict
        )
        degenerate |= bool(deg.any())
        ssr = _ssr_matrix_time_effects(y3, w, beta, alpha, s, m, qn)
        obj_update = ssr[np.arange(n), labels].sum()
        new_labels = np.argmin(ssr, axis=1)
        obj = ssr.min(axis=1).sum()
        if opts.validate_monotone:
            if obj_update > last_obj * (1 + _REL_SLACK) + 1e-12 or obj > obj_update * (
                1 + _REL_SLACK
            ) + 1e-12:
                raise MonotonicityViolation(f"objective increased at iteration {it}")

        repaired = False
        if g > 1 and np.bincount(new_labels, minlength=g).min() == 0:
            new_labels = _repair_empty(new_labels, ssr, g)
            repaired = True
            obj = ssr[np.arange(n), new_labels].sum()

        done = (not repaired) and (new_labels == labels).all()
        if opts.tol > 0 and not repaired and np.isfinite(last_obj):
            done = done or (last_obj - obj) < opts.tol * max(last_obj, 1e-300)
        labels = new_labels
        last_obj = np.inf if repaired else obj
        n_iter = it + 1
        if done:
            converged = True
            break

    return labels, beta, alpha, obj, n_iter, converged, degenerate


# --- public API -----------------------------------------------------------


def gfe_fit(y, w, opts: GfeOptions, init_labels=None) -> GroupedLinearFit:
    """Best grouped least-squares fit over multi-start alternation.

    Parameters
    ----------
    y : ndarray, shape (N, T) or (N, T, q)
        Response; a 3-D response is fit under the Frobenius objective
        with one (p, q) coefficient matrix per group.
    w : ndarray, shape (N, T, p)
        Regressors entering every group's design.
    opts : GfeOptions
        Group count, restarts, seed, and convergence policy.
    init_labels : ndarray, optional
        Extra starting assignments, shape (n_extra, N) with labels in
        0..G-1; appended after the seeded random starts (their start
        indices continue the count). Used for warm starts.

    Returns
    -------
    GroupedLinearFit
        The lowest-objective fit; ties go to the lowest start index.
    """
    y3, squeeze = _as_response(y)
    w = np.asarray(w, dtype=float)
    _check_inputs(y3, w)
    n = y3.shape[0]
    g = opts.n_groups
    if n < g:
        raise LengthMismatch(f"need at least as many units as groups (N={n}, G={g})")

    n_starts = 1 if g == 1 else opts.n_starts
    labels0 = _initial_labels(n, g, n_starts, opts.seed)
    if init_labels is not None:
        extra = np.asarray(init_labels, dtype=np.int64)
        if extra.ndim == 1:
            extra = extra[None, :]
        if extra.shape[1] != n or (extra.size and (extra.min() < 0 or extra.max() >= g)):
            raise LengthMismatch("init_labels must be (n_extra, N) with labels in 0..G-1")
        labels0 = np.vstack([labels0, extra])

    if opts.time_effects:
        best = None
        for r in range(labels0.shape[0]):
            out = _fit_one_time_effects(y3, w, opts, labels0[r])
            if best is None or out[3] < best[1][3]:
                best = (r, out)
        r_win, (labels, beta, alpha, _, n_iter, conv, deg) = best
        lab_w, beta_w, alpha_w = labels, beta, alpha
        iter_w, conv_w, deg_w = n_iter, conv, deg
    else:
        labels, beta, alpha, obj, n_iter, conv, deg = _fit_batch_plain(
            y3, w, opts, labels0
        )
        r_win = int(np.lexsort((np.arange(obj.size), obj))[0])
        lab_w, beta_w = labels[r_win], beta[r_win]
        alpha_w = None
        iter_w, conv_w, deg_w = int(n_iter[r_win]), bool(conv[r_win]), bool(deg[r_win])

    objective = _objective(y3, w, beta_w, alpha_w, lab_w)
    if squeeze:
        beta_out = beta_w[:, :, 0]
        alpha_out = None if alpha_w is None else alpha_w[:, :, 0]
    else:
        beta_out = beta_w
        alpha_out = alpha_w
    return GroupedLinearFit(
        beta=beta_out,
        grouping=Grouping(labels=lab_w + 1, n_groups=g),
        objective=objective,
        n_iterations=iter_w,
        converged=conv_w,
        start_index=int(r_win),
        alpha=alpha_out,
        degenerate=deg_w,
    )


def assign_groups(y, w, beta, alpha=None) -> Grouping:
    """Assign each unit to its SSR-minimizing group, ties to the smallest label.

    ``beta`` has shape (G, p) (or (G, p, q) for a q-wide response) and
    ``alpha``, when the fit carries time effects, (G, T) or (G, T, q).
    """
    y3, squeeze = _as_response(y)
    w = np.asarray(w, dtype=float)
    _check_inputs(y3, w)
    beta = np.asarray(beta, dtype=float)
    if squeeze and beta.ndim == 2:
        beta = beta[:, :, None]
    if beta.ndim != 3 or beta.shape[1] != w.shape[2] or beta.shape[2] != y3.shape[2]:
        raise LengthMismatch(f"beta shape {beta.shape} does not match data")
    fitted = np.einsum("ntp,gpq->ngtq", w, beta)
    if alpha is not None:
        alpha = np.asarray(alpha, dtype=float)
        if squeeze and alpha.ndim == 2:
            alpha = alpha[:, :, None]
        fitted = fitted + alpha[None, :, :, :]
    resid = y3[:, None, :, :] - fitted
    ssr = np.einsum("ngtq,ngtq->ng", resid, resid)
    return Grouping(labels=np.argmin(ssr, axis=1) + 1, n_groups=beta.shape[0])


def group_ols(y, w, grouping: Grouping, time_effects: bool = False, strict: bool = False):
    """Per-group least squares given a fixed assignment.

    Returns ``(beta, alpha)`` where ``alpha`` is None without time
    effects. With time effects the coefficients are fit on data demeaned
    within each (group, period) cell and ``alpha[g, t]`` is the mean
    residual of that cell. Rank-deficient group designs yield the
    minimum-norm solution unless ``strict`` is set.
    """
    y3, squeeze = _as_response(y)
    w = np.asarray(w, dtype=float)
    _check_inputs(y3, w)
    labels = grouping.labels - 1
    g = grouping.n_groups
    if labels.size != y3.shape[0]:
        raise LengthMismatch("grouping does not match the number of units")
    sizes = np.bincount(labels, minlength=g)
    if sizes.min() == 0:
        raise EmptyGroup(f"group {int(np.argmin(sizes)) + 1} has no members")
    s, m, _ = _unit_moments(y3, w)
    onehot = (labels[:, None] == np.arange(g)).astype(float)
    if time_effects:
        beta, alpha, _ = _group_ols_time_effects(
            y3, w, onehot, sizes.astype(float), s, m, strict
        )
    else:
        a_mat = np.einsum("ng,npo->gpo", onehot, s)
        b_mat = np.einsum("ng,npq->gpq", onehot, m)
        beta, _ = _solve_normal(a_mat, b_mat, strict=strict)
        alpha = None
    if squeeze:
        beta = beta[:, :, 0]
        alpha = None if alpha is None else alpha[:, :, 0]
    return beta, alpha
