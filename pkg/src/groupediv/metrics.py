"""Classification and coefficient-accuracy metrics.

The Rand index scores agreement between two partitions of the units;
the Hausdorff distance scores how far an estimated set of group
coefficient vectors sits from the true set. Both are invariant to
relabeling groups, so no alignment is needed before scoring (an
alignment helper is provided for reporting).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch
from .panel import Grouping

__all__ = [
    "RandCounts",
    "rand_counts",
    "rand_index",
    "hausdorff",
    "align_labels",
    "separation_statistic",
]


@dataclass(frozen=True)
class RandCounts:
    """Pair-agreement counts between two partitions of N units.

    ``n11`` pairs grouped together by both, ``n10`` together only by the
    first, ``n01`` together only by the second, ``n00`` by neither;
    the four counts sum to N(N-1)/2.
    """

    n11: int
    n10: int
    n01: int
    n00: int

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00


def _labels_of(g) -> np.ndarray:
    if isinstance(g, Grouping):
        return np.asarray(g.labels)
    return np.asarray(g)


def rand_counts(g1, g2) -> RandCounts:
    """Pair counts via the contingency table (O(N + G1*G2), not O(N^2))."""
    a = _labels_of(g1)
    b = _labels_of(g2)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch("groupings must be equal-length label vectors")
    n = a.size
    if n < 2:
        raise LengthMismatch("need at least two units to compare groupings")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(c):
        return int((c * (c - 1) // 2).sum())

    n11 = pairs(table)
    n10 = pairs(table.sum(axis=1)) - n11
    n01 = pairs(table.sum(axis=0)) - n11
    n00 = n * (n - 1) // 2 - n11 - n10 - n01
    return RandCounts(n11=n11, n10=n10, n01=n01, n00=n00)


def rand_index(g1, g2) -> float:
    """Rand index in [0, 1]: share of unit pairs the two groupings agree on."""
    c = rand_counts(g1, g2)
    return (c.n11 + c.n00) / c.total


def _coef_matrix(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.ndim == 1:
        beta = beta[:, None]
    return beta.reshape(beta.shape[0], -1)


def hausdorff(beta, beta0, alpha=None, alpha0=None) -> float:
    """Hausdorff distance between two sets of group coefficients.

    Without time effects this is the usual max over the two directed
    max-min Euclidean distances between the rows of ``beta`` (G x d)
    and ``beta0``. When per-period effects ``alpha``/``alpha0`` (G x T)
    are supplied, the inner distance becomes the squared form
    ``|beta_g - beta0_h|^2 + mean_t |alpha_gt - alpha0_ht|^2`` and the
    returned value is the max-min of that joint quantity.
    """
    b1 = _coef_matrix(beta)
    b2 = _coef_matrix(beta0)
    if b1.shape != b2.shape:
        raise LengthMismatch(f"coefficient sets differ in shape: {b1.shape} vs {b2.shape}")
    if (alpha is None) != (alpha0 is None):
        raise LengthMismatch("supply both alpha and alpha0 or neither")
    diff = b1[:, None, :] - b2[None, :, :]
    dist = np.einsum("ghk,ghk->gh", diff, diff)
    if alpha is not None:
        a1 = np.asarray(alpha, dtype=float).reshape(b1.shape[0], -1)
        a2 = np.asarray(alpha0, dtype=float).reshape(b2.shape[0], -1)
        if a1.shape != a2.shape:
            raise LengthMismatch("alpha sets differ in shape")
        adiff = a1[:, None, :] - a2[None, :, :]
        dist = dist + np.einsum("ght,ght->gh", adiff, adiff) / a1.shape[1]
    else:
        dist = np.sqrt(dist)
    directed1 = dist.min(axis=1).max()
    directed2 = dist.min(axis=0).max()
    return float(max(directed1, directed2))


def align_labels(beta, beta0) -> np.ndarray:
    """Permutation matching estimated groups to true groups.

    Minimum-cost assignment over Euclidean coefficient distances.
    Returns a length-G vector ``perm`` with values in 1..G such that
    estimated group ``perm[h]`` corresponds to true group ``h + 1``.
    """
    b1 = _coef_matrix(beta)
    b2 = _coef_matrix(beta0)
    if b1.shape != b2.shape:
        raise LengthMismatch("coefficient sets differ in shape")
    diff = b1[:, None, :] - b2[None, :, :]
    cost = np.sqrt(np.einsum("ghk,ghk->gh", diff, diff))
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(b1.shape[0], dtype=np.int64)
    perm[cols] = rows + 1
    return perm


def separation_statistic(fitted, beta, alpha=None) -> float:
    """Average over units of the worst-case between-group contrast.

    For each unit the per-period fitted regressors are contrasted under
    every pair of distinct group coefficient vectors and the smallest
    time-averaged squared gap is kept; the statistic is the cross-unit
    mean. Larger values mean groups are easier to tell apart; zero means
    some pair of groups is indistinguishable on this data.
    """
    fitted = np.asarray(fitted, dtype=float)
    if fitted.ndim == 2:
        fitted = fitted[:, :, None]
    beta = np.asarray(beta, dtype=float)
    if beta.ndim == 1:
        beta = beta[:, None]
    g = beta.shape[0]
    if g < 2:
        raise LengthMismatch("separation needs at least two groups")
    bdiff = beta[:, None, :] - beta[None, :, :]                # (G, G, p)
    gap = np.einsum("ntp,ghp->ngth", fitted, bdiff)            # (N, G, T, G)
    gap = np.moveaxis(gap, 3, 2)                               # (N, G, G, T)
    if alpha is not None:
        alpha = np.asarray(alpha, dtype=float)
        gap = gap + (alpha[:, None, :] - alpha[None, :, :])[None, :, :, :]
    d_mat = (gap ** 2).mean(axis=3)                            # (N, G, G)
    off = ~np.eye(g, dtype=bool)
    return float(d_mat[:, off].min(axis=1).mean())
