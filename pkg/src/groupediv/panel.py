"""Balanced-panel data model, CSV ingestion, and fixed-effect transforms.

A panel holds a scalar outcome ``y``, a regressor block ``x`` (width d)
and an instrument block ``z`` (width m) on an N-by-T grid. Panels are
immutable after construction and safe to share across threads.

Files use the long (tidy) layout: one row per (unit, period), columns
``unit, period, y, x1..xd, z1..zm`` (names remappable through a schema
mapping). Unbalanced input is a hard error, never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DuplicateObservation,
    LengthMismatch,
    MissingColumn,
    NonFiniteValue,
    TooFewPeriods,
    UnbalancedPanel,
)

__all__ = [
    "PanelData",
    "Grouping",
    "GroupTruth",
    "load_panel",
    "save_panel",
    "within_transform",
    "first_difference",
]


@dataclass(frozen=True)
class PanelData:
    """A balanced N x T panel with regressors and instruments.

    Parameters
    ----------
    y : ndarray, shape (N, T)
        Dependent variable.
    x : ndarray, shape (N, T, d)
        Regressors (possibly endogenous).
    z : ndarray, shape (N, T, m)
        Instruments.
    unit_ids, period_ids : sequences, optional
        Labels for the two axes; defaults are 1..N and 1..T. Period
        labels must be stored in ascending order.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    unit_ids: tuple = field(default=None)
    period_ids: tuple = field(default=None)

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        z = np.ascontiguousarray(np.asarray(self.z, dtype=float))
        if y.ndim != 2:
            raise LengthMismatch(f"y must be (N, T), got shape {y.shape}")
        n, t = y.shape
        if x.ndim == 2:
            x = x[:, :, None]
        if z.ndim == 2:
            z = z[:, :, None]
        if x.ndim != 3 or x.shape[:2] != (n, t):
            raise LengthMismatch(f"x must be (N, T, d), got shape {x.shape}")
        if z.ndim != 3 or z.shape[:2] != (n, t):
            raise LengthMismatch(f"z must be (N, T, m), got shape {z.shape}")
        if x.shape[2] < 1 or z.shape[2] < 1:
            raise LengthMismatch("panel needs d >= 1 regressors and m >= 1 instruments")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if not np.isfinite(arr).all():
                raise NonFiniteValue(f"non-finite value in {name}")
        units = tuple(self.unit_ids) if self.unit_ids is not None else tuple(range(1, n + 1))
        periods = tuple(self.period_ids) if self.period_ids is not None else tuple(range(1, t + 1))
        if len(units) != n:
            raise LengthMismatch(f"{len(units)} unit ids for {n} units")
        if len(periods) != t:
            raise LengthMismatch(f"{len(periods)} period ids for {t} periods")
        for arr in (y, x, z):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "unit_ids", units)
        object.__setattr__(self, "period_ids", periods)

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    @property
    def m(self) -> int:
        return self.z.shape[2]

    def replace_data(self, y=None, x=None, z=None, period_ids=None) -> "PanelData":
        """Copy with some series swapped out (labels kept unless given)."""
        return PanelData(
            y=self.y if y is None else y,
            x=self.x if x is None else x,
            z=self.z if z is None else z,
            unit_ids=self.unit_ids,
            period_ids=self.period_ids if period_ids is None else tuple(period_ids),
        )


@dataclass(frozen=True)
class Grouping:
    """Group labels for the N units, valued in {1..n_groups}."""

    labels: np.ndarray
    n_groups: int

    def __post_init__(self):
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if labels.ndim != 1:
            raise LengthMismatch("labels must be a 1-D vector")
        if self.n_groups < 1:
            raise LengthMismatch("n_groups must be >= 1")
        if labels.size and (labels.min() < 1 or labels.max() > self.n_groups):
            raise LengthMismatch(
                f"labels must lie in 1..{self.n_groups}, got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def n_units(self) -> int:
        return self.labels.size

    @property
    def sizes(self) -> np.ndarray:
        """Member count per group (length n_groups)."""
        return np.bincount(self.labels - 1, minlength=self.n_groups)

    @property
    def empty_groups(self) -> tuple:
        """Labels in 1..n_groups with no members (representable but flagged)."""
        return tuple(int(g + 1) for g in np.flatnonzero(self.sizes == 0))


@dataclass(frozen=True)
class GroupTruth:
    """Simulation ground truth: memberships, coefficients, first stage.

    ``first_stage_pi`` holds one m x d coefficient matrix per unit (the
    per-group designs are stored expanded to units) and ``rho`` the
    unit-level correlation between the first- and second-stage errors.
    """

    grouping: Grouping
    beta: np.ndarray          # (G, d)
    first_stage_pi: np.ndarray  # (N, m, d)
    rho: np.ndarray           # (N,)


# --- file ingestion -----------------------------------------------------

_DEFAULT_ROLES = ("unit", "period", "y")


def _resolve_schema(columns, schema: Mapping | None):
    """Map file columns onto roles; x/z blocks default to x1..xd, z1..zm."""
    schema = dict(schema or {})
    unit = schema.get("unit", "unit")
    period = schema.get("period", "period")
    ycol = schema.get("y", "y")
    for role, name in (("unit", unit), ("period", period), ("y", ycol)):
        if name not in columns:
            raise MissingColumn(f"column '{name}' (role: {role}) not found")
    if "x" in schema:
        xcols = list(schema["x"])
    else:
        xcols = sorted(
            (c for c in columns if c.startswith("x") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
    if "z" in schema:
        zcols = list(schema["z"])
    else:
        zcols = sorted(
            (c for c in columns if c.startswith("z") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
    if not xcols:
        raise MissingColumn("no regressor columns (x1..xd) found or declared")
    if not zcols:
        raise MissingColumn("no instrument columns (z1..zm) found or declared")
    for c in xcols + zcols:
        if c not in columns:
            raise MissingColumn(f"column '{c}' not found")
    return unit, period, ycol, xcols, zcols


def load_panel(path, schema: Mapping | None = None) -> PanelData:
    """Read a long-format CSV into a validated balanced panel.

    Parameters
    ----------
    path : str or pathlib.Path
        UTF-8 CSV with a header row.
    schema : mapping, optional
        Role-to-column map with keys ``unit``, ``period``, ``y`` and
        (optionally) ``x``/``z`` as explicit column lists. Without it
        the columns ``unit, period, y, x1..xd, z1..zm`` are expected.

    Returns
    -------
    PanelData
        Units sorted by id, periods sorted ascending within each unit.
    """
    df = pd.read_csv(path)
    unit, period, ycol, xcols, zcols = _resolve_schema(df.columns, schema)

    dup = df.duplicated(subset=[unit, period])
    if dup.any():
        row = df.loc[dup.idxmax()]
        raise DuplicateObservation(
            f"(unit={row[unit]!r}, period={row[period]!r}) appears more than once"
        )

    units = np.sort(df[unit].unique())
    periods = np.sort(df[period].unique())
    n, t = len(units), len(periods)
    if len(df) != n * t:
        counts = df.groupby(unit)[period].apply(set)
        full = set(periods.tolist())
        for u, have in counts.items():
            missing = full - have
            if missing:
                raise UnbalancedPanel(
                    f"unit {u!r} is missing period(s) {sorted(missing)!r}"
                )
        raise UnbalancedPanel("panel is not balanced")

    df = df.sort_values([unit, period], kind="stable")
    value_cols = [ycol] + xcols + zcols
    values = df[value_cols].apply(pd.to_numeric, errors="coerce").to_numpy(float)
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        row = df.iloc[bad[0]]
        raise NonFiniteValue(
            f"non-finite value in column '{value_cols[bad[1]]}' at "
            f"(unit={row[unit]!r}, period={row[period]!r})"
        )
    values = values.reshape(n, t, len(value_cols))
    y = values[:, :, 0]
    x = values[:, :, 1 : 1 + len(xcols)]
    z = values[:, :, 1 + len(xcols) :]
    return PanelData(y=y, x=x, z=z, unit_ids=units.tolist(), period_ids=periods.tolist())


def save_panel(p: PanelData, path, schema: Mapping | None = None) -> None:
    """Write ``p`` back to long-format CSV (inverse of :func:`load_panel`)."""
    schema = dict(schema or {})
    unit = schema.get("unit", "unit")
    period = schema.get("period", "period")
    ycol = schema.get("y", "y")
    xcols = list(schema.get("x", [f"x{j + 1}" for j in range(p.d)]))
    zcols = list(schema.get("z", [f"z{j + 1}" for j in range(p.m)]))
    n, t = p.n_units, p.n_periods
    out = {
        unit: np.repeat(p.unit_ids, t),
        period: np.tile(p.period_ids, n),
        ycol: p.y.reshape(-1),
    }
    for j, c in enumerate(xcols):
        out[c] = p.x[:, :, j].reshape(-1)
    for j, c in enumerate(zcols):
        out[c] = p.z[:, :, j].reshape(-1)
    pd.DataFrame(out).to_csv(path, index=False)


# --- fixed-effect-removing transforms ------------------------------------

def within_transform(p: PanelData) -> PanelData:
    """Subtract each unit's time mean from every series.

    Removes any unit-specific constant exactly (up to round-off); the
    transformed series have zero time mean per unit.
    """
    if p.n_periods < 2:
        raise TooFewPeriods("within transform needs T >= 2")
    y = p.y - p.y.mean(axis=1, keepdims=True)
    x = p.x - p.x.mean(axis=1, keepdims=True)
    z = p.z - p.z.mean(axis=1, keepdims=True)
    return p.replace_data(y=y, x=x, z=z)


def first_difference(p: PanelData) -> PanelData:
    """Replace each series by its period-over-period difference.

    The output has T - 1 periods; the value at (new) period t equals
    input_t+1 - input_t in storage order. Period labels keep the later
    endpoint of each difference.
    """
    if p.n_periods < 2:
        raise TooFewPeriods("first difference needs T >= 2")
    y = np.diff(p.y, axis=1)
    x = np.diff(p.x, axis=1)
    z = np.diff(p.z, axis=1)
    return p.replace_data(y=y, x=x, z=z, period_ids=p.period_ids[1:])
