"""Simulation designs and the Monte Carlo harness.

Four two-group designs stress the estimators through their first
stage: (1) a homogeneous instrument-regressor relationship, (2) a
two-group relationship orthogonal to the outcome grouping, (3) fully
unit-specific strengths with signs split across the sample, (4) a
homogeneous first stage but error correlations whose grouped pattern
differs from the coefficient grouping. A fifth design ("c1") draws
unit-specific first-stage strengths from a normal distribution while
keeping the outcome equation homogeneous; it is used for selection and
bias studies.

All randomness comes from counter-based Philox streams keyed by
(master seed, cell index, replication index, role) with normal draws
produced by the inverse CDF applied to 53-bit uniforms
``(k + 0.5) / 2**53``. Replications are therefore independent,
order-insensitive, and reproducible across runs and thread counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .errors import GroupedIVError, LengthMismatch, OddN
from .estimators import estimate
from .gfe import GfeOptions
from .metrics import hausdorff, rand_index
from .panel import Grouping, GroupTruth, PanelData
from .selection import select_g_second_stage, select_k_first_stage

__all__ = [
    "DgpConfig",
    "McCell",
    "McReport",
    "gen_dgp",
    "run_monte_carlo",
    "table_grid",
]

_ROLE_DATA = 7
_ROLE_METHOD = 11
_DGP_IDS = ("1", "2", "3", "4", "c1")


def _derive_seed(*parts) -> int:
    entropy = tuple(int(p) for p in parts)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def _stream(seed: int, role: int) -> np.random.Generator:
    key = np.random.SeedSequence((int(seed), int(role))).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    k = rng.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return (k + 0.5) * 2.0 ** -53


def _normals(rng: np.random.Generator, shape) -> np.ndarray:
    return ndtri(_uniforms(rng, shape))


@dataclass(frozen=True)
class DgpConfig:
    """One simulated panel: design id, dimensions, noise, and seed.

    ``sigma`` scales both the instrument and the first-stage error;
    ``rho`` is the correlation between the first- and second-stage
    errors (design 4 flips its sign for the second half of the units).
    Defaults: -0.5 except for design 4, the high-correlation case,
    where it is -0.75. ``mu_pi``/``sigma_pi`` parameterize design
    "c1" only.
    """

    dgp: str
    n: int
    t: int
    sigma: float
    rho: float | None = None
    mu_pi: float | None = None
    sigma_pi: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dgp", str(self.dgp).lower())
        if self.dgp not in _DGP_IDS:
            raise LengthMismatch(f"unknown design {self.dgp!r}; expected one of {_DGP_IDS}")
        if self.rho is None:
            object.__setattr__(self, "rho", -0.75 if self.dgp == "4" else -0.5)
        if self.sigma <= 0:
            raise LengthMismatch("sigma must be positive")
        if not abs(self.rho) < 1:
            raise LengthMismatch("|rho| must be < 1")
        if self.dgp == "c1" and (self.mu_pi is None or self.sigma_pi is None):
            raise LengthMismatch("design c1 needs mu_pi and sigma_pi")


def gen_dgp(cfg: DgpConfig):
    """Draw one panel and its ground truth.

    Returns ``(PanelData, GroupTruth)``. The outcome equation is
    y = beta_g * x + u with beta = (+1, -1) split over the two halves
    of the sample (all +1 for design "c1"); the first stage is
    x = pi_i * z + v with the design-specific pi pattern.
    """
    n, t = cfg.n, cfg.t
    if n % 2 != 0:
        raise OddN("designs split the sample in half; N must be even")

    half = n // 2
    if cfg.dgp == "c1":
        labels = np.ones(n, dtype=np.int64)
        beta_groups = np.array([[1.0]])
    else:
        labels = np.repeat([1, 2], half)
        beta_groups = np.array([[1.0], [-1.0]])
    grouping = Grouping(labels=labels, n_groups=beta_groups.shape[0])

    rho_i = np.full(n, cfg.rho)
    if cfg.dgp == "4":
        rho_i[half:] = -cfg.rho

    if cfg.dgp in ("1", "4"):
        pi = np.ones(n)
    elif cfg.dgp == "2":
        pi = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)  # units 1,3,.. are odd
    elif cfg.dgp == "3":
        u_pi = _uniforms(_stream(cfg.seed, 3), n)
        pi = np.where(np.arange(n) < half, 0.5 + u_pi, -(0.5 + u_pi))
    else:  # c1
        pi = cfg.mu_pi + cfg.sigma_pi * _normals(_stream(cfg.seed, 3), n)

    z = cfg.sigma * _normals(_stream(cfg.seed, 1), (n, t))
    a, b = _normals(_stream(cfg.seed, 2), (2, n, t))
    v = cfg.sigma * a
    u = rho_i[:, None] * a + np.sqrt(1.0 - rho_i ** 2)[:, None] * b

    x = pi[:, None] * z + v
    beta_i = beta_groups[labels - 1, 0]
    y = beta_i[:, None] * x + u
    panel = PanelData(y=y, x=x, z=z)
    truth = GroupTruth(
        grouping=grouping,
        beta=beta_groups,
        first_stage_pi=pi.reshape(n, 1, 1),
        rho=rho_i,
    )
    return panel, truth


# --- harness ---------------------------------------------------------------


@dataclass(frozen=True)
class McCell:
    """One experiment cell: a design point and the methods to run on it.

    ``mode="estimate"`` scores classification and coefficient accuracy
    at the known group count ``g``; ``mode="select"`` scores how often
    each method's information criterion picks each group count up to
    ``g_max``. Method names: ``ig``, ``2sls``, ``ugfe``, ``rf``,
    ``tgfe2`` (two first-stage groups), ``tgfe_n4`` (N/4 groups), or
    ``tgfe:<k>``; in select mode use plain ``tgfe``.
    """

    dgp: str
    n: int
    t: int
    sigma: float
    methods: tuple
    mode: str = "estimate"
    g: int = 2
    g_max: int = 5
    k_max: int = 5
    penalty: str = "pcp3"
    rho: float | None = None
    mu_pi: float | None = None
    sigma_pi: float | None = None


@dataclass(frozen=True)
class McRow:
    dgp: str
    n: int
    t: int
    sigma: float
    method: str
    n_ok: int
    n_failed: int
    mean_ri: float | None = None
    mean_hd_pre: float | None = None
    mean_hd_post: float | None = None
    g_freq: tuple | None = None
    mean_coef: float | None = None
    sd_coef: float | None = None
    mu_pi: float | None = None
    sigma_pi: float | None = None


@dataclass(frozen=True)
class McReport:
    """Per-cell, per-method averages plus the inputs that produced them."""

    rows: list
    n_reps: int
    n_starts: int
    master_seed: int

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            rec = {
                "dgp": r.dgp,
                "n": r.n,
                "t": r.t,
                "sigma": r.sigma,
                "method": r.method,
                "n_reps": self.n_reps,
                "n_ok": r.n_ok,
                "n_failed": r.n_failed,
                "mean_ri": r.mean_ri,
                "mean_hausdorff_pre": r.mean_hd_pre,
                "mean_hausdorff_post": r.mean_hd_post,
            }
            if r.mu_pi is not None:
                rec["mu_pi"] = r.mu_pi
                rec["sigma_pi"] = r.sigma_pi
            if r.mean_coef is not None:
                rec["mean_coef"] = r.mean_coef
                rec["sd_coef"] = r.sd_coef
            if r.g_freq is not None:
                for i, f in enumerate(r.g_freq):
                    rec[f"freq_g{i + 1}"] = f
            records.append(rec)
        return pd.DataFrame.from_records(records)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def to_text(self, metric: str = "mean_ri") -> str:
        """Aligned table, one row per (design, N, T), one column per method."""
        df = self.to_frame()
        if metric == "g_freq":
            cols = [c for c in df.columns if c.startswith("freq_g")]
            if not cols:
                return "(no selection frequencies in this report)"
            out = df[["dgp", "n", "t", "sigma", "method"] + cols]
            return out.to_string(index=False, float_format=lambda v: f"{v:.2f}")
        if metric not in df.columns:
            return f"(no {metric} values in this report)"
        index = ["dgp", "n", "t", "sigma"]
        if "mu_pi" in df.columns:
            index = ["dgp", "mu_pi", "sigma_pi", "n", "t", "sigma"]
        pivot = df.pivot_table(
            index=index,
            columns="method",
            values=metric,
            aggfunc="first",
            sort=False,
        )
        return pivot.to_string(float_format=lambda v: f"{v:.3f}")


def _parse_method(name: str, n: int):
    name = name.lower()
    if name.startswith("tgfe"):
        if name == "tgfe2":
            return "tgfe", 2
        if name == "tgfe_n4":
            return "tgfe", max(n // 4, 1)
        if name.startswith("tgfe:"):
            return "tgfe", int(name.split(":", 1)[1])
        return "tgfe", None
    return name, None


def _cell_config(cell: McCell, seed: int) -> DgpConfig:
    return DgpConfig(
        dgp=cell.dgp,
        n=cell.n,
        t=cell.t,
        sigma=cell.sigma,
        rho=cell.rho,
        mu_pi=cell.mu_pi,
        sigma_pi=cell.sigma_pi,
        seed=seed,
    )


def _run_estimate_rep(cell, panel, truth, seeds, n_starts):
    out = {}
    for j, name in enumerate(cell.methods):
        base, k = _parse_method(name, cell.n)
        opts = GfeOptions(n_groups=cell.g, n_starts=n_starts, seed=seeds[j])
        res = estimate(panel, base, cell.g, opts, k=k)
        ri = rand_index(res.grouping, truth.grouping)
        hd_pre = np.nan
        if base != "rf" and res.pre_beta.shape == truth.beta.shape:
            hd_pre = hausdorff(res.pre_beta, truth.beta)
        hd_post = hausdorff(res.post_beta, truth.beta)
        coef = np.nan
        if cell.g == 1 and panel.d == 1 and base != "rf":
            coef = float(res.pre_beta[0, 0])
        out[name] = (ri, hd_pre, hd_post, coef)
    return out


def _run_select_rep(cell, panel, seeds, n_starts):
    out = {}
    for j, name in enumerate(cell.methods):
        base, k = _parse_method(name, cell.n)
        opts = GfeOptions(n_groups=1, n_starts=n_starts, seed=seeds[j])
        if base == "tgfe":
            if k is None:
                k_res = select_k_first_stage(panel, cell.k_max, cell.penalty, opts)
                k = k_res.chosen
            g_res = select_g_second_stage(
                panel, cell.g_max, "tgfe", cell.penalty, opts, k=k, k_max=cell.k_max
            )
        else:
            g_res = select_g_second_stage(panel, cell.g_max, base, cell.penalty, opts)
        out[name] = g_res.chosen
    return out


def _run_one_rep(cell, ci, rep, n_starts, master_seed):
    for attempt in (0, 1):
        cfg = _cell_config(
            cell, _derive_seed(master_seed, _ROLE_DATA, ci, rep, attempt)
        )
        seeds = [
            _derive_seed(master_seed, _ROLE_METHOD, ci, rep, j, attempt)
            for j in range(len(cell.methods))
        ]
        try:
            panel, truth = gen_dgp(cfg)
            if cell.mode == "select":
                return _run_select_rep(cell, panel, seeds, n_starts)
            return _run_estimate_rep(cell, panel, truth, seeds, n_starts)
        except (GroupedIVError, np.linalg.LinAlgError):
            if attempt == 1:
                return None
    return None


def run_monte_carlo(
    grid,
    n_reps: int = 100,
    n_starts: int = 100,
    master_seed: int = 0,
    threads: int = 1,
) -> McReport:
    """Run every cell of ``grid`` for ``n_reps`` replications.

    A replication that fails on a singular draw is regenerated once
    from a perturbed stream; a second failure is recorded as missing,
    never silently dropped. The report is a pure function of
    ``(grid, n_reps, n_starts, master_seed)`` whatever ``threads`` is.
    """
    grid = list(grid)
    if not grid:
        raise LengthMismatch("the experiment grid is empty")
    tasks = [(ci, rep) for ci in range(len(grid)) for rep in range(n_reps)]
    results = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                (ci, rep): pool.submit(
                    _run_one_rep, grid[ci], ci, rep, n_starts, master_seed
                )
                for ci, rep in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for ci, rep in tasks:
            results[(ci, rep)] = _run_one_rep(grid[ci], ci, rep, n_starts, master_seed)

    rows = []
    for ci, cell in enumerate(grid):
        reps = [results[(ci, rep)] for rep in range(n_reps)]
        ok = [r for r in reps if r is not None]
        n_failed = n_reps - len(ok)
        for name in cell.methods:
            if cell.mode == "select":
                freq = np.zeros(cell.g_max, dtype=np.int64)
                for r in ok:
                    freq[r[name] - 1] += 1
                rows.append(
                    McRow(
                        dgp=cell.dgp,
                        n=cell.n,
                        t=cell.t,
                        sigma=cell.sigma,
                        method=name,
                        n_ok=len(ok),
                        n_failed=n_failed,
                        g_freq=tuple(int(f) for f in freq),
                        mu_pi=cell.mu_pi,
                        sigma_pi=cell.sigma_pi,
                    )
                )
            else:
                ri = np.array([r[name][0] for r in ok])
                hd_pre = np.array([r[name][1] for r in ok])
                hd_post = np.array([r[name][2] for r in ok])
                coef = np.array([r[name][3] for r in ok])
                have_coef = len(ok) > 0 and not np.isnan(coef).all()
                rows.append(
                    McRow(
                        dgp=cell.dgp,
                        n=cell.n,
                        t=cell.t,
                        sigma=cell.sigma,
                        method=name,
                        n_ok=len(ok),
                        n_failed=n_failed,
                        mean_ri=float(ri.mean()) if len(ok) else None,
                        mean_hd_pre=(
                            float(np.nanmean(hd_pre))
                            if len(ok) and not np.isnan(hd_pre).all()
                            else None
                        ),
                        mean_hd_post=float(hd_post.mean()) if len(ok) else None,
                        mean_coef=float(np.nanmean(coef)) if have_coef else None,
                        sd_coef=(
                            float(np.nanstd(coef, ddof=1))
                            if have_coef and len(ok) > 1
                            else None
                        ),
                        mu_pi=cell.mu_pi,
                        sigma_pi=cell.sigma_pi,
                    )
                )
    return McReport(rows=rows, n_reps=n_reps, n_starts=n_starts, master_seed=master_seed)


def table_grid(
    table: str,
    dgps=None,
    n_values=None,
    t_values=None,
    sigmas=None,
    methods=None,
):
    """The experiment grids behind the headline result tables.

    Tables "1", "2" and "3" share one estimation grid (they differ only
    in which metric is displayed); table "c1" is the group-count
    selection grid; table "c2" is the bias/spread study on the
    homogeneous-outcome design. Keyword filters subset the grid for
    desk-scale runs.
    """
    table = str(table).lower()
    if table in ("1", "2", "3"):
        default_methods = ("ig", "2sls", "tgfe2", "tgfe_n4", "ugfe")
        mode = "estimate"
        default_sigmas = (0.5, 0.75)
    elif table == "c1":
        default_methods = ("ig", "tgfe", "ugfe")
        mode = "select"
        default_sigmas = (0.5,)
    elif table == "c2":
        # estimator means and spreads under a homogeneous outcome equation
        # with normally distributed unit-level instrument strengths
        n_values = tuple(n_values or (50, 100))
        t_values = tuple(t_values or (5, 10, 20))
        methods = tuple(methods or ("ig", "2sls", "tgfe2", "ugfe"))
        sigmas = tuple(sigmas or (0.5,))
        return [
            McCell(
                dgp="c1",
                n=n,
                t=t,
                sigma=s,
                methods=methods,
                g=1,
                mu_pi=mu,
                sigma_pi=s_pi,
            )
            for (mu, s_pi) in ((0.5, 1.0), (1.0, 1.0), (0.5, 1.25), (1.0, 1.25))
            for n in n_values
            for t in t_values
            for s in sigmas
        ]
    else:
        raise LengthMismatch(f"unknown table {table!r}; expected 1, 2, 3, c1 or c2")
    dgps = [str(d) for d in (dgps or ("1", "2", "3", "4"))]
    n_values = tuple(n_values or (50, 100))
    t_values = tuple(t_values or (5, 10, 20))
    sigmas = tuple(sigmas or default_sigmas)
    methods = tuple(methods or default_methods)
    return [
        McCell(dgp=d, n=n, t=t, sigma=s, methods=methods, mode=mode)
        for d in dgps
        for n in n_values
        for t in t_values
        for s in sigmas
    ]
