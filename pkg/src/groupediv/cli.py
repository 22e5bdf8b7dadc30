"""Command-line front end.

Three subcommands: ``estimate`` runs one strategy on a CSV panel,
``select`` chooses the group counts by information criterion, and
``replicate`` runs the Monte Carlo study grids. Every run writes a
``manifest.json`` with the fully resolved configuration and seeds so
outputs can be reproduced exactly.

Options may come from a JSON config file (``--config``); command-line
flags override file values. Exit codes: 0 success, 2 validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import GroupedIVError, NumericalError, ValidationError
from .estimators import estimate
from .first_stage import combine_dynamic_instruments
from .gfe import GfeOptions
from .panel import first_difference, load_panel, within_transform
from .selection import select_g_second_stage, select_k_first_stage
from .sim import run_monte_carlo, table_grid

_EXIT_OK = 0
_EXIT_VALIDATION = 2
_EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupediv",
        description="Grouped-coefficient IV estimation for balanced panels.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults for any flag")
    common.add_argument("--out", default=".", help="output directory (default: cwd)")
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--starts", type=int, default=100, help="random restarts per fit")
    common.add_argument("--threads", type=int, default=1, help="worker cap (output is thread-count invariant)")
    common.add_argument("--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="long-format CSV panel")
    data.add_argument("--time-effects", action="store_true", help="per-group per-period intercepts")
    data.add_argument(
        "--transform",
        choices=["none", "within", "fd"],
        default="none",
        help="fixed-effect-removing transform applied first",
    )
    data.add_argument(
        "--dynamic-iv",
        action="store_true",
        help="replace z by its per-period cross-sectional combination targeting x "
        "(for differenced autoregressive designs)",
    )

    est = sub.add_parser("estimate", parents=[common, data], help="fit one strategy")
    est.add_argument("--method", required=True, choices=["2sls", "tgfe", "ugfe", "ig", "rf"])
    est.add_argument("--groups", type=int, required=True, help="number of outcome groups G")
    est.add_argument("--fs-groups", type=int, help="first-stage groups K (tgfe; ugfe period effects)")

    sel = sub.add_parser("select", parents=[common, data], help="choose group counts")
    sel.add_argument("--method", default="tgfe", choices=["2sls", "tgfe", "ugfe", "ig", "rf"])
    sel.add_argument("--g-max", type=int, default=5)
    sel.add_argument("--k-max", type=int, default=5)
    sel.add_argument("--penalty", choices=["bm", "pcp3"], default="pcp3")

    rep = sub.add_parser("replicate", parents=[common], help="run the simulation grids")
    rep.add_argument("--table", choices=["1", "2", "3", "c1", "c2"], help="which study grid")
    rep.add_argument("--grid", help="JSON file with a custom list of cells")
    rep.add_argument("--reps", type=int, default=100)
    rep.add_argument("--dgp", nargs="*", help="restrict to these designs")
    rep.add_argument("--n-values", nargs="*", type=int)
    rep.add_argument("--t-values", nargs="*", type=int)
    rep.add_argument("--sigma", nargs="*", type=float)
    rep.add_argument("--methods", nargs="*")
    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    """File values fill in only flags the user left at their defaults."""
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        file_values = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
    parser = _build_parser()
    defaults = vars(parser.parse_args(_reconstruct_minimal(args)))
    for key, value in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValidationError(f"config key {key!r} is not a known option")
        if getattr(args, attr) == defaults.get(attr):
            setattr(args, attr, value)
    return args


def _reconstruct_minimal(args) -> list:
    """Minimal argv that reparses to pure defaults for this subcommand."""
    argv = [args.command]
    if getattr(args, "data", None) is not None:
        argv += ["--data", args.data]
    if getattr(args, "method", None) is not None and args.command == "estimate":
        argv += ["--method", args.method, "--groups", str(args.groups)]
    return argv


def _prepare_panel(args):
    """Load, apply the transform, then (optionally) combine instruments."""
    path = Path(args.data)
    if not path.exists():
        raise ValidationError(f"data file not found: {path}")
    panel = load_panel(path)
    if args.transform == "within":
        panel = within_transform(panel)
    elif args.transform == "fd":
        panel = first_difference(panel)
    if args.dynamic_iv:
        z_new = combine_dynamic_instruments(
            [panel.z[:, t, :] for t in range(panel.n_periods)], panel.x
        )
        panel = panel.replace_data(z=z_new)
    return panel


def _write_manifest(outdir: Path, args, extra=None):
    payload = {k: v for k, v in vars(args).items() if k != "command"}
    payload["command"] = args.command
    payload["version"] = __version__
    if extra:
        payload.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _cmd_estimate(args) -> int:
    panel = _prepare_panel(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    opts = GfeOptions(n_groups=args.groups, n_starts=args.starts, seed=args.seed)
    result = estimate(
        panel,
        args.method,
        args.groups,
        opts,
        k=args.fs_groups,
        time_effects=args.time_effects,
        k_for_mu=args.fs_groups if args.method == "ugfe" else None,
    )
    rows = []
    d = result.post_beta.shape[1]
    pre_ok = result.pre_beta.shape[1] == d and result.method != "rf"
    for g in range(args.groups):
        for j in range(d):
            rows.append(
                {
                    "group": g + 1,
                    "coef": f"x{j + 1}",
                    "pre_estimate": result.pre_beta[g, j] if pre_ok else np.nan,
                    "pre_se": result.pre_se[g, j] if pre_ok else np.nan,
                    "post_estimate": result.post_beta[g, j],
                    "post_se": result.post_se[g, j],
                    "group_size": int(result.group_sizes[g]),
                }
            )
    pd.DataFrame(rows).to_csv(outdir / "estimates.csv", index=False)
    pd.DataFrame(
        {"unit": panel.unit_ids, "label": result.grouping.labels}
    ).to_csv(outdir / "membership.csv", index=False)
    if result.method == "rf":
        xi_rows = [
            {"group": g + 1, "instrument": f"z{j + 1}", "xi": result.pre_beta[g, j]}
            for g in range(args.groups)
            for j in range(result.pre_beta.shape[1])
        ]
        pd.DataFrame(xi_rows).to_csv(outdir / "reduced_form.csv", index=False)
    _write_manifest(
        outdir,
        args,
        extra={
            "objective": result.second_stage.objective,
            "converged": result.second_stage.converged,
            "group_sizes": result.group_sizes.tolist(),
        },
    )
    if args.verbose:
        print(f"wrote {outdir / 'estimates.csv'} and {outdir / 'membership.csv'}")
    return _EXIT_OK


def _cmd_select(args) -> int:
    panel = _prepare_panel(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    opts = GfeOptions(n_groups=1, n_starts=args.starts, seed=args.seed)
    records = []
    chosen_k = None
    if args.method == "tgfe":
        k_res = select_k_first_stage(
            panel, args.k_max, args.penalty, opts, time_effects=args.time_effects
        )
        chosen_k = k_res.chosen
        for cand, crit, ssr in zip(k_res.candidates, k_res.criteria, k_res.ssr):
            records.append(
                {
                    "stage": "first",
                    "candidate": int(cand),
                    "ssr": ssr,
                    "criterion": crit,
                    "chosen": bool(cand == k_res.chosen),
                }
            )
    g_res = select_g_second_stage(
        panel,
        args.g_max,
        args.method,
        args.penalty,
        opts,
        k=chosen_k,
        k_max=args.k_max if args.method == "tgfe" else None,
        time_effects=args.time_effects,
    )
    for cand, crit, ssr in zip(g_res.candidates, g_res.criteria, g_res.ssr):
        records.append(
            {
                "stage": "second",
                "candidate": int(cand),
                "ssr": ssr,
                "criterion": crit,
                "chosen": bool(cand == g_res.chosen),
            }
        )
    pd.DataFrame(records).to_csv(outdir / "ic.csv", index=False)
    _write_manifest(
        outdir, args, extra={"chosen_g": g_res.chosen, "chosen_k": chosen_k}
    )
    if args.verbose:
        print(f"chose G={g_res.chosen}" + (f", K={chosen_k}" if chosen_k else ""))
    return _EXIT_OK


def _cmd_replicate(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.grid:
        path = Path(args.grid)
        if not path.exists():
            raise ValidationError(f"grid file not found: {path}")
        from .sim import McCell

        raw = json.loads(path.read_text())
        grid = [McCell(**{**cell, "methods": tuple(cell["methods"])}) for cell in raw]
    elif args.table:
        grid = table_grid(
            args.table,
            dgps=args.dgp,
            n_values=args.n_values,
            t_values=args.t_values,
            sigmas=args.sigma,
            methods=args.methods,
        )
    else:
        raise ValidationError("replicate needs --table or --grid")
    report = run_monte_carlo(
        grid,
        n_reps=args.reps,
        n_starts=args.starts,
        master_seed=args.seed,
        threads=args.threads,
    )
    report.to_csv(outdir / "report.csv")
    metric = {
        "1": "mean_ri",
        "2": "mean_hausdorff_pre",
        "3": "mean_hausdorff_post",
        "c1": "g_freq",
        "c2": "mean_coef",
    }.get(args.table or "1", "mean_ri")
    (outdir / "table.txt").write_text(report.to_text(metric) + "\n")
    _write_manifest(outdir, args, extra={"n_cells": len(grid)})
    if args.verbose:
        print(report.to_text(metric))
    return _EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args)
        if args.command == "estimate":
            code = _cmd_estimate(args)
        elif args.command == "select":
            code = _cmd_select(args)
        else:
            code = _cmd_replicate(args)
    except ValidationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except GroupedIVError as exc:  # pragma: no cover - safety net
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"LinAlgError: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
