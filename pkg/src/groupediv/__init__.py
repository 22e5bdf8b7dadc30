"""Instrumental-variables estimation of panel models with latent groups.

Library surface:

* :mod:`groupediv.panel`       -- balanced panels, CSV ingestion, transforms
* :mod:`groupediv.gfe`         -- grouped least-squares engine
* :mod:`groupediv.first_stage` -- first-stage fits and instrument combination
* :mod:`groupediv.estimators`  -- the five strategies, inference, GMM demos
* :mod:`groupediv.selection`   -- information criteria for group counts
* :mod:`groupediv.metrics`     -- Rand index, Hausdorff distance, diagnostics
* :mod:`groupediv.sim`         -- simulation designs and Monte Carlo harness
"""

from . import errors
from .estimators import (
    EstimationResult,
    GmmWeighting,
    clustered_se_pre,
    estimate,
    estimate_2sls,
    estimate_ig,
    estimate_rf,
    estimate_tgfe,
    estimate_ugfe,
    just_identified_beta,
    naive_gmm_objective,
    post_iv_by_group,
    pseudo_true_beta,
)
from .first_stage import (
    FirstStageFit,
    combine_dynamic_instruments,
    fs_grouped,
    fs_homogeneous,
    fs_unit_specific,
)
from .gfe import GfeOptions, GroupedLinearFit, assign_groups, gfe_fit, group_ols
from .metrics import (
    RandCounts,
    align_labels,
    hausdorff,
    rand_counts,
    rand_index,
    separation_statistic,
)
from .panel import (
    Grouping,
    GroupTruth,
    PanelData,
    first_difference,
    load_panel,
    save_panel,
    within_transform,
)
from .selection import ICResult, penalty, select_g_second_stage, select_k_first_stage
from .sim import DgpConfig, McCell, McReport, gen_dgp, run_monte_carlo, table_grid

__version__ = "0.1.0"

__all__ = [
    "errors",
    "PanelData",
    "Grouping",
    "GroupTruth",
    "load_panel",
    "save_panel",
    "within_transform",
    "first_difference",
    "GfeOptions",
    "GroupedLinearFit",
    "gfe_fit",
    "assign_groups",
    "group_ols",
    "FirstStageFit",
    "fs_homogeneous",
    "fs_grouped",
    "fs_unit_specific",
    "combine_dynamic_instruments",
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
    "ICResult",
    "penalty",
    "select_k_first_stage",
    "select_g_second_stage",
    "RandCounts",
    "rand_counts",
    "rand_index",
    "hausdorff",
    "align_labels",
    "separation_statistic",
    "DgpConfig",
    "McCell",
    "McReport",
    "gen_dgp",
    "run_monte_carlo",
    "table_grid",
    "__version__",
]
