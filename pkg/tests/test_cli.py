import json

import numpy as np
import pandas as pd
import pytest

from groupediv.cli import main
from groupediv.panel import save_panel
from groupediv.sim import DgpConfig, gen_dgp


@pytest.fixture()
def dgp1_csv(tmp_path):
    p, _ = gen_dgp(DgpConfig(dgp="1", n=50, t=20, sigma=0.75, seed=13))
    path = tmp_path / "panel.csv"
    save_panel(p, path)
    return path


@pytest.fixture()
def noiseless_csv(tmp_path):
    rng = np.random.default_rng(0)
    n, t = 20, 10
    z = rng.normal(size=(n, t, 1))
    pi = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    x = pi[:, None, None] * z
    beta = np.repeat([1.0, -1.0], n // 2)
    y = x[:, :, 0] * beta[:, None]
    from groupediv.panel import PanelData

    path = tmp_path / "noiseless.csv"
    save_panel(PanelData(y=y, x=x, z=z), path)
    return path


def test_estimate_missing_file_exit_2(tmp_path, capsys):
    code = main(
        ["estimate", "--data", str(tmp_path / "nope.csv"), "--method", "2sls", "--groups", "2"]
    )
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_estimate_writes_outputs(dgp1_csv, tmp_path):
    out = tmp_path / "run1"
    code = main(
        [
            "estimate",
            "--data",
            str(dgp1_csv),
            "--method",
            "ugfe",
            "--groups",
            "2",
            "--starts",
            "50",
            "--seed",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    est = pd.read_csv(out / "estimates.csv")
    assert list(est.columns) == [
        "group",
        "coef",
        "pre_estimate",
        "pre_se",
        "post_estimate",
        "post_se",
        "group_size",
    ]
    assert len(est) == 2
    np.testing.assert_allclose(np.sort(est["pre_estimate"]), [-1.0, 1.0], atol=0.2)
    members = pd.read_csv(out / "membership.csv")
    assert len(members) == 50 and set(members["label"]) <= {1, 2}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["command"] == "estimate"


def test_tgfe_k1_matches_2sls_byte_identical(dgp1_csv, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out, method, extra in (
        (out_a, "2sls", []),
        (out_b, "tgfe", ["--fs-groups", "1"]),
    ):
        code = main(
            [
                "estimate",
                "--data",
                str(dgp1_csv),
                "--method",
                method,
                "--groups",
                "2",
                "--starts",
                "30",
                "--seed",
                "5",
                "--out",
                str(out),
            ]
            + extra
        )
        assert code == 0
    assert (out_a / "estimates.csv").read_bytes() == (out_b / "estimates.csv").read_bytes()
    assert (out_a / "membership.csv").read_bytes() == (out_b / "membership.csv").read_bytes()


def test_select_noiseless_chooses_two(noiseless_csv, tmp_path):
    out = tmp_path / "sel"
    code = main(
        [
            "select",
            "--data",
            str(noiseless_csv),
            "--method",
            "tgfe",
            "--g-max",
            "4",
            "--k-max",
            "4",
            "--starts",
            "30",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["chosen_g"] == 2 and manifest["chosen_k"] == 2
    assert manifest["penalty"] == "pcp3"  # documented default
    ic = pd.read_csv(out / "ic.csv")
    assert set(ic["stage"]) == {"first", "second"}
    chosen = ic[(ic["stage"] == "second") & ic["chosen"]]
    assert chosen["candidate"].tolist() == [2]


def test_select_g_max_one(noiseless_csv, tmp_path):
    out = tmp_path / "sel1"
    code = main(
        [
            "select",
            "--data",
            str(noiseless_csv),
            "--method",
            "ig",
            "--g-max",
            "1",
            "--starts",
            "10",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["chosen_g"] == 1


def test_replicate_small_grid_deterministic(tmp_path):
    args = [
        "replicate",
        "--table",
        "1",
        "--dgp",
        "1",
        "--n-values",
        "20",
        "--t-values",
        "5",
        "--sigma",
        "0.75",
        "--methods",
        "ig",
        "2sls",
        "--reps",
        "2",
        "--starts",
        "10",
        "--seed",
        "3",
    ]
    out_a, out_b = tmp_path / "r1", tmp_path / "r2"
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
    df = pd.read_csv(out_a / "report.csv")
    assert len(df) == 2  # one row per method
    assert (out_a / "table.txt").exists()


def test_replicate_requires_grid_or_table(tmp_path):
    assert main(["replicate", "--out", str(tmp_path), "--reps", "1"]) == 2


def test_replicate_thread_count_invariant_output(tmp_path):
    args = [
        "replicate",
        "--table",
        "1",
        "--dgp",
        "1",
        "--n-values",
        "16",
        "--t-values",
        "4",
        "--sigma",
        "0.75",
        "--methods",
        "ig",
        "--reps",
        "2",
        "--starts",
        "5",
        "--seed",
        "2",
    ]
    out_a, out_b = tmp_path / "t1", tmp_path / "t4"
    assert main(args + ["--threads", "1", "--out", str(out_a)]) == 0
    assert main(args + ["--threads", "4", "--out", str(out_b)]) == 0
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()


def test_replicate_custom_grid_file(tmp_path):
    grid = [
        {
            "dgp": "1",
            "n": 16,
            "t": 4,
            "sigma": 0.75,
            "methods": ["ig"],
            "mode": "estimate",
        }
    ]
    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps(grid))
    out = tmp_path / "custom"
    code = main(
        ["replicate", "--grid", str(grid_path), "--reps", "1", "--starts", "5", "--out", str(out)]
    )
    assert code == 0
    assert (out / "report.csv").exists()


def test_config_file_defaults_and_flag_override(dgp1_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"groups": 2, "starts": 30, "seed": 5}))
    out = tmp_path / "cfgrun"
    code = main(
        [
            "estimate",
            "--data",
            str(dgp1_csv),
            "--method",
            "2sls",
            "--groups",
            "2",
            "--config",
            str(cfg),
            "--seed",
            "9",  # flag beats file
            "--out",
            str(out),
        ]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 9
    assert manifest["starts"] == 30  # taken from the file


def test_unknown_config_key_exit_2(dgp1_csv, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code = main(
        [
            "estimate",
            "--data",
            str(dgp1_csv),
            "--method",
            "2sls",
            "--groups",
            "2",
            "--config",
            str(cfg),
        ]
    )
    assert code == 2
    assert "bogus" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, capsys):
    # zero regressors: the group moment matrix z'x is exactly singular
    n, t = 6, 4
    from groupediv.panel import PanelData

    p = PanelData(y=np.ones((n, t)), x=np.zeros((n, t, 1)), z=np.ones((n, t, 1)))
    path = tmp_path / "bad.csv"
    save_panel(p, path)
    code = main(
        ["estimate", "--data", str(path), "--method", "ig", "--groups", "2", "--starts", "5"]
    )
    assert code == 3
    err = capsys.readouterr().err
    assert "SingularDesign" in err or "GroupTooSmall" in err


def test_rf_writes_reduced_form_diagnostics(dgp1_csv, tmp_path):
    out = tmp_path / "rf"
    code = main(
        [
            "estimate",
            "--data",
            str(dgp1_csv),
            "--method",
            "rf",
            "--groups",
            "2",
            "--starts",
            "20",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert (out / "reduced_form.csv").exists()
    est = pd.read_csv(out / "estimates.csv")
    assert est["pre_estimate"].isna().all()
    assert est["post_estimate"].notna().all()


def test_dynamic_iv_flag_runs(tmp_path):
    p, _ = gen_dgp(DgpConfig(dgp="1", n=30, t=10, sigma=0.75, seed=21))
    path = tmp_path / "dyn.csv"
    save_panel(p, path)
    out = tmp_path / "dynout"
    code = main(
        [
            "estimate",
            "--data",
            str(path),
            "--method",
            "2sls",
            "--groups",
            "2",
            "--transform",
            "fd",
            "--dynamic-iv",
            "--starts",
            "20",
            "--out",
            str(out),
        ]
    )
    assert code == 0
