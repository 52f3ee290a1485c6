import subprocess
import sys

import pytest

from sovrating.cli import main, read_config


def _synth(tmp_path, n=120, scenario="nonlinear"):
    data = tmp_path / "panel.csv"
    assert main(["synth", "--data", str(data), "--out", str(tmp_path / "s"), "--n", str(n),
                 "--scenario", scenario, "--seed", "3"]) == 0
    return data


def _files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def _without_out(blob):
    return b"\n".join(l for l in blob.splitlines() if not l.startswith(b"out="))


def test_synth_then_evaluate(tmp_path):
    data = _synth(tmp_path)
    out = tmp_path / "r"
    assert main(["evaluate", "--data", str(data), "--out", str(out), "--model", "cart",
                 "--reps", "2", "--k", "5", "--dump"]) == 0
    files = _files(out)
    for name in ("notch.csv", "notch.txt", "notch_replications.csv", "cart_tree.txt", "notch.png",
                 "manifest_evaluate.txt"):
        assert name in files
    head, row = files["notch.csv"].decode().splitlines()
    assert head == "model,2below,1below,exact,1above,2above,within1,within2,mae"
    assert row.startswith("CART,")
    manifest = files["manifest_evaluate.txt"].decode()
    assert "reps=2" in manifest and "data_sha256=" in manifest and "artifacts=" in manifest


def test_evaluate_all_models_writes_comparisons(tmp_path):
    data = _synth(tmp_path)
    out = tmp_path / "r"
    assert main(["evaluate", "--data", str(data), "--out", str(out), "--reps", "2", "--k", "3",
                 "--epochs", "3", "--neurons", "8"]) == 0
    comps = (out / "comparisons.csv").read_text().splitlines()
    assert len(comps) == 4 and comps[1].startswith("MLP,CART,")


def test_rerun_is_byte_identical(tmp_path):
    data = _synth(tmp_path)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["evaluate", "--data", str(data), "--out", str(out), "--model", "cart",
                     "--reps", "2", "--k", "4", "--seed", "9"]) == 0
        runs.append(_files(out))
    assert runs[0].keys() == runs[1].keys()
    for name in runs[0]:
        a, b = runs[0][name], runs[1][name]
        if name.startswith("manifest"):
            a, b = _without_out(a), _without_out(b)
        assert a == b, name


def test_usage_errors(tmp_path):
    data = _synth(tmp_path)
    out = str(tmp_path / "r")
    assert main(["evaluate", "--data", str(data), "--out", out, "--k", "1"]) == 2
    assert main(["evaluate", "--data", str(data), "--out", out, "--model", "svm"]) == 2
    assert main(["grid", "--data", str(data), "--out", out, "--grid", "cart-alpha",
                 "--alphas", "-1"]) == 2
    assert main(["explain", "--data", str(data), "--out", out, "--rows", "x"]) == 2
    assert main([]) == 2


def test_missing_data_file(tmp_path):
    assert main(["stats", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 3


def test_malformed_data_file(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("country,year\nX,2000\n")
    assert main(["stats", "--data", str(bad), "--out", str(tmp_path)]) == 3


def test_config_file(tmp_path):
    data = _synth(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# protocol\nreps = 2\nk=3\nmodel=cart\nmax-depth=3\n")
    out = tmp_path / "r"
    assert main(["evaluate", "--data", str(data), "--out", str(out), "--config", str(cfg),
                 "--k", "4"]) == 0
    manifest = (out / "manifest_evaluate.txt").read_text().splitlines()
    assert "reps=2" in manifest and "k=4" in manifest and "max_depth=3" in manifest


def test_config_errors(tmp_path):
    data = _synth(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    assert main(["evaluate", "--data", str(data), "--out", str(tmp_path), "--config", str(cfg)]) == 2
    cfg.write_text("reps\n")
    assert main(["evaluate", "--data", str(data), "--out", str(tmp_path), "--config", str(cfg)]) == 2
    cfg.write_text("model=svm\n")
    assert main(["evaluate", "--data", str(data), "--out", str(tmp_path), "--config", str(cfg)]) == 2


def test_read_config_normalizes_keys(tmp_path):
    cfg = tmp_path / "c"
    cfg.write_text("batch-size = 4  # small\n\n")
    assert read_config(cfg) == {"batch_size": "4"}


def test_stats_and_report_ol(tmp_path):
    data = _synth(tmp_path, n=300, scenario="linear")
    out = tmp_path / "r"
    assert main(["stats", "--data", str(data), "--out", str(out)]) == 0
    assert main(["report-ol", "--data", str(data), "--out", str(out)]) == 0
    assert (out / "stats.csv").exists() and (out / "ol_coefficients.csv").exists()
    assert "gov_debt" not in (out / "ol_coefficients.csv").read_text()


def test_explain_writes_figures(tmp_path):
    data = _synth(tmp_path)
    out = tmp_path / "r"
    assert main(["explain", "--data", str(data), "--out", str(out), "--model", "cart",
                 "--rows", "0,1,2,3,4", "--background", "10"]) == 0
    for name in ("beeswarm_cart.csv", "beeswarm_cart.svg", "beeswarm_cart.png", "shap_ranking.csv"):
        assert (out / name).stat().st_size > 0


def test_grid_command(tmp_path):
    data = _synth(tmp_path)
    out = tmp_path / "r"
    assert main(["grid", "--data", str(data), "--out", str(out), "--grid", "cart-alpha",
                 "--alphas", "0,1,5", "--reps", "2", "--k", "3"]) == 0
    assert len((out / "grid_cart_alpha.csv").read_text().splitlines()) == 4
    assert (out / "grid_cart_alpha.png").exists()
    assert "selected=ccp_alpha=" in (out / "manifest_grid.txt").read_text()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sovrating", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
