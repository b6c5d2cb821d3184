import json
import os
import subprocess
import sys

import pytest

import genfun.cli as cli
from genfun.errors import NumericFailure

RATE = """which = rate
model = uniform
n_grid = 2^8..2^10
reps = 100
psi = bump:0.5:0.3
"""


def write(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def only_run_dir(out):
    (d,) = [os.path.join(out, x) for x in os.listdir(out)]
    return d


def test_run_writes_outputs_and_manifest(tmp_path, capsys):
    out = str(tmp_path / "runs")
    assert cli.main(["run", "--config", write(tmp_path, RATE), "--out", out]) == 0
    run_dir = only_run_dir(out)
    assert os.path.basename(run_dir).startswith("rate-")
    manifest = json.loads(open(os.path.join(run_dir, "manifest.json")).read())
    assert manifest["exit_status"] == 0 and manifest["experiment"] == "rate"
    for f in manifest["outputs"]:
        assert os.path.exists(os.path.join(run_dir, f))
    assert {"summary.txt", "rmse.csv", "fit.csv", "replications.csv"} <= set(manifest["outputs"])
    assert "status = " in capsys.readouterr().out
    assert not [f for f in os.listdir(run_dir) if ".tmp" in f]


def test_seed_override_is_byte_identical(tmp_path):
    cfg = write(tmp_path, RATE)
    outs = []
    for k in range(2):
        out = str(tmp_path / f"o{k}")
        assert cli.main(["run", "--config", cfg, "--seed", "7", "--out", out]) == 0
        outs.append(only_run_dir(out))
    assert os.path.basename(outs[0]) == os.path.basename(outs[1])
    csvs = sorted(f for f in os.listdir(outs[0]) if f.endswith(".csv"))
    assert csvs
    for f in csvs:
        assert open(os.path.join(outs[0], f), "rb").read() == open(os.path.join(outs[1], f), "rb").read()
    seed_line = [ln for ln in open(os.path.join(outs[0], "config.txt")) if ln.startswith("seed")]
    assert seed_line == ["seed = 7\n"]


def test_threads_flag_and_env_keep_hash(tmp_path, monkeypatch):
    cfg = write(tmp_path, RATE)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(["run", "--config", cfg, "--out", a, "--threads", "3"]) == 0
    monkeypatch.setenv("GENFUN_THREADS", "2")
    assert cli.main(["run", "--config", cfg, "--out", b]) == 0
    da, db = only_run_dir(a), only_run_dir(b)
    assert os.path.basename(da) == os.path.basename(db)
    assert open(os.path.join(da, "rmse.csv")).read() == open(os.path.join(db, "rmse.csv")).read()


def test_bad_alpha_exit_1(tmp_path, capsys):
    text = "which = rate\nmodel = regression\npairing = conddist\nalpha = 0.5\n"
    assert cli.main(["run", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "alpha < 1/4" in err and "kind=validation" in err


def test_unknown_key_and_missing_file(tmp_path):
    assert cli.main(["run", "--config", write(tmp_path, RATE + "colour = red\n")]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "absent.txt")]) == 1
    assert cli.main(["run", "--config", write(tmp_path, RATE), "--threads", "0"]) == 1


def test_numeric_failure_exit_2(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise NumericFailure("covariance is not positive semidefinite", min_eigenvalue=-0.5)
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["run", "--config", write(tmp_path, RATE), "--out", str(tmp_path)]) == 2
    assert "kind=numeric" in capsys.readouterr().err


def test_strict_inconclusive_exit_3(tmp_path):
    text = "which = bias\nmodel = uniform\nn_grid = 2^10\nreps = 10\n"
    cfg = write(tmp_path, text)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--strict"]) == 3


def test_list(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "cantor" in out
    for order in (2, 4, 6):
        assert f"order={order}" in out
    for which in ("rate", "bias", "variance", "gaussianity", "cantor-rescale", "illposed-demo",
                  "lemma-check"):
        assert f"  {which}" in out


def test_plots(tmp_path, capsys):
    out = str(tmp_path / "runs")
    cli.main(["run", "--config", write(tmp_path, RATE), "--out", out])
    run_dir = only_run_dir(out)
    assert cli.main(["plots", run_dir]) == 0
    script = open(os.path.join(run_dir, "rate_loglog.gp")).read()
    assert "set logscale xy" in script and "slope" in script
    gauss = "which = gaussianity\nn_grid = 2^8\nreps = 50\npsi = bump:0.5:0.3, bump:0.35:0.2\n"
    out2 = str(tmp_path / "g")
    cli.main(["run", "--config", write(tmp_path, gauss, "g.txt"), "--out", out2])
    gdir = only_run_dir(out2)
    assert cli.main(["plots", gdir]) == 0
    assert sorted(f for f in os.listdir(gdir) if f.startswith("qq_")) == ["qq_0.gp", "qq_1.gp"]


def test_plots_empty_dir(tmp_path, capsys):
    assert cli.main(["plots", str(tmp_path)]) == 1
    assert "summary.txt" in capsys.readouterr().err


def test_plots_missing_csv(tmp_path):
    out = str(tmp_path / "runs")
    cli.main(["run", "--config", write(tmp_path, RATE), "--out", out])
    run_dir = only_run_dir(out)
    os.remove(os.path.join(run_dir, "fit.csv"))
    assert cli.main(["plots", run_dir]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "genfun", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "experiments:" in res.stdout
    res = subprocess.run([sys.executable, "-m", "genfun", "--version"], capture_output=True, text=True)
    assert "genfun-" in res.stdout
