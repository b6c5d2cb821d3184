import math

import numpy as np
import pytest

from genfun.errors import ConfigError, UnsupportedCombination
from genfun.experiments import (CANTOR_DIM, EXPERIMENTS, ExperimentConfig, build_model,
                                fit_loglog_slope, make_config, parse_config, psi_from_id,
                                report_json, run_experiment, validate, write_report)

SMALL_RATE = dict(n_grid=(2**8, 2**9, 2**10), reps=100, psi=("bump:0.5:0.3",))


def test_cantor_dimension():
    assert CANTOR_DIM == pytest.approx(0.6309297535714574, abs=1e-15)


def test_loglog_slope_exact_line():
    n = 2.0 ** np.arange(10, 17)
    slope, ci, se = fit_loglog_slope(n, 3.0 * n**-0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert ci[0] <= slope <= ci[1] and se < 1e-10


@pytest.mark.parametrize("which", EXPERIMENTS)
def test_echo_round_trip(which):
    kw = {"model": "regression", "pairing": "conddist", "alpha": 0.2} if which == "rate" else {}
    cfg = make_config(which, seed=11, **kw)
    again = parse_config(cfg.echo())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_parse_config_syntax():
    text = """
    # comment line
    which = rate
    model = beta          # trailing comment
    model.a = 3.0
    n_grid = 2^8..2^10
    reps = 100
    psi = bump:0.5:0.3, mollifier:0.4:0.2
    smooth_x = false
    """
    cfg = parse_config(text, seed=5)
    assert cfg.n_grid == (256, 512, 1024)
    assert cfg.params["a"] == 3.0 and cfg.params["b"] == 2.0
    assert cfg.seed == 5
    assert cfg.psi == ("bump:0.5:0.3", "mollifier:0.4:0.2")


@pytest.mark.parametrize("text,msg", [
    ("which = rate\nbogus = 1\n", "unknown key"),
    ("which = rate\nreps = 100\nreps = 200\n", "duplicate"),
    ("which = rate\nmodel.a = 2\n", "unknown parameter"),
    ("which = rate\nreps = 50\n", "reps >= 100"),
    ("which = rate\nn_grid = 2^10, 2^11\n", "three sample sizes"),
    ("which = rate\nn_grid = 2^12, 2^11, 2^13\n", "strictly increasing"),
    ("which = rate\nmodel = regression\npairing = conddist\nalpha = 0.5\n", "alpha < 1/4"),
    ("which = rate\nalpha = 0.2\n", "alpha > 1/(2l)"),
    ("which = rate\npairing = conddist\nalpha = 0.2\n", "joint model"),
    ("which = rate\nreps = many\n", "bad value"),
    ("which = nonsense\n", "unknown experiment"),
    ("just words\n", "key = value"),
])
def test_validation_errors(text, msg):
    with pytest.raises(ConfigError, match=msg.replace("(", r"\(").replace(")", r"\)")):
        parse_config(text)


def test_bias_corrected_mode_allows_small_alpha():
    cfg = make_config("rate", alpha=0.2, bias_mode="corrected", **SMALL_RATE)
    validate(cfg)


def test_psi_ids():
    p = psi_from_id("bump:0.5:0.3:4")
    assert p.id == "poly[c=0.5;r=0.3;p=4]"
    assert psi_from_id("mollifier:0.4:0.2")(0.4) == pytest.approx(math.exp(-1))
    with pytest.raises(Exception):
        psi_from_id("wavelet:1")


def test_build_model_params():
    m = build_model("regression", {"x": "beta", "intercept": 0.0, "slope": 1.0, "sigma": 0.5})
    assert m.d_x == 1
    with pytest.raises(ConfigError):
        build_model("nope")


def test_rate_small_and_deterministic(tmp_path):
    cfg = make_config("rate", **SMALL_RATE)
    r1 = run_experiment(cfg)
    r2 = run_experiment(cfg)
    assert r1.tables["replications"] == r2.tables["replications"]
    for name in r1.tables:
        assert r1.csv_text(name) == r2.csv_text(name)
    assert -1.2 < r1.slope < 0.2
    files = write_report(r1, str(tmp_path))
    assert "summary.txt" in files and "rmse.csv" in files
    header = (tmp_path / "rmse.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["n", "psi", "h", "rmse"]
    assert header[-3:] == ["config_hash", "seed", "version"]
    assert r1.config.config_hash() in (tmp_path / "rmse.csv").read_text()
    assert '"status"' in report_json(r1)


def test_threads_do_not_change_results():
    base = make_config("rate", **SMALL_RATE)
    one = run_experiment(base)
    four = run_experiment(ExperimentConfig(**{**base.__dict__, "threads": 4}))
    assert one.tables["replications"] == four.tables["replications"]


def test_seed_changes_results():
    a = run_experiment(make_config("rate", **SMALL_RATE))
    b = run_experiment(make_config("rate", seed=1, **SMALL_RATE))
    assert a.tables["replications"] != b.tables["replications"]


def test_variance_small():
    r = run_experiment(make_config("variance", n_grid=(2**10,), reps=200))
    assert r.status in ("pass", "fail")
    assert r.summary["max_rel_error"] < 0.05
    assert r.summary["replications_within_4se"]


def test_gaussianity_small_n_reports():
    r = run_experiment(make_config("gaussianity", n_grid=(2**6,), reps=100))
    assert r.status in ("pass", "fail")
    header, rows = r.tables["normality"]
    assert len(rows) == 3 + 3
    assert sum(1 for row in rows if row[0].startswith("probe")) == 3


def test_bias_uniform_inconclusive():
    r = run_experiment(make_config("bias", model="uniform", n_grid=(2**12,), reps=20))
    assert r.status == "inconclusive"
    assert r.summary["oracle_max_abs_bias"] < 1e-9


def test_bias_fourth_order_kernel():
    r = run_experiment(make_config("bias", kernel="poly", order=4, reps=20, n_grid=(2**14,),
                                   psi=("bump:0.5:0.3",)))
    if r.status != "inconclusive":
        assert abs(r.summary["slope"] - 4) <= 0.5


def test_cantor_rescale_small():
    r = run_experiment(make_config("cantor-rescale", n_grid=(2**16,), h_grid=(2**-3, 2**-4, 2**-5, 2**-6)))
    assert isinstance(r.summary["max_ratio"], float)
    header, rows = r.tables["points"]
    gap = [row for row in rows if row[1] == "gap"]
    assert gap and gap[0][5]


def test_illposed_and_lemma():
    assert run_experiment(make_config("illposed-demo")).passed
    r = run_experiment(make_config("lemma-check"))
    assert r.passed and r.summary["max_abs_diff"] < 1e-6


def test_limit_variance_small():
    r = run_experiment(make_config("limit-variance", model="product", n_grid=(2**10,), reps=400,
                                   limit_reps=2000, grid_size=65, rel_tol=0.3))
    assert r.summary["max_rel_diff"] < 0.3


def test_bridge_fidelity_rejects_joint_models():
    with pytest.raises(UnsupportedCombination):
        run_experiment(make_config("bridge-fidelity", model="product", reps=10))


def test_bridge_fidelity_grids_differ():
    # on quantile grids all continuous cdfs share the levels linspace(0, 1, G)
    q = run_experiment(make_config("bridge-fidelity", model="beta", grid_size=8, reps=2000))
    d = run_experiment(make_config("bridge-fidelity", model="beta", grid_size=8, reps=2000,
                                   bridge_grid="data"))

    def levels(r):
        header, rows = r.tables["bridge_cov"]
        return np.unique([row[header.index("F_i")] for row in rows])

    fq, fd = levels(q), levels(d)
    assert np.allclose(fq, np.linspace(0, 1, 8), atol=1e-12)
    assert not np.allclose(fd, np.linspace(fd[0], fd[-1], fd.size))
    assert q.passed and d.passed
    assert parse_config(d.config.echo()).bridge_grid == "data"


def test_bridge_grid_validated():
    with pytest.raises(ConfigError):
        validate(make_config("bridge-fidelity", bridge_grid="uniform"))
