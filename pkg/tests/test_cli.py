import json

import numpy as np
import pytest

from envcalvi import cli, io
from envcalvi import modelselect as ms
from envcalvi import simgen
from envcalvi.errors import NotPositiveDefiniteError
from envcalvi.response import ResponseEnvSpec, beta_natural


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--r", "3", "--p", "2", "--u", "1", "--n", "150", "--seed", "4", "--out", str(out)]) == 0
    return out


def data_flags(d):
    return ["--y", str(d / "Y.csv"), "--x", str(d / "X.csv")]


def run_json(argv, tmp_path, name="out.json"):
    path = tmp_path / name
    code = cli.main(argv + ["--out", str(path)])
    return code, (json.loads(path.read_text()) if path.exists() else None)


def test_simulate_writes_files_and_matches_generator(sim_dir):
    for name in ("Y.csv", "X.csv", "truth.json"):
        assert (sim_dir / name).exists()
    assert (sim_dir / "Y.csv").read_text().splitlines()[0] == "y1,y2,y3"
    ds, truth = simgen.gen_response(ResponseEnvSpec(3, 2, 1), 4, 150)
    np.testing.assert_array_equal(io.read_matrix_csv(sim_dir / "Y.csv"), ds.Y)
    back = io.load_truth(sim_dir / "truth.json")
    np.testing.assert_array_equal(back.A, truth.A)
    doc = io.read_json(sim_dir / "truth.json")
    assert doc["seed"] == 4
    np.testing.assert_allclose(doc["beta"], beta_natural(truth))


def test_simulate_is_byte_identical(sim_dir, tmp_path):
    cli.main(["simulate", "--r", "3", "--p", "2", "--u", "1", "--n", "150", "--seed", "4", "--out", str(tmp_path)])
    for name in ("Y.csv", "X.csv", "truth.json"):
        assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()


def test_simulate_predictor(tmp_path):
    assert cli.main(["simulate", "--model", "predictor", "--r", "2", "--p", "3", "--m", "1", "--n", "40",
                     "--out", str(tmp_path)]) == 0
    assert io.read_matrix_csv(tmp_path / "X.csv").shape == (40, 3)


def test_fit_schema_and_budget(sim_dir, tmp_path):
    code, doc = run_json(["fit"] + data_flags(sim_dir) + ["--u", "1"], tmp_path)
    assert code == 0 and doc["schema"] == "envcalvi/1"
    assert {"spec", "converged", "iterations", "elbo_trace", "beta_hat", "mu_hat", "variational"} <= set(doc)
    assert doc["converged"] and len(doc["elbo_trace"]) == doc["iterations"]
    code, doc = run_json(["fit"] + data_flags(sim_dir) + ["--u", "1", "--max-iter", "1"], tmp_path, "one.json")
    assert code == 0 and doc["iterations"] == 1 and doc["converged"] is False


def test_fit_recovers_beta_at_larger_n(tmp_path):
    cli.main(["simulate", "--r", "3", "--p", "2", "--u", "1", "--n", "2000", "--seed", "1", "--out", str(tmp_path)])
    code, doc = run_json(["fit"] + data_flags(tmp_path) + ["--u", "1"], tmp_path)
    truth = np.asarray(io.read_json(tmp_path / "truth.json")["beta"])
    assert code == 0
    assert np.abs(np.asarray(doc["beta_hat"]) - truth).max() <= 0.05 * np.abs(truth).max()


def test_select_probs_and_parallel_determinism(sim_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("ENVCALVI_THREADS", "4")
    _, one = run_json(["select"] + data_flags(sim_dir) + ["--parallel", "1"], tmp_path, "a.json")
    _, four = run_json(["select"] + data_flags(sim_dir) + ["--parallel", "4"], tmp_path, "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert abs(sum(one["probs"]) - 1.0) <= 1e-12 and one["dims"] == [0, 1, 2, 3]
    assert one["mode"] == 1


def test_select_matches_library_and_prior_file(sim_dir, tmp_path):
    (tmp_path / "prior.json").write_text(json.dumps({"prior": [0, 1, 1]}))
    _, doc = run_json(["select"] + data_flags(sim_dir) + ["--u-min", "1", "--u-max", "3",
                                                          "--prior", str(tmp_path / "prior.json")], tmp_path)
    ds = cli._load_data({"y": str(sim_dir / "Y.csv"), "x": str(sim_dir / "X.csv")})
    sel = ms.select_dimension(ds, "response", [1, 2, 3], [0, 1, 1])
    assert doc["probs"] == list(sel.posterior.probs) and doc["probs"][0] == 0.0


def test_bootstrap_bench_check_exit_codes(sim_dir, tmp_path):
    code, doc = run_json(["bootstrap"] + data_flags(sim_dir) + ["--u", "1", "--B", "3", "--seed", "2"], tmp_path)
    assert code == 0 and doc["B"] == 3 and len(doc["per_replicate"]) == 3 - doc["failures"]
    assert cli.main(["bench", "--r-list", "4,6", "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "r,u,reps,euclid_ms,reparam_ms,ratio"
    code, doc = run_json(["check"], tmp_path, "c.json")
    assert code == 0 and doc["passed"]


def test_config_file_is_overridden_by_flags(sim_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"u": 2, "max_iter": 1}))
    code, doc = run_json(["fit"] + data_flags(sim_dir) + ["--config", str(cfg), "--u", "1"], tmp_path)
    assert code == 0 and doc["spec"]["u"] == 1 and doc["iterations"] == 1
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["fit"] + data_flags(sim_dir) + ["--config", str(cfg)]) == 2


def test_invalid_input_exits_2(sim_dir, tmp_path, capsys):
    assert cli.main(["fit"] + data_flags(sim_dir) + ["--u", "7"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError"
    assert cli.main(["fit", "--y", str(tmp_path / "missing.csv"), "--x", str(tmp_path / "missing.csv"), "--u", "1"]) == 2
    assert cli.main(["simulate", "--r", "3", "--p", "2", "--u", "1"]) == 2
    assert cli.main(["bench", "--r-list", "a,b"]) == 2


def test_numerical_failure_exits_3(sim_dir, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NotPositiveDefiniteError("Psi1_q is not positive definite")

    monkeypatch.setattr(ms, "fit_model", boom)
    assert cli.main(["fit"] + data_flags(sim_dir) + ["--u", "1"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "NotPositiveDefiniteError"
