import json
import os

import numpy as np
import pytest

from fairgl.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def truth_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("truth"))
    code = run_cli("generate", "--p", "12", "--k", "2", "--h", "2",
                   "--n", "80", "--seed", "3", "--out", out)
    assert code == 0
    return out


def fit_args(truth, out, *extra):
    return ["fit", "--data", os.path.join(truth, "observations.csv"),
            "--groups", os.path.join(truth, "groups.csv"),
            "--model", "fconcord", "--rho1", "0.3", "--rho2", "0.05",
            "--k", "2", "--max-iter", "60", "--q-max-iter", "60",
            "--out", out, *extra]


def test_generate_outputs(truth_dir):
    names = sorted(os.listdir(truth_dir))
    assert names == ["adjacency.csv", "communities.csv", "groups.csv",
                     "meta.json", "observations.csv", "theta_true.csv"]
    meta = json.load(open(os.path.join(truth_dir, "meta.json")))
    assert meta["p"] == 12 and meta["k"] == 2 and meta["h"] == 2
    assert meta["seed"] == 3 and meta["n"] == 80
    assert meta["zetas"] == [0.1, 0.2, 0.3, 0.4]


def test_fit_evaluate_cluster_flow(truth_dir, tmp_path):
    fit_out = str(tmp_path / "fit")
    assert main(fit_args(truth_dir, fit_out)) == 0
    produced = sorted(os.listdir(fit_out))
    assert produced == ["diagnostics.jsonl", "fit_meta.json", "labels.csv",
                        "q.csv", "theta.csv"]
    with open(os.path.join(fit_out, "diagnostics.jsonl")) as fh:
        records = [json.loads(line) for line in fh]
    assert records[0]["iter"] == 1
    assert {"obj", "primal_res", "dq_rel", "dtheta_rel",
            "wall_ms"} <= set(records[0])

    report_path = str(tmp_path / "report.json")
    assert main(["evaluate", "--fit", fit_out, "--truth", truth_dir,
                 "--out", report_path]) == 0
    report = json.load(open(report_path))
    assert 0.0 <= report["ce"] <= 1.0
    assert 0.0 <= report["pcee"] <= 1.0

    labels_path = str(tmp_path / "labels.csv")
    assert main(["cluster", "--q", os.path.join(fit_out, "q.csv"),
                 "--groups", os.path.join(truth_dir, "groups.csv"),
                 "--k", "2", "--out", labels_path]) == 0
    labels = np.loadtxt(labels_path, delimiter=",")
    assert sorted(set(labels.astype(int))) == [1, 2]


def test_evaluate_perfect_fixture(tmp_path):
    # hand-built fit directory that matches the truth exactly
    truth = str(tmp_path / "truth")
    assert run_cli("generate", "--p", "10", "--k", "2", "--h", "2",
                   "--n", "40", "--seed", "1", "--out", truth) == 0
    from fairgl import load_ground_truth
    gt = load_ground_truth(truth)
    fit_dir = str(tmp_path / "fake_fit")
    os.makedirs(fit_dir)
    np.savetxt(os.path.join(fit_dir, "theta.csv"), gt.theta_true,
               fmt="%.12g", delimiter=",")
    np.savetxt(os.path.join(fit_dir, "q.csv"), np.eye(10), fmt="%.12g",
               delimiter=",")
    np.savetxt(os.path.join(fit_dir, "labels.csv"), gt.communities,
               fmt="%d", delimiter=",")
    out = str(tmp_path / "rep.json")
    assert main(["evaluate", "--fit", fit_dir, "--truth", truth,
                 "--out", out]) == 0
    report = json.load(open(out))
    assert report["ce"] == 0.0
    assert report["pcee"] == 1.0


def test_fit_deterministic_outputs(truth_dir, tmp_path):
    out1, out2 = str(tmp_path / "f1"), str(tmp_path / "f2")
    assert main(fit_args(truth_dir, out1)) == 0
    assert main(fit_args(truth_dir, out2)) == 0
    for name in ("theta.csv", "q.csv", "labels.csv"):
        a = open(os.path.join(out1, name)).read()
        b = open(os.path.join(out2, name)).read()
        assert a == b
    # diagnostics identical modulo the timing field
    for line_a, line_b in zip(open(os.path.join(out1, "diagnostics.jsonl")),
                              open(os.path.join(out2, "diagnostics.jsonl"))):
        rec_a, rec_b = json.loads(line_a), json.loads(line_b)
        rec_a.pop("wall_ms"), rec_b.pop("wall_ms")
        assert rec_a == rec_b


def test_tune_grid(truth_dir, tmp_path):
    out = str(tmp_path / "tune")
    args = ["tune", "--data", os.path.join(truth_dir, "observations.csv"),
            "--groups", os.path.join(truth_dir, "groups.csv"),
            "--model", "fconcord", "--k", "2", "--max-iter", "40",
            "--q-max-iter", "40",
            "--rho1-grid", "0.2,0.6", "--rho2-grid", "0.05",
            "--out", out]
    assert main(args) == 0
    lines = open(os.path.join(out, "grid.csv")).read().strip().splitlines()
    assert lines[0] == "rho1,rho2,bic,converged"
    assert len(lines) == 3
    best = json.load(open(os.path.join(out, "best.json")))
    assert best["rho1"] in (0.2, 0.6)


def test_experiment_matrix_and_resume(tmp_path):
    out = str(tmp_path / "exp")
    config = {
        "schema_version": 1,
        "name": "tiny",
        "generator": {"p": 10, "n": 50, "k": 2, "h": 2},
        "model": "fconcord",
        "grid": {"rho1": [0.3], "rho2": [0.05]},
        "epsilon": 1e-3,
        "nu": 1e-4,
        "max_outer_iter": 40,
        "k": 2,
        "seeds": [0, 1],
        "out_dir": out,
    }
    cfg_path = str(tmp_path / "exp.json")
    json.dump(config, open(cfg_path, "w"))
    assert main(["experiment", "--config", cfg_path]) == 0
    cells = sorted(os.listdir(os.path.join(out, "cells")))
    assert len(cells) == 4  # 2 seeds x 1 grid point x 2 setups
    agg = json.load(open(os.path.join(out, "aggregate.json")))
    assert len(agg) == 2
    assert {"ce_median", "ce_iqr", "ce_mean", "ce_std"} <= set(agg[0])

    # resume: completed cells are not recomputed (mtimes stay put)
    mtimes = {c: os.path.getmtime(os.path.join(out, "cells", c))
              for c in cells}
    assert main(["experiment", "--config", cfg_path]) == 0
    for c in cells:
        assert os.path.getmtime(os.path.join(out, "cells", c)) == mtimes[c]


def test_exit_code_validation_error(tmp_path, capsys):
    missing = str(tmp_path / "missing.csv")
    code = main(["fit", "--data", missing, "--out", str(tmp_path / "o")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error: validation:")

    data_path = str(tmp_path / "bad.csv")
    with open(data_path, "w") as fh:
        fh.write("a,b\n1.0,oops\n2.0,3.0\n")
    code = main(["fit", "--data", data_path, "--out", str(tmp_path / "o2")])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error: validation:")


def test_generate_rejects_bad_zetas(tmp_path, capsys):
    code = main(["generate", "--p", "8", "--k", "2", "--h", "2", "--n", "20",
                 "--zetas", "0.4,0.3,0.2,0.1", "--out", str(tmp_path / "g")])
    assert code == 1
    assert "validation" in capsys.readouterr().err
