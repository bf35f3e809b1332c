import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from medpath.cli import main, parse_args
from medpath.effects import read_json, read_summary_table

SMALL_SIM = ["--r", "20", "--p", "10", "--effect-scale", "2"]
GRID = ["--lambda1", "0.001,0.01,0.1", "--ratio2", "0", "--c1", "10,100", "--bic", "gaussian", "--threads", "1"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--n", "300", "--seed", "11", *SMALL_SIM, "--export-dataset", "--out-dir", str(out)]) == 0
    return out / "sim_n300.csv", out / "sim_n300_roles.ini", out / "sim_n300_truth.json"


def run_fit(dataset, out, *extra):
    data, roles, _ = dataset
    args = ["fit", "--data", str(data), "--roles", str(roles), "--out-fit", str(out / "fit.json"),
            "--out-table", str(out / "tuning.csv"), *GRID, *extra]
    assert main(args) == 0
    return json.loads((out / "fit.json").read_text())


def test_pca_outputs_and_determinism(dataset, tmp_path, capsys):
    data, roles, _ = dataset
    outs = []
    for k in range(2):
        m, s = tmp_path / f"m{k}.json", tmp_path / f"s{k}.csv"
        assert main(["pca", "--data", str(data), "--roles", str(roles), "--out-model", str(m), "--out-scores", str(s)]) == 0
        outs.append((m.read_bytes(), s.read_bytes()))
    assert outs[0] == outs[1]
    assert "selected q = 6" in capsys.readouterr().out
    header = outs[0][1].decode().splitlines()[0]
    assert header == "id," + ",".join(f"PC{j}" for j in range(1, 7))
    assert b"\r\n" not in outs[0][1]


def test_pca_explicit_q(dataset, tmp_path):
    data, roles, _ = dataset
    s = tmp_path / "s.csv"
    assert main(["pca", "--data", str(data), "--roles", str(roles), "--q", "1", "--threshold", "0.99",
                 "--out-model", str(tmp_path / "m.json"), "--out-scores", str(s)]) == 0
    rows = list(csv.reader(open(s)))
    assert rows[0] == ["id", "PC1"] and len(rows) == 301


def test_fit_recovers_planted_paths(dataset, tmp_path):
    doc = run_fit(dataset, tmp_path)
    truth = json.loads(dataset[2].read_text())["truth"]
    t_alpha = np.asarray(truth["alpha"])
    t_prod = t_alpha * np.asarray(truth["beta"])
    est = np.asarray(doc["params"]["alpha"]) * np.asarray(doc["params"]["beta"])
    assert est.shape == t_prod.shape
    found = np.abs(est) > 1e-8
    assert np.all(found[t_prod != 0])
    # spurious paths are small next to the planted ones
    assert np.max(np.abs(est[t_prod == 0])) <= 0.05 * np.min(np.abs(t_prod[t_prod != 0]))
    np.testing.assert_allclose(est[t_prod != 0], t_prod[t_prod != 0], rtol=0.2)


def test_fit_is_deterministic_including_parallel(dataset, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    run_fit(dataset, a)
    run_fit(dataset, b, "--threads", "2")
    assert (a / "fit.json").read_bytes() == (b / "fit.json").read_bytes()
    assert (a / "tuning.csv").read_bytes() == (b / "tuning.csv").read_bytes()


def test_huge_penalty_gives_zero_parameters(dataset, tmp_path):
    data, roles, _ = dataset
    assert main(["fit", "--data", str(data), "--roles", str(roles), "--lambda1", "1e6", "--ratio3", "1",
                 "--c1", "1", "--out-fit", str(tmp_path / "f.json"), "--out-table", str(tmp_path / "t.csv")]) == 0
    params = json.loads((tmp_path / "f.json").read_text())["params"]
    for key in ("alpha", "beta", "gamma"):
        assert not np.any(np.asarray(params[key]))


def test_effects_csv_and_json_agree(dataset, tmp_path):
    run_fit(dataset, tmp_path)
    fit = str(tmp_path / "fit.json")
    assert main(["effects", "--fit", fit, "--format", "json", "--out", str(tmp_path / "e")]) == 0
    assert main(["effects", "--fit", fit, "--precision", "17", "--out", str(tmp_path / "e")]) == 0
    rep = read_json(tmp_path / "e.json")
    table = read_summary_table(tmp_path / "e_summary.csv")
    np.testing.assert_allclose(table["IE"][0], rep.ie_total, rtol=1e-15)
    np.testing.assert_allclose(table["TE"][0], rep.te, rtol=1e-15)
    ie, de, te = table["IE"], table["DE"], table["TE"]
    np.testing.assert_allclose(ie[0] + de[0], te[0], rtol=1e-14, atol=1e-15)
    assert te[1] == pytest.approx(ie[1] + de[1], rel=1e-14)
    paths = list(csv.reader(open(tmp_path / "e_paths.csv")))
    assert len(paths) - 1 == 2 * len({k for _, k, *_ in rep.active_paths})


def test_effects_zero_fit(tmp_path):
    doc = {"params": {"alpha": [[0.0, 0.0]], "beta": [0.0, 0.0], "gamma": [0.0]}}
    (tmp_path / "f.json").write_text(json.dumps(doc))
    assert main(["effects", "--fit", str(tmp_path / "f.json"), "--out", str(tmp_path / "e")]) == 0
    table = read_summary_table(tmp_path / "e_summary.csv")
    assert all(not np.any(v) and t == 0 for v, t in table.values())


def test_malformed_fit_file(tmp_path, capsys):
    (tmp_path / "f.json").write_text('{"params": {}}')
    assert main(["effects", "--fit", str(tmp_path / "f.json"), "--out", str(tmp_path / "e")]) == 1
    assert "malformed" in capsys.readouterr().err


def test_dataset_error_reports_location(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("x1,m1,y\n1,2,3\n4,,6\n")
    (tmp_path / "r.ini").write_text("[roles]\nx1 = exposure\nm1 = mediator\ny = outcome\n")
    code = main(["pca", "--data", str(tmp_path / "d.csv"), "--roles", str(tmp_path / "r.ini"),
                 "--out-model", str(tmp_path / "m"), "--out-scores", str(tmp_path / "s")])
    assert code == 1
    assert "d.csv:3: missing value at (2, 'm1')" in capsys.readouterr().err


def test_config_file_supplies_defaults(tmp_path, dataset):
    data, roles, _ = dataset
    cfg = tmp_path / "run.ini"
    cfg.write_text(roles.read_text() + "[pca]\nq = 2\nscale = true\n")
    args = parse_args(["--config", str(cfg), "pca", "--data", str(data), "--out-model", "m", "--out-scores", "s"])
    assert args.q == 2 and args.scale
    args = parse_args(["--config", str(cfg), "pca", "--data", str(data), "--q", "3", "--no-scale",
                       "--out-model", "m", "--out-scores", "s"])
    assert args.q == 3 and not args.scale
    s = tmp_path / "s.csv"
    assert main(["--config", str(cfg), "pca", "--data", str(data), "--out-model", str(tmp_path / "m.json"),
                 "--out-scores", str(s)]) == 0
    assert s.read_text().splitlines()[0] == "id,PC1,PC2"
    assert main(["--config", str(tmp_path / "none.ini"), "pca", "--data", "x", "--out-model", "m",
                 "--out-scores", "s"]) == 2


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("MEDPATH_THREADS", "3")
    assert parse_args(["simulate", "--out-dir", "x"]).threads == 3


def test_simulate_tables_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert main(["simulate", "--n", "80,160", "--n-reps", "1", "--seed", "7", *SMALL_SIM,
                     "--out-dir", str(d)]) == 0
        outs.append([(d / f).read_bytes() for f in ("replicates.csv", "estimation.csv", "selection.csv")])
    assert outs[0] == outs[1]
    sel = list(csv.reader(open(tmp_path / "0" / "selection.csv")))
    assert sel[0] == ["metric", "n80", "n160"]
    assert [r[0] for r in sel[1:]] == ["Sensitivity", "Specificity", "# PC mean", "# PC sd"]


def test_simulate_accepts_large_dimension_pair(tmp_path):
    assert main(["simulate", "--n", "100", "--r", "350", "--p", "150", "--export-dataset", "--out-dir", str(tmp_path)]) == 0
    header = (tmp_path / "sim_n100.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 1 + 350 + 150 + 1
    truth = json.loads((tmp_path / "sim_n100_truth.json").read_text())
    assert np.asarray(truth["truth"]["alpha"]).shape[1] == 150


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "medpath", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("medpath ")
