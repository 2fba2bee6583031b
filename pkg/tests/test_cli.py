import csv
import hashlib
import json
import math

import numpy as np
import pytest

from lintransfer.cli import DECISION_COLUMNS, EXIT_FATAL, EXIT_FLAGGED, EXIT_OK, main
from lintransfer.core import Dataset
from lintransfer.data import save_dataset_csv, write_csv


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_x(path, X):
    write_csv(path, [f"x{j}" for j in range(1, X.shape[1] + 1)], (list(map(float, r)) for r in X))


def fit(tmp_path, name, data, task="target"):
    save_dataset_csv(tmp_path / f"{name}.csv", data)
    assert main(["fit", str(tmp_path / f"{name}.csv"), "--task", task, "--out", str(tmp_path / name)]) == EXIT_OK
    return tmp_path / name / "model.json"


@pytest.fixture
def models(tmp_path, rng):
    X_S, X_T = rng.standard_normal((80, 3)), rng.standard_normal((20, 3))
    beta = np.array([1.0, -0.5, 0.3])
    src = Dataset(X_S, X_S @ (beta + 0.2) + rng.standard_normal(80))
    tgt = Dataset(X_T, X_T @ beta + rng.standard_normal(20))
    write_x(tmp_path / "x.csv", rng.standard_normal((25, 3)))
    return fit(tmp_path, "src", src, "source"), fit(tmp_path, "tgt", tgt), tmp_path


def test_fit_identity_design(tmp_path):
    model = json.loads(fit(tmp_path, "eye", Dataset(np.eye(3), np.array([1.0, 2.0, 3.0]))).read_text())
    assert model["beta_hat"] == [1.0, 2.0, 3.0]
    assert math.isnan(model["sigma2_hat"])


def test_refit_is_identical(tmp_path):
    assert main(["generate", "poly", "--seed", "2", "--out", str(tmp_path / "g")]) == EXIT_OK
    docs = []
    for run in ("a", "b"):
        assert main(["fit", str(tmp_path / "g" / "target.csv"), "--out", str(tmp_path / run)]) == EXIT_OK
        docs.append((tmp_path / run / "model.json").read_bytes())
    assert docs[0] == docs[1]


def test_fit_matches_normal_equations(tmp_path, rng):
    X, y = rng.standard_normal((30, 4)), rng.standard_normal(30)
    model = json.loads(fit(tmp_path, "d", Dataset(X, y)).read_text())
    np.testing.assert_allclose(model["beta_hat"], np.linalg.solve(X.T @ X, X.T @ y), rtol=1e-10, atol=1e-12)
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    digest = hashlib.sha256((tmp_path / "d.csv").read_bytes()).hexdigest()
    assert manifest["command"] == "fit" and manifest["artifacts"] == ["model.json"]
    assert manifest["inputs"] == {str(tmp_path / "d.csv"): digest}


def transfer(models, *extra):
    src, tgt, root = models
    out = root / "out"
    code = main(["transfer", "--source-model", str(src), "--target-model", str(tgt), "--x", str(root / "x.csv"),
                 "--out", str(out), *extra])
    return code, out


def test_huge_rho_keeps_target(models):
    code, out = transfer(models, "--k", "30", "--rho", "1e6")
    rows = read_rows(out / "decisions.csv")
    assert code == EXIT_OK and len(rows) == 25 and tuple(rows[0]) == DECISION_COLUMNS
    assert {r["decision"] for r in rows} == {"target"} and {r["chosen_model"] for r in rows} == {"target"}


def test_null_calibration_identical_models(models):
    src, _, root = models
    code, out = transfer((src, src, root), "--k", "0", "--rho", "0")
    rows = read_rows(out / "decisions.csv")
    assert code == EXIT_OK
    for r in rows:
        assert float(r["psi"]) == pytest.approx(1.0, rel=1e-12)
        assert float(r["p_value"]) == pytest.approx(0.5, abs=1e-12)
        assert r["decision"] == "target"


def test_transfer_with_tuning(models):
    _, _, root = models
    code, out = transfer(models, "--source-data", str(root / "src.csv"), "--target-data", str(root / "tgt.csv"))
    summary = json.loads((out / "tuning.json").read_text())
    assert code == EXIT_OK and "tuning" in summary and summary["n_rows"] == 25
    assert json.loads((out / "manifest.json").read_text())["artifacts"] == ["decisions.csv", "tuning.json"]


def test_tuning_without_data_is_fatal(models, capsys):
    code, _ = transfer(models, "--k", "5")
    assert code == EXIT_FATAL
    assert "--source-data" in capsys.readouterr().err


def test_degenerate_rows_exit_flagged(tmp_path):
    tgt = fit(tmp_path, "t", Dataset(np.array([[1.0, 0.0], [0.0, math.sqrt(0.5)], [0.0, 0.0]]), np.array([1.0, 2.0, 0.5])))
    src = fit(tmp_path, "s", Dataset(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0, 2.0])), "source")
    write_x(tmp_path / "x.csv", np.array([[2.0, 0.0], [1.0, 1.0]]))
    # alpha* = 4/3 for eigenvalues {1, 0.5}; dividing by 4/3 gives alpha = 1 and A = diag(0, 0.5)
    code = main(["transfer", "--source-model", str(src), "--target-model", str(tgt), "--x", str(tmp_path / "x.csv"),
                 "--k", "3", "--rho", "0", "--alpha-div", repr(4 / 3), "--out", str(tmp_path / "o")])
    rows = read_rows(tmp_path / "o" / "decisions.csv")
    assert code == EXIT_FLAGGED
    assert [r["degenerate"] for r in rows] == ["1", "0"] and rows[0]["decision"] == "target"


def test_fatal_errors(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("x1,x2,y\n1,oops,2\n")
    assert main(["fit", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "o")]) == EXIT_FATAL
    assert "ParseError" in capsys.readouterr().err
    assert main(["fit", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == EXIT_FATAL
    assert main(["experiment", "gefcom-A", "--out", str(tmp_path / "o")]) == EXIT_FATAL
    assert "--data" in capsys.readouterr().err


def test_generate_and_experiment_are_reproducible(tmp_path):
    for run in ("a", "b"):
        assert main(["generate", "load", "--seed", "3", "--out", str(tmp_path / f"gen{run}")]) == EXIT_OK
        assert main(["experiment", "gefcom-B", "--data", str(tmp_path / f"gen{run}" / "loads.csv"),
                     "--out", str(tmp_path / f"exp{run}")]) == EXIT_OK
    for name in ("gen/loads.csv", "exp/curves.csv", "exp/pvalues.csv", "exp/report.json", "exp/u_curve.csv"):
        d, f = name.split("/")
        assert (tmp_path / f"{d}a" / f).read_bytes() == (tmp_path / f"{d}b" / f).read_bytes()
    manifest = json.loads((tmp_path / "expa" / "manifest.json").read_text())
    assert manifest["seed"] is None and "timestamp" not in json.dumps(manifest)


def test_generate_poly_files(tmp_path):
    assert main(["generate", "poly", "--seed", "1", "--n-target", "20", "--out", str(tmp_path)]) == EXIT_OK
    assert len(read_rows(tmp_path / "target.csv")) == 20
    assert len(read_rows(tmp_path / "x_grid.csv")) == 100
    assert set(json.loads((tmp_path / "truth.json").read_text())) >= {"beta_S", "beta_T"}


def test_phases_small_config(tmp_path):
    cfg = {"d": 2, "beta_S": [0.0, 0.0], "beta_T": [0.1, 0.0], "k_list": [0, 5], "grid_S": [10, 20],
           "grid_T": [5, 8], "reps": 3}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    outs = []
    for run in ("a", "b"):
        assert main(["phases", "--config", str(tmp_path / "cfg.json"), "--seed", "4",
                     "--out", str(tmp_path / run)]) == EXIT_OK
        outs.append((tmp_path / run / "phases.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = read_rows(tmp_path / "a" / "phases.csv")
    assert len(rows) == 8 and all(abs(float(r["clipped_gain"])) <= 0.4 for r in rows)
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]["seed"] == 4
