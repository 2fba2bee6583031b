import numpy as np
import pytest

from lintransfer.data import PolynomialTaskConfig, simulate_load_pair
from lintransfer.experiments import (
    RMSE_COLUMNS,
    SYNTHETIC_LOAD_BETA_S,
    SYNTHETIC_LOAD_BETA_T,
    predict_all,
    rmse_row,
    run_load_experiment,
    run_poly_experiment,
)


@pytest.fixture(scope="module")
def poly():
    return run_poly_experiment(PolynomialTaskConfig(seed=0), k_grid=[0, 1, 2, 3, 5, 10, 50, 200, 1000, 5000])


def load_pair(seed):
    return simulate_load_pair(SYNTHETIC_LOAD_BETA_S, SYNTHETIC_LOAD_BETA_T, seed=seed)[:2]


def test_oracle_is_never_beaten(poly):
    for row in poly.rmse_rows:
        assert len(row) == len(RMSE_COLUMNS)
        assert row[4] <= min(row[1:4]) + 1e-15


def test_k0_finetuned_equals_source(poly):
    row = poly.rmse_rows[0]
    S, T = poly.fitted
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(5), rng.standard_normal((5, 3))])
    pred = predict_all(X, X @ T.beta_hat, S, T, poly.tuning.alpha, 0, 0.1)
    np.testing.assert_allclose(pred.finetuned, X @ S.beta_hat, atol=1e-12)
    assert row[0] == 0


def test_poly_report_contents(poly):
    rep = poly.report
    assert rep["n_test"] == 1000 and rep["preset"] == "poly"
    assert set(rep["rmse"]) == {"target", "finetuned", "selected", "oracle"}
    header, rows = poly.tables["gain_curve"]
    assert len(rows) == 100 and header[0] == "u"
    assert 0.0 <= rep["sign_agreement_x_grid"] <= 1.0


def test_selected_safety_on_average():
    reps = [run_poly_experiment(PolynomialTaskConfig(seed=seed)).report["rmse"] for seed in range(10)]
    assert np.mean([r["selected"] for r in reps]) <= np.mean([r["target"] for r in reps]) + 1e-9


def test_finetuned_beats_target_on_short_target_window():
    gains = []
    for seed in range(10):
        res = run_load_experiment(*load_pair(seed), "gefcom-A")
        gains.append(res.report["rmse"]["target"] - res.report["rmse"]["finetuned"])
    assert np.mean(gains) > 0


def test_load_experiment_tables():
    res = run_load_experiment(*load_pair(0), "gefcom-B", k=20, rho=0.1)
    tasks = res.tasks
    assert tasks.source.d == 6 and tasks.preprocessing["n_source"] == 183
    assert tasks.preprocessing["n_target"] == 122
    header, rows = res.tables["pvalues"]
    assert len(rows) == tasks.test.n and header[-1] == "degenerate"
    assert res.report["k_hat"] == 20 and res.report["rho_hat"] == 0.1
    S, T = res.fitted
    pred = predict_all(tasks.test.X, tasks.test.y, S, T, res.tuning.alpha, 20, 0.1)
    assert rmse_row(tasks.test.y, pred) == tuple(res.report["rmse"][c] for c in ("target", "finetuned", "selected",
                                                                                 "oracle"))


def test_load_training_zones_are_standardised():
    res = run_load_experiment(*load_pair(1), "gefcom-A", k=5, rho=0.1)
    # the trend window is the whole first year, which contains the source window
    y = res.tasks.source.y
    assert abs(y.mean()) < 1e-9 and y.std() == pytest.approx(1.0, rel=1e-9)
