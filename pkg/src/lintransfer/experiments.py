"""End-to-end experiments: the cubic-polynomial task and the daily electricity-load scenarios."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, FittedModel, TaskTag, fit_ols
from .data import (
    SCENARIOS,
    ElectricityFeatureSpec,
    PolynomialTaskConfig,
    Scenario,
    build_electricity_design,
    detrend,
    draw_polynomial_samples,
    fit_trend,
    gen_polynomial_task,
    normalize,
    oracle_predict,
    polynomial_features,
    rmse,
    select_window,
)
from .decision import DEFAULT_LEVEL, batch_test
from .finetune import fine_tune, make_transfer_operator
from .gain import TaskTruth, gain_at, gain_matrix, plug_in_truth
from .tuning import TuningReport, default_k_grid, tune

RMSE_COLUMNS = ("k", "rmse_target", "rmse_finetuned", "rmse_selected", "rmse_oracle")


@dataclass(frozen=True)
class Predictions:
    target: np.ndarray
    finetuned: np.ndarray
    selected: np.ndarray
    oracle: np.ndarray
    p_value: np.ndarray
    reject: np.ndarray
    degenerate: np.ndarray


def predict_all(X, y, fitted_S: FittedModel, fitted_T: FittedModel, alpha: float, k: int, rho: float,
                level: float = DEFAULT_LEVEL, with_p_values: bool = True) -> Predictions:
    """Target-only, fine-tuned, test-selected and oracle predictions on ``X``."""
    op = make_transfer_operator(fitted_T.gram, alpha, k)
    beta_k = fine_tune(fitted_S.beta_hat, fitted_T.beta_hat, op)
    y_T = X @ fitted_T.beta_hat
    y_k = X @ beta_k
    dec = batch_test(X, fitted_S, fitted_T, op, rho, level, with_p_values=with_p_values)
    selected = np.where(dec.reject, y_k, y_T)
    return Predictions(y_T, y_k, selected, oracle_predict(y, y_T, y_k), dec.p_value, dec.reject, dec.degenerate)


def rmse_row(y, pred: Predictions):
    return (rmse(y, pred.target), rmse(y, pred.finetuned), rmse(y, pred.selected), rmse(y, pred.oracle))


def rmse_table(X, y, fitted_S, fitted_T, alpha, rho, k_grid, level=DEFAULT_LEVEL):
    rows = []
    for k in k_grid:
        pred = predict_all(X, y, fitted_S, fitted_T, alpha, k, rho, level, with_p_values=False)
        rows.append((int(k),) + rmse_row(y, pred))
    return rows


@dataclass
class ExperimentResult:
    report: dict
    rmse_rows: list
    tuning: TuningReport
    tables: dict = field(default_factory=dict)  # file stem -> (header, rows)


def _summary(tuning: TuningReport, y_test, pred: Predictions, extra=None) -> dict:
    r_T, r_k, r_sel, r_orc = rmse_row(y_test, pred)
    out = {
        "alpha_star": tuning.alpha_star,
        "alpha": tuning.alpha,
        "k_hat": tuning.k_hat,
        "k_rule": tuning.k_rule.value,
        "rho_hat": tuning.rho_hat,
        "no_positive_labels": tuning.no_positive_labels,
        "n_test": int(len(y_test)),
        "rejection_rate": float(np.mean(pred.reject)),
        "degenerate_rows": int(np.sum(pred.degenerate)),
        "rmse": {"target": r_T, "finetuned": r_k, "selected": r_sel, "oracle": r_orc},
    }
    if extra:
        out.update(extra)
    return out


def _tuning_tables(tuning: TuningReport):
    return {
        "u_curve": (("k", "u_bar"), [(int(k), float(u)) for k, u in tuning.u_curve]),
        "rho_curve": (("rho", "precision", "recall"), [tuple(map(float, r)) for r in tuning.rho_curve]),
    }


def run_poly_experiment(
    cfg: PolynomialTaskConfig = PolynomialTaskConfig(),
    alpha_divisor: float = 10.0,
    k: int | None = None,
    rho: float | None = None,
    level: float = DEFAULT_LEVEL,
    n_test: int = 1000,
    k_grid=None,
    rho_grid=None,
    x_grid=None,
    compare_k: int = 50,
) -> ExperimentResult:
    """Cubic-polynomial transfer: tune, then score the four predictors on fresh target samples.

    Tables: gain and p-value along ``u`` (for plotting against the input), the
    tuning curves, and RMSE against k.
    """
    source, target, truth = gen_polynomial_task(cfg)
    fitted_S, fitted_T = fit_ols(source), fit_ols(target)
    k_grid = list(k_grid) if k_grid is not None else default_k_grid()
    tuning = tune(source, target, fitted_S, fitted_T, alpha_divisor, k=k, rho=rho,
                  k_grid=k_grid, rho_grid=rho_grid, level=level)
    test_rng = np.random.default_rng([cfg.seed, 1])
    X_test, y_test = draw_polynomial_samples(truth.beta_T, n_test, cfg.range_T, cfg.sigma2, test_rng)
    pred = predict_all(X_test, y_test, fitted_S, fitted_T, tuning.alpha, tuning.k_hat, tuning.rho_hat, level,
                       with_p_values=False)

    u = np.linspace(-3.0, 3.0, 100) if x_grid is None else np.asarray(x_grid, dtype=float)
    Xu = polynomial_features(u)
    gains = {}
    for kk in (0, compare_k, tuning.k_hat):
        op = make_transfer_operator(fitted_T.gram, tuning.alpha, kk)
        gains[kk] = gain_at(Xu, gain_matrix(truth, fitted_S.gram_inv, fitted_T.gram_inv, op))
    op_hat = make_transfer_operator(fitted_T.gram, tuning.alpha, tuning.k_hat)
    plug = gain_at(Xu, gain_matrix(plug_in_truth(fitted_S, fitted_T), fitted_S.gram_inv, fitted_T.gram_inv, op_hat))
    dec = batch_test(Xu, fitted_S, fitted_T, op_hat, tuning.rho_hat, level)
    dec4 = batch_test(Xu, fitted_S, fitted_T, op_hat, 4 * tuning.rho_hat, level)
    x_rows = [
        (float(u[i]), float(gains[0][i]), float(gains[compare_k][i]), float(gains[tuning.k_hat][i]), float(plug[i]),
         float(dec.psi[i]), float(dec.p_value[i]), float(dec4.p_value[i]), int(dec.reject[i]))
        for i in range(len(u))
    ]
    rows = rmse_table(X_test, y_test, fitted_S, fitted_T, tuning.alpha, tuning.rho_hat, k_grid, level)
    agree = float(np.mean(dec.reject == (gains[tuning.k_hat] > 0)))
    report = _summary(tuning, y_test, pred, {
        "preset": "poly",
        "config": cfg.to_dict(),
        "truth": truth.to_dict(),
        "beta_hat_S": fitted_S.beta_hat.tolist(),
        "beta_hat_T": fitted_T.beta_hat.tolist(),
        "sigma2_hat_S": fitted_S.sigma2_hat,
        "sigma2_hat_T": fitted_T.sigma2_hat,
        "sign_agreement_x_grid": agree,
    })
    tables = {
        "gain_curve": (("u", "gain_k0", f"gain_k{compare_k}", "gain_khat", "gain_plugin_khat", "psi", "p_value",
                        "p_value_4rho", "reject"), x_rows),
        **_tuning_tables(tuning),
    }
    result = ExperimentResult(report, rows, tuning, tables)
    result.truth = truth
    result.fitted = (fitted_S, fitted_T)
    return result


@dataclass(frozen=True)
class LoadTasks:
    source: Dataset
    target: Dataset
    test: Dataset
    test_dates: list
    spec: ElectricityFeatureSpec
    preprocessing: dict


def prepare_load_tasks(source_records, target_records, scenario: Scenario, station_note: str = "mean") -> LoadTasks:
    """Detrend and normalise each zone, then build the six-feature designs.

    Trend and scale are fitted per zone on ``scenario.trend_window`` and
    reused for every period of that zone. Temperature cuts are the tertiles
    of the pooled training temperatures; the day origin is the first
    training day.
    """
    zones = {}
    pre = {}
    for name, recs in (("source", source_records), ("target", target_records)):
        base = select_window(recs, *scenario.trend_window)
        trend = fit_trend(base)
        base_d, _ = detrend(base, trend)
        _, scale = normalize(base_d)
        clean, _ = detrend(recs, trend)
        clean, _ = normalize(clean, scale)
        zones[name] = clean
        pre[name] = {"trend": trend.to_dict(), "scale": scale.to_dict()}
    src_train = select_window(zones["source"], *scenario.source_window)
    tgt_train = select_window(zones["target"], *scenario.target_window)
    test = select_window(zones["target"], *scenario.test_window)
    if not src_train or not tgt_train or not test:
        raise ValueError(f"scenario {scenario.name}: a training or test window holds no records")
    spec = ElectricityFeatureSpec.from_temperatures([r.temperature for r in src_train + tgt_train])
    origin = min(src_train[0].timestamp, tgt_train[0].timestamp).date()
    pre.update({"features": spec.to_dict(), "origin": origin.isoformat(), "temperature": station_note,
                "n_source": len(src_train), "n_target": len(tgt_train), "n_test": len(test)})
    return LoadTasks(
        source=build_electricity_design(src_train, spec, origin, TaskTag.SOURCE),
        target=build_electricity_design(tgt_train, spec, origin, TaskTag.TARGET),
        test=build_electricity_design(test, spec, origin, TaskTag.TARGET),
        test_dates=[r.timestamp.date() for r in test],
        spec=spec,
        preprocessing=pre,
    )


def run_load_experiment(
    source_records,
    target_records,
    scenario: str | Scenario = "gefcom-B",
    alpha_divisor: float = 10.0,
    k: int | None = None,
    rho: float | None = None,
    level: float = DEFAULT_LEVEL,
    k_grid=None,
    rho_grid=None,
    truth: TaskTruth | None = None,
) -> ExperimentResult:
    """Daily 8 a.m. load transfer between two zones for one scenario preset."""
    if isinstance(scenario, str):
        scenario = SCENARIOS[scenario]
    tasks = prepare_load_tasks(source_records, target_records, scenario)
    fitted_S, fitted_T = fit_ols(tasks.source), fit_ols(tasks.target)
    k_grid = list(k_grid) if k_grid is not None else default_k_grid()
    tuning = tune(tasks.source, tasks.target, fitted_S, fitted_T, alpha_divisor, k=k, rho=rho,
                  k_grid=k_grid, rho_grid=rho_grid, level=level)
    X, y = tasks.test.X, tasks.test.y
    pred = predict_all(X, y, fitted_S, fitted_T, tuning.alpha, tuning.k_hat, tuning.rho_hat, level)
    series = [
        (d.isoformat(), float(y[i]), float(pred.target[i]), float(pred.finetuned[i]), float(pred.selected[i]),
         float(pred.p_value[i]), int(pred.reject[i]), int(pred.degenerate[i]))
        for i, d in enumerate(tasks.test_dates)
    ]
    rows = rmse_table(X, y, fitted_S, fitted_T, tuning.alpha, tuning.rho_hat, k_grid, level)
    report = _summary(tuning, y, pred, {
        "preset": scenario.name,
        "windows": {
            "source": [d.isoformat() for d in scenario.source_window],
            "target": [d.isoformat() for d in scenario.target_window],
            "test": [d.isoformat() for d in scenario.test_window],
            "trend": [d.isoformat() for d in scenario.trend_window],
        },
        "preprocessing": tasks.preprocessing,
        "beta_hat_S": fitted_S.beta_hat.tolist(),
        "beta_hat_T": fitted_T.beta_hat.tolist(),
        "sigma2_hat_S": fitted_S.sigma2_hat,
        "sigma2_hat_T": fitted_T.sigma2_hat,
    })
    tables = {
        "pvalues": (("date", "y", "pred_target", "pred_finetuned", "pred_selected", "p_value", "reject",
                     "degenerate"), series),
        **_tuning_tables(tuning),
    }
    result = ExperimentResult(report, rows, tuning, tables)
    result.tasks = tasks
    result.fitted = (fitted_S, fitted_T)
    return result


SYNTHETIC_LOAD_BETA_T = (0.2, 0.5, -0.6, -0.06, -0.02, 0.05)
SYNTHETIC_LOAD_BETA_S = (0.3, 0.4, -0.5, -0.05, -0.03, 0.06)
SYNTHETIC_START = dt.date(2004, 1, 1)
