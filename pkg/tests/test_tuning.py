import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import Instance, random_spd
from lintransfer.core import Dataset, fit_ols
from lintransfer.data import PolynomialTaskConfig, gen_polynomial_task
from lintransfer.decision import batch_test
from lintransfer.errors import CurveTooShort, NoPositiveLabels
from lintransfer.finetune import fine_tune, make_transfer_operator
from lintransfer.gain import gain_matrix, kl_decomposition
from lintransfer.tuning import (
    KRule,
    alpha_star,
    calibrate_rho,
    default_k_grid,
    default_rho_grid,
    empirical_labels,
    pick_alpha,
    precision_recall,
    select_k,
    select_rho,
    tune,
    u_bar_curve,
)


def test_alpha_star_examples():
    assert alpha_star(np.eye(4)) == pytest.approx(1.0)
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((2, 2)))
    assert alpha_star((Q * [1.0, 3.0]) @ Q.T) == pytest.approx(0.5)
    assert pick_alpha(np.eye(2)) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        pick_alpha(np.eye(2), 0.0)


@given(st.integers(1, 8), st.floats(1.0, 1e6), st.integers(0, 2**31 - 1))
def test_fifth_of_alpha_star_is_stable(d, cond, seed):
    gram = random_spd(np.random.default_rng(seed), d, cond)
    assert alpha_star(gram) / 5 < 1.0 / np.linalg.eigvalsh(gram)[-1]


def test_default_grids():
    ks = default_k_grid()
    assert ks[:11] == list(range(11)) and ks[11] == 12 and ks[-1] == 10_000
    assert all(b > a for a, b in zip(ks, ks[1:])) and 55 <= len(ks) <= 65
    rhos = default_rho_grid()
    assert rhos[0] == pytest.approx(1e-5) and rhos[-1] == pytest.approx(1.0)


def test_u_bar_zero_for_identical_models(rng):
    X = rng.standard_normal((30, 3))
    m = fit_ols(Dataset(X, rng.standard_normal(30)))
    curve = u_bar_curve(m, m, X, pick_alpha(m.gram), [0, 5, 50])
    assert curve[0] == (0, pytest.approx(0.0, abs=1e-14))


def test_u_bar_vanishes_for_large_k(instance):
    X = np.vstack([instance.source.X, instance.target.X])
    curve = u_bar_curve(instance.fit_S, instance.fit_T, X, alpha_star(instance.fit_T.gram) / 5, [0, 10, 20_000])
    assert abs(curve[-1][1]) < 1e-10 * max(1.0, abs(curve[0][1]))


def test_u_bar_matches_pointwise_decomposition(instance):
    from lintransfer.gain import plug_in_truth

    X = np.vstack([instance.source.X, instance.target.X])
    alpha = pick_alpha(instance.fit_T.gram)
    truth = plug_in_truth(instance.fit_S, instance.fit_T)
    for k, u in u_bar_curve(instance.fit_S, instance.fit_T, X, alpha, [0, 3, 40]):
        op = make_transfer_operator(instance.fit_T.gram, alpha, k)
        ref = np.mean([kl_decomposition(x, truth, instance.fit_S.gram_inv, instance.fit_T.gram_inv, op)[1] for x in X])
        assert u == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_u_bar_skips_zero_rows(instance):
    X = np.vstack([instance.source.X, np.zeros((2, 3))])
    with pytest.warns(UserWarning, match="2 all-zero rows"):
        u_bar_curve(instance.fit_S, instance.fit_T, X, 0.01, [0, 1])
    with pytest.raises(ValueError):
        u_bar_curve(instance.fit_S, instance.fit_T, X[:5], 0.01, [3, 1])


def test_select_k_examples():
    assert select_k([(0, 0.0), (10, 5.0), (20, 3.0)]) == (10, KRule.LOCAL_MAX)
    ks = np.arange(0, 11)
    _, rule = select_k(list(zip(ks, np.exp(-ks / 2.0))))
    assert rule is KRule.ELBOW
    with pytest.raises(CurveTooShort):
        select_k([(0, 1.0), (1, 2.0)])


def test_select_k_boundary_maximum_is_not_local():
    # an initial spike at the smallest k must not count as a local maximum
    assert select_k([(0, 9.0), (1, 3.0), (2, 2.0), (3, 1.5)])[1] is KRule.ELBOW


def test_elbow_geometric_oracle():
    ks = list(range(11))
    us = [1.0] * 7 + [0.75, 0.5, 0.25, 0.0]  # plateau until k = 6 then a linear drop
    # on the normalised axes the chord runs from (0, 1) to (1, 0); distance ~ x + y - 1
    xs, ys = np.array(ks) / 10, np.array(us)
    dist = np.abs(xs + ys - 1) / np.sqrt(2)
    k_hat, rule = select_k(list(zip(ks, us)))
    assert rule is KRule.ELBOW and k_hat == ks[int(np.argmax(dist))] == 6


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=30), st.floats(1e-3, 1e3))
def test_select_k_scale_invariant(us, c):
    curve = list(enumerate(us))
    scaled = [(k, c * u) for k, u in curve]
    assert select_k(curve) == select_k(scaled)


def test_precision_recall_edge_cases():
    assert precision_recall([0, 0], [1, 0]) == (0.0, 0.0)
    assert precision_recall([1, 1, 0], [1, 0, 1]) == (0.5, 0.5)


def test_select_rho_rules():
    assert select_rho([(0.3, 0.2, 0.1)]) == 0.3
    curve = [(0.1, 0.4, 0.9), (0.2, 0.8, 0.6), (0.4, 0.8, 0.5), (0.8, 1.0, 0.2)]
    assert select_rho(curve) == 0.4  # precision tie among recall >= 0.5 goes to the larger rho
    curve = [(0.1, 0.5, 0.45), (0.2, 0.6, 0.4), (0.4, 0.9, 0.1), (0.8, 1.0, 0.05)]
    assert select_rho(curve) == 0.2  # the biggest drop comes right after 0.2
    separable = [(0.01, 0.6, 1.0), (0.1, 1.0, 1.0), (1.0, 1.0, 0.3)]
    assert select_rho(separable) == 0.1


def _poly_parts(seed=0):
    source, target, truth = gen_polynomial_task(PolynomialTaskConfig(seed=seed))
    return source, target, truth, fit_ols(source), fit_ols(target)


def test_calibration_curve_matches_recomputation():
    source, target, _, S, T = _poly_parts()
    op = make_transfer_operator(T.gram, pick_alpha(T.gram), 300)
    grid = [1e-3, 1e-2, 0.1, 0.5, 1.0]
    rho_hat, curve = calibrate_rho(source, target, S, T, op, grid)
    X = np.vstack([source.X, target.X])
    y = np.concatenate([source.y, target.y])
    labels = empirical_labels(X, y, T, fine_tune(S.beta_hat, T.beta_hat, op))
    for rho, p, r in curve:
        assert (p, r) == precision_recall(batch_test(X, S, T, op, rho, with_p_values=False).reject, labels)
        assert 0 <= p <= 1 and 0 <= r <= 1
    assert curve[0][2] >= curve[-1][2]
    assert rho_hat == select_rho(curve)


def test_no_positive_labels(rng):
    inst = Instance(rng)
    op = make_transfer_operator(inst.fit_T.gram, alpha_star(inst.fit_T.gram) / 5, 100_000)  # beta_k == beta_T
    with pytest.warns(NoPositiveLabels):
        rho_hat, curve = calibrate_rho(inst.source, inst.target, inst.fit_S, inst.fit_T, op, [0.1, 0.5])
    assert rho_hat == 0.5 and len(curve) == 2


def test_tune_report_invariants_and_overrides():
    source, target, _, S, T = _poly_parts()
    rep = tune(source, target, S, T)
    assert rep.alpha <= rep.alpha_star
    assert rep.k_hat in [k for k, _ in rep.u_curve]
    assert rep.rho_hat in [r for r, _, _ in rep.rho_curve]
    json.dumps(rep.to_dict())
    fixed = tune(source, target, S, T, k=50, rho=0.2)
    assert (fixed.k_hat, fixed.rho_hat, fixed.u_curve, fixed.rho_curve) == (50, 0.2, [], [])


def test_polynomial_curve_peaks_in_the_hundreds():
    source, target, _, S, T = _poly_parts(0)
    rep = tune(source, target, S, T)
    assert rep.k_rule is KRule.LOCAL_MAX
    assert 100 <= rep.k_hat < 10_000


def test_u_dominates_true_gain(rng):
    inst = Instance(rng, d=3, n_s=60, n_t=12, gap=0.5)
    alpha = pick_alpha(inst.fit_T.gram)
    for k in (0, 5, 50, 500):
        op = make_transfer_operator(inst.fit_T.gram, alpha, k)
        rep = gain_matrix(inst.truth, inst.fit_S.gram_inv, inst.fit_T.gram_inv, op)
        for x in inst.target.X[:10]:
            kl, u = kl_decomposition(x, inst.truth, inst.fit_S.gram_inv, inst.fit_T.gram_inv, op)
            assert u >= x @ rep.H_k @ x - 1e-12


def test_tuning_silences_no_label_warning(rng):
    inst = Instance(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = tune(inst.source, inst.target, inst.fit_S, inst.fit_T, k=200_000)
    assert rep.no_positive_labels
