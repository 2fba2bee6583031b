"""Choosing the step size, the number of fine-tuning iterations, and rho."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, FittedModel
from .decision import DEFAULT_LEVEL, dof, statistic_parts
from .errors import CurveTooShort, NoPositiveLabels
from .fdist import f_quantile
from .finetune import TransferOperator, eigendecompose, fine_tune, make_transfer_operator

DEFAULT_ALPHA_DIVISOR = 10.0
MIN_RECALL = 0.5


class KRule(str, enum.Enum):
    LOCAL_MAX = "LocalMax"
    ELBOW = "Elbow"


def alpha_star(gram_T) -> float:
    """Fastest-convergence step ``2 / (lambda_max + lambda_min)`` for the target loss."""
    lam = eigendecompose(gram_T).lambdas
    return 2.0 / (lam[0] + lam[-1])


def pick_alpha(gram_T, divisor: float = DEFAULT_ALPHA_DIVISOR) -> float:
    if divisor <= 0:
        raise ValueError(f"divisor must be positive, got {divisor}")
    return alpha_star(gram_T) / divisor


def default_k_grid(k_max: int = 10_000, n_geometric: int = 50) -> list[int]:
    """Every k from 0 to 10, then a geometric progression from 12 up to ``k_max``."""
    tail = np.unique(np.round(np.geomspace(12, k_max, n_geometric)).astype(int))
    return list(range(11)) + [int(k) for k in tail]


def default_rho_grid(n: int = 31) -> list[float]:
    return [float(r) for r in np.geomspace(1e-5, 1.0, n)]


def u_bar_curve(source: FittedModel, target: FittedModel, joint_inputs, alpha: float, k_grid) -> list[tuple[int, float]]:
    """Mean log-variance term ``U_k(x_i)`` over the training inputs for each k.

    ``U_k(x) = -s ln(x^T V_k x / s)`` with ``s = s2_T x^T S_T^-1 x`` and the
    noise variances replaced by their estimates. All-zero rows are skipped.
    """
    k_grid = [int(k) for k in k_grid]
    if not k_grid:
        raise ValueError("k_grid is empty")
    if any(b <= a for a, b in zip(k_grid, k_grid[1:])):
        raise ValueError("k_grid must be strictly increasing")
    X = np.atleast_2d(np.asarray(joint_inputs, dtype=float))
    zero = ~np.any(X, axis=1)
    if zero.any():
        warnings.warn(f"skipped {int(zero.sum())} all-zero rows in u_bar_curve", stacklevel=2)
        X = X[~zero]
    eig = eigendecompose(target.gram)
    P, lam = eig.P, eig.lambdas
    Z = X @ P  # eigen-coordinates of each row
    S_inv_eig = P.T @ source.gram_inv @ P
    s = target.sigma2_hat * np.einsum("ij,j,ij->i", Z, 1.0 / lam, Z)
    base = 1.0 - alpha * lam
    curve = []
    for k in k_grid:
        w = base**k
        WZ = Z * w
        v = source.sigma2_hat * np.einsum("ij,jk,ik->i", WZ, S_inv_eig, WZ)
        v += target.sigma2_hat * np.einsum("ij,j,ij->i", Z * (1.0 - w), 1.0 / lam, Z * (1.0 - w))
        curve.append((k, float(np.mean(-s * np.log(v / s)))))
    return curve


def _elbow_index(ks, us):
    ks = np.asarray(ks, dtype=float)
    us = np.asarray(us, dtype=float)
    xs = (ks - ks[0]) / (ks[-1] - ks[0]) if ks[-1] != ks[0] else np.zeros_like(ks)
    span = us.max() - us.min()
    ys = (us - us.min()) / span if span > 0 else np.zeros_like(us)
    dx, dy = xs[-1] - xs[0], ys[-1] - ys[0]
    norm = np.hypot(dx, dy)
    if norm == 0:
        return 0
    dist = np.abs(dy * (xs - xs[0]) - dx * (ys - ys[0])) / norm
    return int(np.argmax(dist))


def select_k(curve) -> tuple[int, KRule]:
    """First strict interior local maximum of the curve, else the elbow point.

    The elbow is the point farthest from the chord between the end points once
    both axes are rescaled to [0, 1].
    """
    curve = list(curve)
    if len(curve) < 3:
        raise CurveTooShort(f"need at least 3 points, got {len(curve)}")
    ks = [int(k) for k, _ in curve]
    us = [float(u) for _, u in curve]
    for i in range(1, len(us) - 1):
        if us[i] > us[i - 1] and us[i] > us[i + 1]:
            return ks[i], KRule.LOCAL_MAX
    return ks[_elbow_index(ks, us)], KRule.ELBOW


def empirical_labels(X, y, fitted_T: FittedModel, beta_k) -> np.ndarray:
    """1 where the fine-tuned prediction has the smaller squared error."""
    err_T = (y - X @ fitted_T.beta_hat) ** 2
    err_k = (y - X @ np.asarray(beta_k)) ** 2
    return (err_T > err_k).astype(int)


def precision_recall(decisions, labels) -> tuple[float, float]:
    decisions = np.asarray(decisions, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    tp = int(np.sum(decisions & labels))
    predicted = int(decisions.sum())
    actual = int(labels.sum())
    precision = tp / predicted if predicted else 0.0
    recall = tp / actual if actual else 0.0
    return precision, recall


def select_rho(rho_curve) -> float:
    """Most precise rho among those with recall >= 0.5 (ties go to the larger rho);
    failing that, the rho just before the steepest recall drop."""
    rhos = [r for r, _, _ in rho_curve]
    if len(rhos) == 1:
        return rhos[0]
    ok = [(p, r) for r, p, rec in rho_curve if rec >= MIN_RECALL]
    if ok:
        best = max(p for p, _ in ok)
        return max(r for p, r in ok if p == best)
    recalls = np.array([rec for _, _, rec in rho_curve])
    drops = recalls[:-1] - recalls[1:]
    return rhos[int(np.argmax(drops))]


def calibrate_rho(
    source: Dataset,
    target: Dataset,
    fitted_S: FittedModel,
    fitted_T: FittedModel,
    op: TransferOperator,
    rho_grid=None,
    level: float = DEFAULT_LEVEL,
) -> tuple[float, list[tuple[float, float, float]]]:
    """Pick rho from precision/recall of the test on the pooled training samples.

    A sample is a positive when the fine-tuned model predicts it better than
    the target model. Emits NoPositiveLabels and returns the largest rho when
    there are no positives.
    """
    rho_grid = default_rho_grid() if rho_grid is None else [float(r) for r in rho_grid]
    if not rho_grid:
        raise ValueError("rho_grid is empty")
    if any(b <= a for a, b in zip(rho_grid, rho_grid[1:])):
        raise ValueError("rho_grid must be strictly increasing")
    X = np.vstack([source.X, target.X])
    y = np.concatenate([source.y, target.y])
    beta_k = fine_tune(fitted_S.beta_hat, fitted_T.beta_hat, op)
    labels = empirical_labels(X, y, fitted_T, beta_k)
    ratio, shrink, bias, denom, degenerate = statistic_parts(X, fitted_S, fitted_T, op)
    d1, d2 = dof(fitted_S, fitted_T)
    q = f_quantile(1.0 - level, d1, d2)
    curve = []
    for rho in rho_grid:
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = ratio * (shrink - rho**2 * bias) / denom
        reject = ~degenerate & (psi > q)
        precision, recall = precision_recall(reject, labels)
        curve.append((rho, precision, recall))
    if labels.sum() == 0:
        warnings.warn("no training sample favours the fine-tuned model", NoPositiveLabels, stacklevel=2)
        return rho_grid[-1], curve
    return select_rho(curve), curve


@dataclass
class TuningReport:
    alpha_star: float
    alpha: float
    k_hat: int
    rho_hat: float
    k_rule: KRule
    u_curve: list = field(default_factory=list)
    rho_curve: list = field(default_factory=list)
    no_positive_labels: bool = False

    def to_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "alpha": self.alpha,
            "k_hat": self.k_hat,
            "rho_hat": self.rho_hat,
            "k_rule": self.k_rule.value,
            "no_positive_labels": self.no_positive_labels,
            "u_curve": [[int(k), float(u)] for k, u in self.u_curve],
            "rho_curve": [[float(r), float(p), float(rec)] for r, p, rec in self.rho_curve],
        }


def tune(
    source: Dataset,
    target: Dataset,
    fitted_S: FittedModel,
    fitted_T: FittedModel,
    alpha_divisor: float = DEFAULT_ALPHA_DIVISOR,
    k: int | None = None,
    rho: float | None = None,
    k_grid=None,
    rho_grid=None,
    level: float = DEFAULT_LEVEL,
) -> TuningReport:
    """Full recipe: alpha from the target Gram matrix, then k, then rho.

    Explicit ``k`` or ``rho`` skip the corresponding search.
    """
    a_star = alpha_star(fitted_T.gram)
    alpha = a_star / alpha_divisor
    u_curve = []
    if k is None:
        u_curve = u_bar_curve(fitted_S, fitted_T, np.vstack([source.X, target.X]), alpha, k_grid or default_k_grid())
        k_hat, rule = select_k(u_curve)
    else:
        k_hat, rule = int(k), KRule.LOCAL_MAX
    op = make_transfer_operator(fitted_T.gram, alpha, k_hat)
    rho_curve = []
    no_pos = False
    if rho is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NoPositiveLabels)
            rho_hat, rho_curve = calibrate_rho(source, target, fitted_S, fitted_T, op, rho_grid, level)
        no_pos = any(issubclass(w.category, NoPositiveLabels) for w in caught)
    else:
        rho_hat = float(rho)
    return TuningReport(
        alpha_star=a_star,
        alpha=alpha,
        k_hat=k_hat,
        rho_hat=rho_hat,
        k_rule=rule,
        u_curve=u_curve,
        rho_curve=rho_curve,
        no_positive_labels=no_pos,
    )
