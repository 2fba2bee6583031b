"""Datasets and ordinary least squares for one task (source or target)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NonSPDGram, RankDeficient, TooFewSamples

RANK_TOL = 1e-10


class TaskTag(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


def _frozen(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (N x D) and responses ``y`` (N,) for one task.

    No intercept is added; pass a constant column explicitly if needed.
    """

    X: np.ndarray
    y: np.ndarray
    task_tag: TaskTag = TaskTag.TARGET

    def __post_init__(self):
        X = _frozen(self.X, 2)
        y = _frozen(self.y, 1)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "task_tag", TaskTag(self.task_tag))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class FittedModel:
    """OLS fit of one task: estimate, Gram matrix and its inverse, noise variance."""

    beta_hat: np.ndarray
    gram: np.ndarray
    gram_inv: np.ndarray
    sigma2_hat: float
    n: int
    d: int
    task_tag: TaskTag = field(default=TaskTag.TARGET)

    def __post_init__(self):
        for name, ndim in (("beta_hat", 1), ("gram", 2), ("gram_inv", 2)):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim))
        object.__setattr__(self, "task_tag", TaskTag(self.task_tag))
        if self.sigma2_hat < 0:
            raise ValueError("sigma2_hat must be nonnegative")

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta_hat

    def to_dict(self) -> dict:
        return {
            "task_tag": self.task_tag.value,
            "n": int(self.n),
            "d": int(self.d),
            "beta_hat": self.beta_hat.tolist(),
            "sigma2_hat": float(self.sigma2_hat),
            "gram": self.gram.tolist(),
            "gram_inv": self.gram_inv.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedModel":
        return cls(
            beta_hat=np.asarray(doc["beta_hat"], dtype=float),
            gram=np.asarray(doc["gram"], dtype=float),
            gram_inv=np.asarray(doc["gram_inv"], dtype=float),
            sigma2_hat=float(doc["sigma2_hat"]),
            n=int(doc["n"]),
            d=int(doc["d"]),
            task_tag=doc.get("task_tag", TaskTag.TARGET),
        )


def estimate_noise_variance(data: Dataset, beta_hat) -> float:
    """Unbiased residual variance ``||y - X beta||^2 / (N - D)``."""
    dof = data.n - data.d
    if dof <= 0:
        raise TooFewSamples(f"N={data.n} must exceed D={data.d}")
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != (data.d,):
        raise DimensionMismatch(f"beta has shape {beta_hat.shape}, expected ({data.d},)")
    resid = data.y - data.X @ beta_hat
    return float(resid @ resid) / dof


def spd_inverse(gram) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix through its Cholesky factor."""
    gram = np.asarray(gram, dtype=float)
    try:
        factor = sla.cho_factor(gram, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NonSPDGram(str(exc)) from exc
    inv = sla.cho_solve(factor, np.eye(gram.shape[0]))
    return 0.5 * (inv + inv.T)


def fit_ols(data: Dataset) -> FittedModel:
    """Least-squares fit with a pivoted-QR rank check.

    Raises TooFewSamples when N < D and RankDeficient when the diagonal of
    the pivoted R factor decays below ``RANK_TOL`` relative to its first entry.
    A square design interpolates exactly; its noise variance has no degrees
    of freedom and is reported as NaN.
    """
    n, d = data.X.shape
    if n < d:
        raise TooFewSamples(f"N={n} must be at least D={d}")
    Q, R, piv = sla.qr(data.X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0 or diag[-1] <= RANK_TOL * diag[0]:
        rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag[0] > 0 else 0
        raise RankDeficient(f"design has numerical rank {rank} < D={d}")
    beta = np.empty(d)
    beta[piv] = sla.solve_triangular(R, Q.T @ data.y)
    gram = data.X.T @ data.X
    gram = 0.5 * (gram + gram.T)
    return FittedModel(
        beta_hat=beta,
        gram=gram,
        gram_inv=spd_inverse(gram),
        sigma2_hat=estimate_noise_variance(data, beta) if n > d else math.nan,
        n=n,
        d=d,
        task_tag=data.task_tag,
    )
