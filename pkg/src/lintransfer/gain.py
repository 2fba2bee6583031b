"""Exact transfer gain of the fine-tuned estimator over the target-only one.

For a new input ``x`` the difference of quadratic prediction risks is the
quadratic form ``x^T H_k x`` with

    H_k = s_T^2 (S_T^-1 - a^2 O_k S_T O_k) - s_S^2 A^k S_S^-1 A^k - A^k B A^k

where ``O_k = S_T^-1 (I - A^k) / a`` and ``B`` is the outer product of the
coefficient gap. Positive values mean the transfer helps at ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FittedModel
from .errors import DimensionMismatch, NonSPDGram, ZeroVector
from .finetune import TransferOperator


@dataclass(frozen=True)
class TaskTruth:
    """True coefficients and noise variances of both tasks."""

    beta_S: np.ndarray
    beta_T: np.ndarray
    sigma2_S: float
    sigma2_T: float

    def __post_init__(self):
        beta_S = np.asarray(self.beta_S, dtype=float)
        beta_T = np.asarray(self.beta_T, dtype=float)
        if beta_S.shape != beta_T.shape or beta_S.ndim != 1:
            raise DimensionMismatch(f"beta shapes {beta_S.shape} and {beta_T.shape} differ")
        if not (self.sigma2_S > 0 and self.sigma2_T > 0):
            raise ValueError("noise variances must be strictly positive")
        object.__setattr__(self, "beta_S", beta_S)
        object.__setattr__(self, "beta_T", beta_T)

    @property
    def gap(self) -> np.ndarray:
        return self.beta_T - self.beta_S

    @property
    def B(self) -> np.ndarray:
        return np.outer(self.gap, self.gap)

    def to_dict(self) -> dict:
        return {
            "beta_S": self.beta_S.tolist(),
            "beta_T": self.beta_T.tolist(),
            "sigma2_S": float(self.sigma2_S),
            "sigma2_T": float(self.sigma2_T),
        }


def plug_in_truth(source: FittedModel, target: FittedModel) -> TaskTruth:
    """Replace every unknown by its estimate. Diagnostic use only: the plug-in gain is unreliable."""
    return TaskTruth(source.beta_hat, target.beta_hat, source.sigma2_hat, target.sigma2_hat)


@dataclass(frozen=True)
class GainReport:
    H_k: np.ndarray
    lambda_min: float
    lambda_max: float
    k: int
    alpha: float


def _sym(M):
    return 0.5 * (M + M.T)


def _check_square(M, d, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (d, d):
        raise DimensionMismatch(f"{name} has shape {M.shape}, expected ({d}, {d})")
    return M


def _check_spd(M, name):
    try:
        np.linalg.cholesky(_sym(M))
    except np.linalg.LinAlgError as exc:
        raise NonSPDGram(f"{name} is not positive definite") from exc


def omega_matrix(op: TransferOperator, gram_T_inv) -> np.ndarray:
    """``Omega_k = Sigma_T^-1 (I - A^k) / alpha``."""
    gram_T_inv = _check_square(gram_T_inv, op.d, "gram_T_inv")
    return _sym(gram_T_inv @ (np.eye(op.d) - op.A_pow_k)) / op.alpha


def _target_shrink(op, gram_T_inv):
    # alpha^2 Omega_k Sigma_T Omega_k, written without Sigma_T
    C = np.eye(op.d) - op.A_pow_k
    return _sym(C @ gram_T_inv @ C)


def _shrink_gap(op, gram_T_inv):
    # S_T^-1 - (I - A^k) S_T^-1 (I - A^k), expanded so that it stays accurate when A^k is tiny
    Ak = op.A_pow_k
    M = Ak @ gram_T_inv
    return _sym(M + M.T - M @ Ak)


def _validate(truth, gram_S_inv, gram_T_inv, op):
    d = op.d
    if truth.beta_S.shape != (d,):
        raise DimensionMismatch(f"truth has dimension {truth.beta_S.shape[0]}, operator has {d}")
    gram_S_inv = _check_square(gram_S_inv, d, "gram_S_inv")
    gram_T_inv = _check_square(gram_T_inv, d, "gram_T_inv")
    _check_spd(gram_S_inv, "gram_S_inv")
    _check_spd(gram_T_inv, "gram_T_inv")
    return gram_S_inv, gram_T_inv


def variance_matrix(truth: TaskTruth, gram_S_inv, gram_T_inv, op: TransferOperator) -> np.ndarray:
    """Covariance ``V_k`` of the fine-tuned estimator."""
    gram_S_inv, gram_T_inv = _validate(truth, gram_S_inv, gram_T_inv, op)
    Ak = op.A_pow_k
    return _sym(truth.sigma2_S * Ak @ gram_S_inv @ Ak + truth.sigma2_T * _target_shrink(op, gram_T_inv))


def gain_matrix(truth: TaskTruth, gram_S_inv, gram_T_inv, op: TransferOperator) -> GainReport:
    gram_S_inv, gram_T_inv = _validate(truth, gram_S_inv, gram_T_inv, op)
    Ak = op.A_pow_k
    g = Ak @ truth.gap
    H = (
        truth.sigma2_T * _shrink_gap(op, gram_T_inv)
        - truth.sigma2_S * Ak @ gram_S_inv @ Ak
        - np.outer(g, g)
    )
    H = _sym(H)
    ev = np.linalg.eigvalsh(H)
    return GainReport(H_k=H, lambda_min=float(ev[0]), lambda_max=float(ev[-1]), k=op.k, alpha=op.alpha)


def _check_x(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise DimensionMismatch(f"x has dimension {x.shape[-1]}, expected {d}")
    return x


def gain_at(x, report: GainReport):
    """``x^T H_k x``; accepts one vector or a stack of row vectors."""
    x = _check_x(x, report.H_k.shape[0])
    if x.ndim == 1:
        return float(x @ report.H_k @ x)
    return np.einsum("ij,jk,ik->i", x, report.H_k, x)


def gain_bounds(x, report: GainReport) -> tuple[float, float]:
    """Spectral sandwich ``(lambda_min ||x||^2, lambda_max ||x||^2)`` around the gain."""
    x = _check_x(x, report.H_k.shape[0])
    sq = float(x @ x)
    return report.lambda_min * sq, report.lambda_max * sq


def kl_decomposition(x, truth: TaskTruth, gram_S_inv, gram_T_inv, op: TransferOperator) -> tuple[float, float]:
    """Split the gain at ``x`` into a KL term (never positive) and the log-variance term ``U_k(x)``.

    With ``s = sigma_T^2 x^T S_T^-1 x`` and ``v = x^T V_k x``:
    ``kl_term = -2 s KL(N_k || N_T)`` and ``u_term = -s log(v / s)``.
    """
    x = _check_x(x, op.d)
    if not np.any(x):
        raise ZeroVector("the log-variance ratio is undefined at x = 0")
    gram_S_inv, gram_T_inv = _validate(truth, gram_S_inv, gram_T_inv, op)
    Ak = op.A_pow_k
    s = truth.sigma2_T * float(x @ gram_T_inv @ x)
    # v - s formed directly: for large k both are nearly equal and their difference is the signal
    excess = truth.sigma2_S * float(x @ Ak @ gram_S_inv @ Ak @ x) - truth.sigma2_T * float(x @ _shrink_gap(op, gram_T_inv) @ x)
    mean_gap = float(x @ (Ak @ truth.gap))
    delta = excess / s
    log_ratio = math.log1p(delta)
    two_kl = (delta - log_ratio) + mean_gap**2 / s
    return -s * two_kl, -s * log_ratio
