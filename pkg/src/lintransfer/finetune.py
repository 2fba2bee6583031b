"""Closed-form gradient-descent fine-tuning of a source estimator on target data.

Running ``k`` steps of batch gradient descent with step ``alpha`` on the target
least-squares loss, started at the source estimate, lands exactly on

    beta_k = A^k beta_S + (I - A^k) beta_T,    A = I - alpha * Sigma_T.

Since ``A`` shares its eigenvectors with ``Sigma_T``, every power is computed
from a single symmetric eigendecomposition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DivergentStep, NonSPDGram


@dataclass(frozen=True)
class EigenDecomposition:
    """``Sigma_T = P diag(lambdas) P^T`` with eigenvalues in descending order."""

    P: np.ndarray
    lambdas: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.P * self.lambdas) @ self.P.T


def eigendecompose(gram) -> EigenDecomposition:
    """Symmetric eigendecomposition with a reproducible ordering and sign.

    Eigenvalues are sorted descending and each eigenvector is flipped so that
    its first entry of non-negligible magnitude is positive.
    """
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {gram.shape}")
    sym = 0.5 * (gram + gram.T)
    lambdas, P = np.linalg.eigh(sym)
    order = np.argsort(lambdas)[::-1]
    lambdas = lambdas[order]
    P = P[:, order]
    for j in range(P.shape[1]):
        col = P[:, j]
        lead = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if col[lead] < 0:
            P[:, j] = -col
    if lambdas[-1] <= 0:
        raise NonSPDGram(f"smallest eigenvalue {lambdas[-1]:.3e} is not positive")
    P.setflags(write=False)
    lambdas.setflags(write=False)
    return EigenDecomposition(P=P, lambdas=lambdas)


@dataclass(frozen=True)
class TransferOperator:
    """Fine-tuning operator for step ``alpha`` and ``k`` iterations.

    ``divergent`` is set when ``alpha >= 2 / lambda_max``; the closed form
    is still evaluated in that case.
    """

    alpha: float
    k: int
    A: np.ndarray
    A_pow_k: np.ndarray
    eig: EigenDecomposition
    divergent: bool = False

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def source_weights(self) -> np.ndarray:
        """Per-eigendirection source weights ``(1 - alpha * lambda_i)^k``."""
        return (1.0 - self.alpha * self.eig.lambdas) ** self.k

    def with_k(self, k: int) -> "TransferOperator":
        return _build_operator(self.eig, self.alpha, k, warn=False)


def _build_operator(eig, alpha, k, warn=True):
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    k = int(k)
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    P, lam = eig.P, eig.lambdas
    divergent = bool(alpha * lam[0] >= 2.0)
    if divergent and warn:
        warnings.warn(
            f"alpha={alpha:.4g} >= 2/lambda_max={2 / lam[0]:.4g}; gradient descent diverges",
            DivergentStep,
            stacklevel=3,
        )
    d = P.shape[0]
    A = np.eye(d) - alpha * eig.reconstruct()
    A = 0.5 * (A + A.T)
    if k == 0:
        A_pow_k = np.eye(d)
    else:
        A_pow_k = (P * (1.0 - alpha * lam) ** k) @ P.T
        A_pow_k = 0.5 * (A_pow_k + A_pow_k.T)
    A.setflags(write=False)
    A_pow_k.setflags(write=False)
    return TransferOperator(alpha=float(alpha), k=k, A=A, A_pow_k=A_pow_k, eig=eig, divergent=divergent)


def make_transfer_operator(gram_T, alpha: float, k: int) -> TransferOperator:
    """Build ``A = I - alpha * gram_T`` and ``A^k`` from the eigendecomposition of ``gram_T``."""
    return _build_operator(eigendecompose(gram_T), alpha, k)


def _check_vec(v, d, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({d},)")
    return v


def fine_tune(beta_S, beta_T, op: TransferOperator) -> np.ndarray:
    """Fine-tuned estimator ``A^k beta_S + (I - A^k) beta_T``."""
    beta_S = _check_vec(beta_S, op.d, "beta_S")
    beta_T = _check_vec(beta_T, op.d, "beta_T")
    if op.k == 0:
        return beta_S.copy()
    return op.A_pow_k @ beta_S + beta_T - op.A_pow_k @ beta_T


def eigen_coordinates(beta, eig: EigenDecomposition) -> np.ndarray:
    """Coordinates ``P^T beta`` of ``beta`` in the eigenbasis of ``Sigma_T``."""
    beta = _check_vec(beta, eig.P.shape[0], "beta")
    return eig.P.T @ beta


def combine_with_weight(W, beta_S, beta_T) -> np.ndarray:
    """Generic combination ``W beta_S + (I - W) beta_T``.

    A scalar ``W`` is read as ``W * I``, the constant convex combination.
    """
    beta_S = np.asarray(beta_S, dtype=float)
    d = beta_S.shape[0]
    beta_T = _check_vec(beta_T, d, "beta_T")
    W = np.asarray(W, dtype=float)
    if W.ndim == 0:
        W = W * np.eye(d)
    if W.shape != (d, d):
        raise DimensionMismatch(f"W has shape {W.shape}, expected ({d}, {d})")
    return W @ beta_S + beta_T - W @ beta_T
