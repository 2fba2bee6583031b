"""Per-observation test of negative transfer.

Null hypothesis: the fine-tuned model does not beat the target-only model at
``x`` (gain <= 0). The statistic

    psi_k(x) = (s2_T / s2_S) * [x^T (S_T^-1 - a^2 O_k S_T O_k) x - rho^2 ||A^k x||^2]
                             / (x^T A^k S_S^-1 A^k x)

is compared with the F(N_T - D, N_S - D) distribution. ``rho`` is an upper
bound on ``||beta_T - beta_S|| / sigma_T`` supplied by the user.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FittedModel
from .errors import DegenerateDirection, DimensionMismatch, DomainError, TooFewSamples, ZeroVector
from .fdist import f_quantile, f_sf
from .finetune import TransferOperator

DEFAULT_LEVEL = 0.05
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class RhoPrior:
    rho: float = 0.0

    def __post_init__(self):
        if not self.rho >= 0:
            raise DomainError(f"rho must be nonnegative, got {self.rho}")


@dataclass(frozen=True)
class TestResult:
    psi: float
    p_value: float
    reject_null: bool
    level: float
    dof: tuple[int, int]

    __test__ = False  # not a pytest class


def _rho(prior):
    return prior.rho if isinstance(prior, RhoPrior) else RhoPrior(float(prior)).rho


def dof(source: FittedModel, target: FittedModel) -> tuple[int, int]:
    """Degrees of freedom ``(N_T - D, N_S - D)`` of the pivot distribution."""
    d1, d2 = target.n - target.d, source.n - source.d
    if d1 < 1 or d2 < 1:
        raise TooFewSamples(f"the test needs N > D for both tasks, got dof ({d1}, {d2})")
    return d1, d2


@dataclass(frozen=True)
class _Parts:
    """Quadratic forms entering psi, evaluated for a batch of inputs."""

    shrink: np.ndarray  # x^T (S_T^-1 - a^2 O S_T O) x
    bias: np.ndarray  # ||A^k x||^2
    denom: np.ndarray  # x^T A^k S_S^-1 A^k x
    degenerate: np.ndarray
    ratio: float  # s2_T / s2_S


def _parts(X, source, target, op) -> _Parts:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = op.d
    if X.shape[1] != d or source.d != d or target.d != d:
        raise DimensionMismatch(f"inputs of dimension {X.shape[1]} against operator of dimension {d}")
    if source.sigma2_hat <= 0:
        raise DomainError("source noise variance estimate is zero; the statistic is unbounded")
    Ak = op.A_pow_k
    AX = X @ Ak
    # x^T S^-1 x - (x - w)^T S^-1 (x - w) with w = A^k x, expanded to avoid cancellation at large k
    GW = AX @ target.gram_inv
    shrink = 2.0 * np.einsum("ij,ij->i", GW, X) - np.einsum("ij,ij->i", GW, AX)
    bias = np.einsum("ij,ij->i", AX, AX)
    denom = np.einsum("ij,jk,ik->i", AX, source.gram_inv, AX)
    norms = np.linalg.norm(X, axis=1)
    degenerate = np.sqrt(bias) <= DEGENERATE_TOL * norms
    return _Parts(shrink, bias, denom, degenerate, target.sigma2_hat / source.sigma2_hat)


def _psi(parts: _Parts, rho: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = parts.ratio * (parts.shrink - rho**2 * parts.bias) / parts.denom
    return np.where(parts.degenerate, np.nan, psi)


def test_statistic(x, source: FittedModel, target: FittedModel, op: TransferOperator, prior) -> float:
    """Statistic ``psi_k(x)``. Raises DegenerateDirection when ``A^k x`` vanishes."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("x must be a single vector")
    if not np.any(x):
        raise ZeroVector("the test is undefined at x = 0")
    parts = _parts(x, source, target, op)
    if parts.degenerate[0]:
        raise DegenerateDirection(f"||A^k x|| below {DEGENERATE_TOL:g} * ||x|| at k={op.k}")
    return float(_psi(parts, _rho(prior))[0])


test_statistic.__test__ = False


def p_value(x, source, target, op, prior, level: float = DEFAULT_LEVEL) -> TestResult:
    """Upper-tail F p-value of ``psi_k(x)``; ``reject_null`` when it falls below ``level``."""
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    psi = test_statistic(x, source, target, op, prior)
    d1, d2 = dof(source, target)
    p = f_sf(psi, d1, d2)
    return TestResult(psi=psi, p_value=p, reject_null=p < level, level=level, dof=(d1, d2))


@dataclass(frozen=True)
class BatchDecision:
    """Vectorised test outcome for many inputs; degenerate rows never reject."""

    psi: np.ndarray
    p_value: np.ndarray
    reject: np.ndarray
    degenerate: np.ndarray
    level: float
    dof: tuple[int, int]


def batch_test(X, source, target, op, prior, level: float = DEFAULT_LEVEL, with_p_values: bool = True) -> BatchDecision:
    """Run the test on every row of ``X``.

    Decisions compare ``psi`` with the ``1 - level`` quantile, computed once.
    P-values are evaluated row by row only when ``with_p_values`` is set.
    """
    d1, d2 = dof(source, target)
    parts = _parts(X, source, target, op)
    psi = _psi(parts, _rho(prior))
    q = f_quantile(1.0 - level, d1, d2)
    degenerate = parts.degenerate.copy()
    reject = ~degenerate & (psi > q)
    if with_p_values:
        pv = np.array([np.nan if math.isnan(v) else f_sf(v, d1, d2) for v in psi])
    else:
        pv = np.full(psi.shape, np.nan)
    return BatchDecision(psi=psi, p_value=pv, reject=reject, degenerate=degenerate, level=level, dof=(d1, d2))


def statistic_parts(X, source, target, op):
    """``(ratio, shrink, bias, denom, degenerate)`` so that ``psi = ratio (shrink - rho^2 bias) / denom``.

    Lets callers sweep many ``rho`` values without recomputing the quadratic forms.
    """
    p = _parts(X, source, target, op)
    return p.ratio, p.shrink, p.bias, p.denom, p.degenerate


def rho_kl_bound(x, sigma2_S: float, sigma2_T: float, prior) -> float:
    """Upper bound ``g(s2_S / s2_T) + rho^2 ||x||^2`` on twice the KL divergence
    between the source and target predictive laws at ``x``; ``g(u) = u - log u - 1``."""
    if not (sigma2_S > 0 and sigma2_T > 0):
        raise DomainError("noise variances must be positive")
    u = sigma2_S / sigma2_T
    x = np.asarray(x, dtype=float)
    return (u - math.log(u) - 1.0) + _rho(prior) ** 2 * float(x @ x)
