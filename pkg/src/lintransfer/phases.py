"""Monte-Carlo map of the average transfer gain over source/target sample sizes.

Each replication draws Gaussian designs for both tasks and a Gaussian input
``x``, builds ``H_k`` from the sampled Gram matrices and the configured truth,
and records ``x^T H_k x``. Every (N_S, N_T, k) cell and every replication
inside it gets its own seed, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .core import spd_inverse
from .errors import NonSPDGram
from .finetune import make_transfer_operator
from .gain import TaskTruth, gain_at, gain_matrix

MAX_CONSECUTIVE_FAILURES = 10


def draw_beta_pair(d: int, distance: float, rng: np.random.Generator):
    """Random ``beta_S`` and ``beta_T`` exactly ``distance`` apart in a random direction."""
    beta_S = rng.standard_normal(d)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return beta_S, beta_S + distance * direction


@dataclass(frozen=True)
class PhaseConfig:
    d: int
    beta_S: tuple
    beta_T: tuple
    sigma2_S: float = 1.0
    sigma2_T: float = 1.0
    k_list: tuple = (0, 10, 50)
    alpha_rule: float = 5.0
    grid_S: tuple = tuple(range(20, 301, 20))
    grid_T: tuple = tuple(range(20, 301, 10))
    reps: int = 20
    clip: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("beta_S", "beta_T", "k_list", "grid_S", "grid_T"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "beta_S", tuple(float(b) for b in self.beta_S))
        object.__setattr__(self, "beta_T", tuple(float(b) for b in self.beta_T))
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))
        object.__setattr__(self, "grid_S", tuple(int(n) for n in self.grid_S))
        object.__setattr__(self, "grid_T", tuple(int(n) for n in self.grid_T))
        if len(self.beta_S) != self.d or len(self.beta_T) != self.d:
            raise ValueError(f"coefficients must have length d={self.d}")
        if min(self.grid_S + self.grid_T) <= self.d:
            raise ValueError(f"every grid size must exceed d={self.d}")
        if self.reps < 1 or self.clip <= 0 or self.alpha_rule <= 0:
            raise ValueError("reps >= 1, clip > 0 and alpha_rule > 0 are required")
        if not (self.sigma2_S > 0 and self.sigma2_T > 0):
            raise ValueError("noise variances must be positive")
        if any(k < 0 for k in self.k_list):
            raise ValueError("k values must be nonnegative")

    @property
    def truth(self) -> TaskTruth:
        return TaskTruth(np.array(self.beta_S), np.array(self.beta_T), self.sigma2_S, self.sigma2_T)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseConfig":
        return cls(**doc)


def full_config(seed: int = 0, reps: int = 50) -> PhaseConfig:
    """D = 15, k in {0, 10, 50}, alpha = alpha*/5, coefficient gap 0.25, full grid."""
    rng = np.random.default_rng([seed, 0xBE7A])
    beta_S, beta_T = draw_beta_pair(15, 0.25, rng)
    return PhaseConfig(
        d=15,
        beta_S=beta_S,
        beta_T=beta_T,
        grid_S=range(30, 1001, 10),
        grid_T=range(30, 501, 10),
        reps=reps,
        seed=seed,
    )


def desk_config(seed: int = 0, reps: int = 20) -> PhaseConfig:
    """Same task as :func:`full_config` on a grid small enough for a laptop."""
    base = full_config(seed)
    return PhaseConfig(d=base.d, beta_S=base.beta_S, beta_T=base.beta_T, reps=reps, seed=seed)


def cell_seed(seed: int, n_s: int, n_t: int, k: int) -> tuple:
    """Key of one cell; hashed by ``numpy.random.SeedSequence`` together with the replication index."""
    return (int(seed) & (2**64 - 1), int(n_s), int(n_t), int(k))


def simulate_replication(n_s: int, n_t: int, config: PhaseConfig, k: int, key: tuple, b: int):
    """One draw of ``x^T H_k x`` from stream ``key + (b,)``; returns ``(value, failures)``.

    Non-SPD Gram draws are retried from the same stream; after
    ``MAX_CONSECUTIVE_FAILURES`` the value is NaN.
    """
    rng = np.random.default_rng(np.random.SeedSequence(list(key) + [int(b)]))
    truth = config.truth
    d = config.d
    failures = 0
    while failures < MAX_CONSECUTIVE_FAILURES:
        X_S = rng.standard_normal((n_s, d))
        X_T = rng.standard_normal((n_t, d))
        x = rng.standard_normal(d)
        try:
            gram_S = X_S.T @ X_S
            gram_T = X_T.T @ X_T
            op = make_transfer_operator(gram_T, _alpha(gram_T, config.alpha_rule), k)
            report = gain_matrix(truth, spd_inverse(gram_S), spd_inverse(gram_T), op)
        except NonSPDGram:
            failures += 1
            continue
        return gain_at(x, report), failures
    return math.nan, failures


def _alpha(gram_T, divisor):
    lam = np.linalg.eigvalsh(gram_T)
    if lam[0] <= 0:
        raise NonSPDGram("target Gram matrix is not positive definite")
    return 2.0 / (lam[-1] + lam[0]) / divisor


class CellResult(NamedTuple):
    mean: float
    stderr: float
    failures: int


def simulate_cell(n_s: int, n_t: int, config: PhaseConfig, k: int, key: tuple | None = None) -> CellResult:
    """Average gain over ``config.reps`` replications for one grid cell."""
    if n_s <= config.d or n_t <= config.d:
        raise ValueError(f"sample sizes must exceed d={config.d}")
    if key is None:
        key = cell_seed(config.seed, n_s, n_t, k)
    values = np.empty(config.reps)
    failures = 0
    for b in range(config.reps):
        values[b], f = simulate_replication(n_s, n_t, config, k, key, b)
        failures += f
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(config.reps)) if config.reps > 1 else math.nan
    return CellResult(mean, stderr, failures)


@dataclass
class PhaseGrid:
    """Clipped mean gains, one ``|grid_S| x |grid_T|`` matrix per k."""

    config: PhaseConfig
    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def rows(self):
        """Long-format rows ``(k, N_S, N_T, mean_gain, clipped_gain, failures)``."""
        for k in self.config.k_list:
            for i, n_s in enumerate(self.config.grid_S):
                for j, n_t in enumerate(self.config.grid_T):
                    yield k, n_s, n_t, float(self.raw[k][i, j]), float(self.values[k][i, j]), int(self.failures[k][i, j])


PHASE_COLUMNS = ("k", "N_S", "N_T", "mean_gain", "clipped_gain", "failures")


def run_phase_grid(config: PhaseConfig, progress=None) -> PhaseGrid:
    """Simulate every cell for every k. Failed cells hold NaN and never stop the run."""
    grid = PhaseGrid(config)
    shape = (len(config.grid_S), len(config.grid_T))
    for k in config.k_list:
        raw = np.full(shape, np.nan)
        se = np.full(shape, np.nan)
        fails = np.zeros(shape, dtype=int)
        for i, n_s in enumerate(config.grid_S):
            for j, n_t in enumerate(config.grid_T):
                res = simulate_cell(n_s, n_t, config, k)
                raw[i, j], se[i, j], fails[i, j] = res
            if progress is not None:
                progress(k, n_s)
        grid.raw[k] = raw
        grid.stderr[k] = se
        grid.failures[k] = fails
        grid.values[k] = np.clip(raw, -config.clip, config.clip)
    return grid
