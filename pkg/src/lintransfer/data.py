"""Synthetic tasks, electricity-load features, series preprocessing, CSV I/O and metrics."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, TaskTag
from .errors import ConstantSeries, DimensionMismatch, EmptyInput, ParseError, SchemaMismatch
from .gain import TaskTruth

# ---------------------------------------------------------------------------
# polynomial task
# ---------------------------------------------------------------------------

DEFAULT_BETA_T = (-1.0, -1.8, 1.2, 1.0)


@dataclass(frozen=True)
class PolynomialTaskConfig:
    beta_T: tuple = DEFAULT_BETA_T
    coef_noise_sd: float = 0.3
    n_T: int = 60
    n_S: int = 600
    range_T: tuple = (-3.0, 1.0)
    range_S: tuple = (0.0, 3.0)
    sigma2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("range_T", "range_S"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a nondegenerate interval, got {(lo, hi)}")
        if self.coef_noise_sd < 0 or self.sigma2 <= 0:
            raise ValueError("coef_noise_sd must be >= 0 and sigma2 > 0")
        if self.n_T <= 0 or self.n_S <= 0:
            raise ValueError("sample sizes must be positive")
        object.__setattr__(self, "beta_T", tuple(float(b) for b in self.beta_T))

    def to_dict(self) -> dict:
        return asdict(self)


def polynomial_features(u) -> np.ndarray:
    """Rows ``(1, u, u^2, u^3)``."""
    u = np.asarray(u, dtype=float)
    return np.stack([np.ones_like(u), u, u**2, u**3], axis=-1)


def draw_polynomial_samples(beta, n, interval, sigma2, rng):
    u = rng.uniform(interval[0], interval[1], size=n)
    X = polynomial_features(u)
    y = X @ beta + rng.normal(0.0, math.sqrt(sigma2), size=n)
    return X, y


def gen_polynomial_task(cfg: PolynomialTaskConfig) -> tuple[Dataset, Dataset, TaskTruth]:
    """Cubic target on ``range_T`` and a perturbed cubic source on ``range_S``."""
    rng = np.random.default_rng(cfg.seed)
    beta_T = np.asarray(cfg.beta_T)
    beta_S = beta_T + cfg.coef_noise_sd * rng.standard_normal(beta_T.shape[0])
    X_T, y_T = draw_polynomial_samples(beta_T, cfg.n_T, cfg.range_T, cfg.sigma2, rng)
    X_S, y_S = draw_polynomial_samples(beta_S, cfg.n_S, cfg.range_S, cfg.sigma2, rng)
    truth = TaskTruth(beta_S=beta_S, beta_T=beta_T, sigma2_S=cfg.sigma2, sigma2_T=cfg.sigma2)
    return Dataset(X_S, y_S, TaskTag.SOURCE), Dataset(X_T, y_T, TaskTag.TARGET), truth


# ---------------------------------------------------------------------------
# electricity load records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadRecord:
    timestamp: dt.datetime
    load: float
    temperature: float


@dataclass(frozen=True)
class ElectricityFeatureSpec:
    """Feature layout for the daily load model.

    Temperature slopes are piecewise over ``(-inf, c1)``, ``[c1, c2)`` and
    ``[c2, inf)``. Weekday indices follow ``datetime.weekday`` (Monday = 0).
    """

    temp_cuts: tuple
    omega: float = 2.0 * math.pi / 365.0
    weekend_days: frozenset = frozenset({5, 6})

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.temp_cuts)
        if len(cuts) != 2 or not cuts[0] < cuts[1]:
            raise ValueError(f"temp_cuts must be two ascending values, got {self.temp_cuts}")
        object.__setattr__(self, "temp_cuts", cuts)
        object.__setattr__(self, "weekend_days", frozenset(int(d) for d in self.weekend_days))

    @classmethod
    def from_temperatures(cls, temperatures, quantiles=(1 / 3, 2 / 3), **kwargs) -> "ElectricityFeatureSpec":
        """Cuts at empirical temperature quantiles (tertiles by default)."""
        temps = np.asarray(list(temperatures), dtype=float)
        if temps.size == 0:
            raise EmptyInput("no temperatures to place the cuts")
        c1, c2 = np.quantile(temps, quantiles)
        return cls(temp_cuts=(float(c1), float(c2)), **kwargs)

    def to_dict(self) -> dict:
        return {"temp_cuts": list(self.temp_cuts), "omega": self.omega, "weekend_days": sorted(self.weekend_days)}


def day_index(timestamps, origin: dt.date) -> np.ndarray:
    """Whole days since ``origin`` plus one, so the origin day has index 1."""
    return np.array([(ts.date() - origin).days + 1 for ts in timestamps], dtype=float)


def build_electricity_design(records, spec: ElectricityFeatureSpec, origin: dt.date | None = None,
                             task_tag: TaskTag = TaskTag.TARGET) -> Dataset:
    """Six-column design ``[1, |sin(wt)|, WE, T*1(I3), T*1(I4), T*1(I5)]`` with the load as response.

    ``origin`` defaults to the date of the first record.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no load records")
    if origin is None:
        origin = records[0].timestamp.date()
    t = day_index([r.timestamp for r in records], origin)
    theta = np.array([r.temperature for r in records], dtype=float)
    weekend = np.array([r.timestamp.weekday() in spec.weekend_days for r in records], dtype=float)
    c1, c2 = spec.temp_cuts
    low = theta < c1
    high = theta >= c2
    mid = ~low & ~high
    X = np.column_stack([
        np.ones_like(t),
        np.abs(np.sin(spec.omega * t)),
        weekend,
        theta * low,
        theta * mid,
        theta * high,
    ])
    y = np.array([r.load for r in records], dtype=float)
    return Dataset(X, y, task_tag)


@dataclass(frozen=True)
class TrendParams:
    intercept: float
    slope: float
    origin: dt.date

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "slope": self.slope, "origin": self.origin.isoformat()}


@dataclass(frozen=True)
class ScaleParams:
    mean: float
    sd: float

    def to_dict(self) -> dict:
        return asdict(self)


def _with_loads(records, loads):
    return [LoadRecord(r.timestamp, float(v), r.temperature) for r, v in zip(records, loads)]


def fit_trend(records, origin: dt.date | None = None) -> TrendParams:
    """OLS line of load against day index."""
    records = list(records)
    if len(records) < 2:
        raise EmptyInput("detrending needs at least two records")
    if origin is None:
        origin = records[0].timestamp.date()
    t = day_index([r.timestamp for r in records], origin)
    y = np.array([r.load for r in records])
    if np.ptp(t) == 0:
        raise ConstantSeries("all records fall on the same day")
    X = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return TrendParams(float(coef[0]), float(coef[1]), origin)


def detrend(records, params: TrendParams | None = None):
    """Remove a linear trend in the day index from the loads.

    When ``params`` is given (e.g. fitted on a training period) it is applied
    as-is; otherwise the trend is fitted on ``records``.
    """
    records = list(records)
    if params is None:
        params = fit_trend(records)
    t = day_index([r.timestamp for r in records], params.origin)
    loads = np.array([r.load for r in records]) - (params.intercept + params.slope * t)
    return _with_loads(records, loads), params


def retrend(records, params: TrendParams):
    records = list(records)
    t = day_index([r.timestamp for r in records], params.origin)
    loads = np.array([r.load for r in records]) + (params.intercept + params.slope * t)
    return _with_loads(records, loads)


def normalize(records, params: ScaleParams | None = None):
    """Standardise loads to ``(load - mean) / sd`` (population sd)."""
    records = list(records)
    if params is None:
        if len(records) < 2:
            raise EmptyInput("normalization needs at least two records")
        loads = np.array([r.load for r in records])
        sd = float(np.std(loads))
        if sd == 0:
            raise ConstantSeries("load series is constant")
        params = ScaleParams(float(np.mean(loads)), sd)
    loads = (np.array([r.load for r in records]) - params.mean) / params.sd
    return _with_loads(records, loads), params


def denormalize(records, params: ScaleParams):
    records = list(records)
    loads = np.array([r.load for r in records]) * params.sd + params.mean
    return _with_loads(records, loads)


def select_window(records, start: dt.date, end: dt.date):
    """Records whose date lies in ``[start, end]``."""
    return [r for r in records if start <= r.timestamp.date() <= end]


@dataclass(frozen=True)
class Scenario:
    name: str
    source_window: tuple
    target_window: tuple
    test_window: tuple
    trend_window: tuple


_Y2004 = (dt.date(2004, 1, 1), dt.date(2004, 12, 31))
_Y2005 = (dt.date(2005, 1, 1), dt.date(2005, 12, 31))

SCENARIOS = {
    "gefcom-A": Scenario("gefcom-A", _Y2004, (dt.date(2004, 10, 1), dt.date(2004, 12, 31)), _Y2005, _Y2004),
    "gefcom-B": Scenario(
        "gefcom-B",
        (dt.date(2004, 4, 1), dt.date(2004, 9, 30)),
        (dt.date(2004, 9, 1), dt.date(2004, 12, 31)),
        _Y2005,
        _Y2004,
    ),
}


def simulate_load_pair(
    beta_S,
    beta_T,
    sigma_S: float = 0.3,
    sigma_T: float = 0.3,
    start: dt.date = dt.date(2004, 1, 1),
    end: dt.date = dt.date(2005, 12, 31),
    temp_cuts=(8.0, 18.0),
    seed: int = 0,
):
    """Daily 8 a.m. source and target series drawn from the six-feature load model.

    Both zones share one temperature path (seasonal sinusoid plus AR(1) noise).
    Returns ``(source_records, target_records, spec)`` where ``spec`` holds
    the cuts used for generation and the day origin is ``start``.
    """
    rng = np.random.default_rng(seed)
    n = (end - start).days + 1
    days = [dt.datetime.combine(start + dt.timedelta(days=i), dt.time(8)) for i in range(n)]
    t = np.arange(1, n + 1, dtype=float)
    noise = np.empty(n)
    noise[0] = rng.normal(0, 3.0)
    for i in range(1, n):
        noise[i] = 0.7 * noise[i - 1] + rng.normal(0, 3.0 * math.sqrt(1 - 0.49))
    # coldest around late January
    temps = 13.0 - 12.0 * np.cos(2 * math.pi * (t - 25) / 365.0) + noise
    spec = ElectricityFeatureSpec(temp_cuts=temp_cuts)
    proto = [LoadRecord(ts, 0.0, float(th)) for ts, th in zip(days, temps)]
    X = build_electricity_design(proto, spec, origin=start).X
    y_S = X @ np.asarray(beta_S, dtype=float) + rng.normal(0, sigma_S, n)
    y_T = X @ np.asarray(beta_T, dtype=float) + rng.normal(0, sigma_T, n)
    return _with_loads(proto, y_S), _with_loads(proto, y_T), spec


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise DimensionMismatch(f"shapes {y.shape} and {y_hat.shape} differ")
    if y.size == 0:
        raise EmptyInput("no samples")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def oracle_predict(y, y_hat_T, y_hat_k) -> np.ndarray:
    """Per sample, whichever of the two predictions is closer to ``y`` (target wins ties)."""
    y, y_hat_T = _pair(y, y_hat_T)
    _, y_hat_k = _pair(y, y_hat_k)
    use_k = (y - y_hat_k) ** 2 < (y - y_hat_T) ** 2
    return np.where(use_k, y_hat_k, y_hat_T)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _float_cell(text, row, column):
    if text is None or text.strip() == "":
        raise ParseError(row, column, "missing value")
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(row, column, f"non-finite value: {text!r}")
    return value


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise ParseError(i, None, f"expected {len(header)} fields, found {len(r)}")
    return header, rows


def read_matrix_csv(path, require_y: bool = True):
    """Read a ``x1,...,xD[,y]`` file. Returns ``(X, y)``; ``y`` is None when absent and not required."""
    header, rows = _read_rows(path)
    xcols = [h for h in header if h != "y"]
    expected = [f"x{j}" for j in range(1, len(xcols) + 1)]
    if xcols != expected or (header[-1] != "y" and "y" in header):
        raise SchemaMismatch(f"{path}: header must be x1,...,xD,y; got {','.join(header)}")
    has_y = "y" in header
    if require_y and not has_y:
        raise SchemaMismatch(f"{path}: missing y column")
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    values = np.array([[_float_cell(c, i, header[j]) for j, c in enumerate(r)] for i, r in enumerate(rows, start=1)])
    if has_y:
        return values[:, :-1], values[:, -1]
    return values, None


def load_dataset_csv(path, task_tag: TaskTag = TaskTag.TARGET) -> Dataset:
    X, y = read_matrix_csv(path, require_y=True)
    return Dataset(X, y, task_tag)


def format_float(v) -> str:
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def save_dataset_csv(path, data: Dataset):
    header = [f"x{j}" for j in range(1, data.d + 1)] + ["y"]
    write_csv(path, header, (list(map(float, x)) + [float(v)] for x, v in zip(data.X, data.y)))


def load_records_csv(path, load_column: str = "load", hour: int | None = 8, station: int | None = None) -> list[LoadRecord]:
    """Read a ``date,hour,<load>,temp1,...,tempM`` file into daily records.

    Extra load columns (one per zone in wide files) are allowed; ``load_column``
    picks one. Rows are filtered to ``hour`` when given. Temperature is the
    mean across station columns, or station number ``station`` (1-based).
    """
    header, rows = _read_rows(path)
    for col in ("date", "hour", load_column):
        if col not in header:
            raise SchemaMismatch(f"{path}: missing column {col!r}")
    temp_cols = [h for h in header if h.startswith("temp")]
    if not temp_cols:
        raise SchemaMismatch(f"{path}: no temperature columns (temp1, ...)")
    if station is not None:
        name = f"temp{station}"
        if name not in header:
            raise SchemaMismatch(f"{path}: no column {name!r}")
        temp_cols = [name]
    idx = {h: j for j, h in enumerate(header)}
    out = []
    for i, r in enumerate(rows, start=1):
        h_text = r[idx["hour"]].strip()
        try:
            h = int(h_text)
        except ValueError:
            raise ParseError(i, "hour", f"not an integer: {h_text!r}") from None
        if hour is not None and h != hour:
            continue
        try:
            day = dt.date.fromisoformat(r[idx["date"]].strip())
        except ValueError:
            raise ParseError(i, "date", f"not an ISO-8601 date: {r[idx['date']]!r}") from None
        load = _float_cell(r[idx[load_column]], i, load_column)
        temps = [_float_cell(r[idx[c]], i, c) for c in temp_cols]
        ts = dt.datetime.combine(day, dt.time()) + dt.timedelta(hours=h)
        if out and ts <= out[-1].timestamp:
            raise ParseError(i, "date", "timestamps must be strictly increasing")
        out.append(LoadRecord(ts, load, float(np.mean(temps))))
    if not out:
        raise EmptyInput(f"{path}: no records after filtering")
    return out


def save_records_csv(path, records, load_column: str = "load"):
    write_csv(
        path,
        ["date", "hour", load_column, "temp1"],
        ([r.timestamp.date().isoformat(), r.timestamp.hour, float(r.load), float(r.temperature)] for r in records),
    )


def load_csv(path, schema: str = "dataset", **kwargs):
    """Dispatch on ``schema``: ``"dataset"`` returns a Dataset, ``"load"`` a list of LoadRecord."""
    path = Path(path)
    if schema == "dataset":
        return load_dataset_csv(path, **kwargs)
    if schema == "load":
        return load_records_csv(path, **kwargs)
    raise ValueError(f"unknown schema {schema!r}")
