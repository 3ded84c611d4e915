"""Offline data preparation: growth forecast, life-expectancy split, SMS coefficients.

All inputs are plain CSV files; nothing here touches the simulator state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError, DAYS_PER_YEAR


@dataclass
class AnnualSeries:
    years: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.years.shape != self.values.shape or self.years.ndim != 1:
            raise ConfigError("years and values must be 1-D and of equal length")
        if self.years.size > 1 and np.any(np.diff(self.years) != 1):
            raise ConfigError("years must be strictly increasing without gaps")

    def __len__(self) -> int:
        return self.years.size

    @classmethod
    def from_values(cls, values, first_year: int = 0) -> "AnnualSeries":
        values = np.asarray(values, dtype=float)
        return cls(first_year + np.arange(values.size), values)

    @classmethod
    def from_csv(cls, path) -> "AnnualSeries":
        years, values = _read_pairs(path, int, float)
        order = np.argsort(years)
        return cls(np.asarray(years)[order], np.asarray(values)[order])

    def to_csv(self, path, header=("year", "value")) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for y, v in zip(self.years, self.values):
                w.writerow([int(y), repr(float(v))])


def _read_pairs(path, kx=float, ky=float):
    xs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) is None:
            raise ConfigError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                xs.append(kx(row[0]))
                ys.append(ky(row[1]))
            except (ValueError, IndexError):
                raise ConfigError(f"{path}: line {lineno}: expected two numeric columns") from None
    return xs, ys


# ---------------------------------------------------------------------------
# exponential smoothing

def smoothing_constant(window: int) -> float:
    return 2.0 / (window + 1.0)


def smooth_errors(values: np.ndarray, window: int, start: int) -> tuple[np.ndarray, float]:
    """One-step-ahead errors from index ``start`` on, and the final level.

    The level starts as the mean of the first ``window`` values and is updated
    with alpha = 2 / (window + 1) after each observation.
    """
    y = np.asarray(values, dtype=float)
    alpha = smoothing_constant(window)
    level = y[:window].mean()
    errors = []
    for i in range(window, y.size):
        if i >= start:
            errors.append(y[i] - level)
        level = alpha * y[i] + (1 - alpha) * level
    return np.asarray(errors), float(level)


def exp_smooth_forecast(series: AnnualSeries, window_range: Sequence[int]) -> tuple[float, int]:
    """Next-year forecast with the window that minimises one-step-ahead MAE.

    Every window is validated on the same years (those after the largest
    window), so MAEs are comparable. Ties go to the smallest window.
    """
    lo, hi = int(window_range[0]), int(window_range[1])
    if lo < 1 or hi < lo:
        raise ConfigError("window range must satisfy 1 <= lo <= hi")
    y = series.values
    if y.size <= hi:
        raise ConfigError(f"series has {y.size} points; need more than the largest window ({hi})")
    best_w, best_mae, best_level = None, np.inf, None
    for w in range(lo, hi + 1):
        err, level = smooth_errors(y, w, hi)
        mae = float(np.abs(err).mean())
        if mae < best_mae:
            best_w, best_mae, best_level = w, mae, level
    return best_level, best_w


def growth_rate_per_round(yearly_rate: float) -> float:
    """Per-round rate with the same compound yearly growth."""
    return (1.0 + yearly_rate) ** (1.0 / DAYS_PER_YEAR) - 1.0


# ---------------------------------------------------------------------------
# least squares helpers

def min_norm_lstsq(A, b) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares solution and residual norm |Ax - b|."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x, float(np.linalg.norm(A @ x - b))


def disaggregation_system(average: float, gender_gap: float, ses_gaps, gender_weights=(0.5, 0.5)):
    """Constraint matrix (12 x 20) and right-hand side for one year.

    Unknowns are ordered male SES 1..10 then female SES 1..10. Rows:
    population-weighted mean = average; female mean - male mean = gender_gap;
    for each SES decile s, the gender-weighted value = average + ses_gaps[s].
    """
    ses_gaps = np.asarray(ses_gaps, dtype=float)
    if ses_gaps.shape != (10,):
        raise ConfigError("need one SES gap per decile (10)")
    wm, wf = gender_weights
    A = np.zeros((12, 20))
    A[0, :10] = wm / 10
    A[0, 10:] = wf / 10
    A[1, :10] = -1 / 10
    A[1, 10:] = 1 / 10
    for s in range(10):
        A[2 + s, s] = wm
        A[2 + s, 10 + s] = wf
    b = np.concatenate([[average, gender_gap], average + ses_gaps])
    return A, b


@dataclass
class Disaggregation:
    values: np.ndarray  # (years, 2, 10): gender x SES decile
    residuals: np.ndarray  # (years,) residual norm of the constraint system

    @property
    def consistent(self) -> bool:
        return bool(np.all(self.residuals <= 1e-8))


def disaggregate_life_expectancy(avg_series, gender_gap, ses_gaps, gender_weights=(0.5, 0.5)) -> Disaggregation:
    """Split an average life-expectancy series into 2 x 10 gender/SES series.

    ``gender_gap`` is per year (or a scalar), ``ses_gaps`` is (years, 10) or
    (10,). Each year is solved independently as a minimum-norm least-squares
    problem; inconsistent constraints show up as a positive residual.
    """
    avg = np.atleast_1d(np.asarray(avg_series, dtype=float))
    n = avg.size
    gap = np.broadcast_to(np.asarray(gender_gap, dtype=float), (n,))
    ses = np.broadcast_to(np.asarray(ses_gaps, dtype=float), (n, 10))
    values = np.empty((n, 2, 10))
    res = np.empty(n)
    for k in range(n):
        A, b = disaggregation_system(avg[k], gap[k], ses[k], gender_weights)
        x, r = min_norm_lstsq(A, b)
        values[k] = x.reshape(2, 10)
        res[k] = r
    return Disaggregation(values, res)


# ---------------------------------------------------------------------------
# SMS effect coefficients

def sms_design(n) -> np.ndarray:
    """Design rows [1, log10(n) - log10(n-1)]; the first SMS (n=1) is intercept-only."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise ConfigError("SMS counts must be >= 1")
    with np.errstate(divide="ignore"):
        term = np.where(n > 1, np.log10(n) - np.log10(np.maximum(n - 1, 1)), 0.0)
    return np.column_stack([np.ones_like(n), term])


def fit_sms_coefficients(n, uptake_delta, rho=1.0) -> tuple[float, float, float]:
    """Least-squares (c1, c2) for uptake_delta / rho = c1 + c2 * log10(n / (n-1)).

    Returns (c1, c2, residual norm).
    """
    n = np.asarray(n, dtype=float)
    y = np.asarray(uptake_delta, dtype=float) / np.asarray(rho, dtype=float)
    if n.size < 2:
        raise ConfigError("need at least two data points")
    X = sms_design(n)
    if np.linalg.matrix_rank(X) < 2:
        raise ConfigError("SMS counts do not identify both coefficients (rank-deficient design)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[0]), float(coef[1]), float(np.linalg.norm(X @ coef - y))


def read_sms_effect_csv(path):
    """CSV with columns (n, uptake_delta[, rho])."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[:3]])
            except ValueError:
                raise ConfigError(f"{path}: line {lineno}: expected numeric columns") from None
    arr = np.array(rows)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ConfigError(f"{path}: need columns n,uptake_delta")
    rho = arr[:, 2] if arr.shape[1] > 2 else 1.0
    return arr[:, 0], arr[:, 1], rho


def read_ses_gaps_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with columns year, gender_gap, ses1..ses10 -> (years, gaps, (years, 10))."""
    years, gaps, ses = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 12:
                raise ConfigError(f"{path}: line {lineno}: expected year,gender_gap and 10 SES gaps")
            years.append(int(row[0]))
            gaps.append(float(row[1]))
            ses.append([float(v) for v in row[2:]])
    return np.asarray(years), np.asarray(gaps), np.asarray(ses)
