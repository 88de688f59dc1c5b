"""Tracking metrics: RMSE, ensemble spread and 95% coverage."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .stats import as_ensemble, ensemble_cov


def rmse_step(mean, truth) -> float:
    mean = np.asarray(mean, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if mean.shape != truth.shape:
        raise DomainError(f"shape mismatch {mean.shape} vs {truth.shape}")
    return float(np.linalg.norm(mean - truth) / np.sqrt(mean.size))


def spread_step(E) -> float:
    """``sqrt(trace(Cov) / n)`` with the 1/N covariance."""
    E = as_ensemble(E)
    return float(np.sqrt(np.trace(ensemble_cov(E)) / E.shape[1]))


def coverage_step(E, truth, level: float = 0.95) -> int:
    """Number of components whose truth lies in the central ``level`` interval.

    Interval bounds are empirical quantiles with linear interpolation
    between order statistics.
    """
    E = as_ensemble(E)
    if E.shape[0] < 2:
        raise DomainError("coverage needs at least 2 members")
    if not 0.0 <= level <= 1.0:
        raise DomainError(f"level must be in [0, 1], got {level}")
    truth = np.asarray(truth, dtype=float)
    lo, hi = np.quantile(E, [0.5 - level / 2, 0.5 + level / 2], axis=0)
    if level == 0.0:
        return 0
    return int(np.count_nonzero((truth >= lo) & (truth <= hi)))


def aggregate(values) -> tuple[float, float]:
    """``(average, median)``; the median of an even count is the midpoint."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DomainError("cannot aggregate an empty series")
    return float(np.mean(v)), float(np.median(v))


@dataclass
class RunMetrics:
    rmse_series: list = field(default_factory=list)
    avg_rmse: float = float("nan")
    median_rmse: float = float("nan")
    avg_spread: float = float("nan")
    coverage_prob: float = float("nan")

    @classmethod
    def from_series(cls, rmse, spread, covered, n_components: int, burn_in: int = 0):
        rmse = list(rmse)[burn_in:]
        spread = list(spread)[burn_in:]
        covered = list(covered)[burn_in:]
        avg, med = aggregate(rmse)
        return cls(
            rmse_series=[float(r) for r in rmse],
            avg_rmse=avg,
            median_rmse=med,
            avg_spread=float(np.mean(spread)),
            coverage_prob=float(np.sum(covered)) / (n_components * len(covered)),
        )

    def to_dict(self, with_series: bool = False) -> dict:
        d = {
            "avg_rmse": self.avg_rmse,
            "median_rmse": self.median_rmse,
            "avg_spread": self.avg_spread,
            "coverage_prob": self.coverage_prob,
        }
        if with_series:
            d["rmse_series"] = list(self.rmse_series)
        return d
