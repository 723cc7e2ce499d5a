"""Rate and slope estimates from ensemble statistics, with jackknife errors.

Errors come from leave-one-batch-out resampling over the fixed batch
partition of :func:`collapse_sim.sde.run_ensemble`.
"""

from __future__ import annotations

import math
from typing import Callable, Tuple

import numpy as np

from .sde import EnsembleStats

__all__ = ["jackknife", "fit_decay_rate", "fit_slope"]


def jackknife(stats: EnsembleStats, name: str, estimator: Callable[[np.ndarray], float]) -> Tuple[float, float]:
    """Apply ``estimator`` to the full mean series and to each leave-one-out mean."""
    groups = stats.batch_means[name]
    counts = stats.batch_counts
    total = counts @ groups
    full = estimator(total / counts.sum())
    k = len(counts)
    if k < 2:
        return full, math.nan
    loo = np.array([estimator((total - counts[i] * groups[i]) / (counts.sum() - counts[i])) for i in range(k)])
    se = math.sqrt((k - 1) / k * float(np.sum((loo - loo.mean()) ** 2)))
    return full, se


def fit_decay_rate(stats: EnsembleStats) -> Tuple[float, float]:
    """Exponential decay rate of the mean coherence ``|<rho_ab>(t)|``.

    Least squares of ``log|c(t)/c(0)| = -rate t`` through the origin.
    """
    t = stats.times - stats.times[0]

    def rate(series):
        y = np.log(np.abs(series) / abs(series[0]))
        return float(-(t @ y) / (t @ t))

    return jackknife(stats, "rho_pair", rate)


def fit_slope(stats: EnsembleStats, name: str = "energy") -> Tuple[float, float]:
    """Least-squares slope of an ensemble-mean observable against time."""
    t = stats.times

    def slope(series):
        return float(np.polyfit(t, series, 1)[0])

    return jackknife(stats, name, slope)
