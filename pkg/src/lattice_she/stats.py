"""Small statistical helpers shared by the Monte Carlo and rate studies."""
from __future__ import annotations

import math

import numpy as np


def loglog_fit(x, y) -> tuple[float, float]:
    """Slope and its standard error of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = max(lx.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def bootstrap_ci(samples: np.ndarray, stat=np.mean, level: float = 0.95, resamples: int = 1000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval; deterministic given ``seed``."""
    samples = np.asarray(samples)
    if samples.size == 0:
        return math.nan, math.nan
    if np.all(samples == samples.flat[0]):
        v = float(stat(samples))
        return v, v
    rng = np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))
    idx = rng.integers(0, samples.size, size=(resamples, samples.size))
    stats = np.array([stat(samples[row]) for row in idx])
    tail = 0.5 * (1.0 - level)
    return float(np.quantile(stats, tail)), float(np.quantile(stats, 1.0 - tail))
