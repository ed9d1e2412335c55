"""Power-law fits of disorder-averaged observables versus atom number.

Observables are fitted to beta * N^alpha by ordinary least squares on
(ln N, ln mean); the 1-sigma exponent uncertainty comes from the standard OLS
slope variance and R^2 is computed on the log-log residuals.  Averaging over
realizations happens first (average-then-fit), matching the sweep protocol;
inverse-variance weighting and a realization-bootstrap uncertainty are
available as options.
"""

import math
from dataclasses import dataclass

import numpy as np

from .seeding import make_rng


@dataclass(frozen=True)
class SweepPoint:
    n: int
    mean: float
    std: float
    realizations: int

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.std < 0:
            raise ValueError("std must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    alpha: float
    beta: float
    sigma_alpha: float
    r_squared: float


def average_over_realizations(n, samples):
    """Mean, sample std (ddof=1) and count of one observable at fixed N."""
    s = np.asarray(samples, dtype=np.float64)
    if s.size == 0:
        raise ValueError("samples must be nonempty")
    std = float(np.std(s, ddof=1)) if s.size > 1 else 0.0
    return SweepPoint(int(n), float(np.mean(s)), std, int(s.size))


def fit_power_law(points, weighted=False):
    """OLS fit of mean = beta * N^alpha in log-log space.

    ``weighted`` uses inverse-variance weights (std/mean)^-2 in log space for
    points that carry a positive std.
    """
    pts = sorted(points, key=lambda p: p.n)
    if len(pts) < 3:
        raise ValueError("need at least 3 sweep points")
    if any(p.mean <= 0.0 for p in pts):
        raise ValueError("all means must be positive for a log-log fit")
    x = np.log([p.n for p in pts])
    y = np.log([p.mean for p in pts])
    if weighted:
        rel = np.array([p.std / (p.mean * math.sqrt(p.realizations)) for p in pts])
        w = np.where(rel > 0, 1.0 / np.maximum(rel, 1e-12) ** 2, 1.0)
    else:
        w = np.ones_like(x)
    wsum = w.sum()
    xm = np.sum(w * x) / wsum
    ym = np.sum(w * y) / wsum
    sxx = np.sum(w * (x - xm) ** 2)
    alpha = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = ym - alpha * xm
    resid = y - (alpha * x + intercept)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(len(pts) - 2, 1)
    sigma_alpha = math.sqrt(max(ss_res, 0.0) / dof / sxx) if len(pts) > 2 else 0.0
    return FitResult(alpha, float(math.exp(intercept)), sigma_alpha, r2)


def fit_power_law_bootstrap(samples_by_n, n_boot=200, seed=0):
    """Bootstrap the exponent by resampling realizations within each N.

    ``samples_by_n`` maps N -> array of per-realization observables.  Returns
    (FitResult of the full data, bootstrap sigma_alpha).
    """
    rng = make_rng(seed)
    base = fit_power_law([average_over_realizations(n, s) for n, s in samples_by_n.items()])
    alphas = np.empty(n_boot)
    keys = sorted(samples_by_n)
    for b in range(n_boot):
        pts = []
        for n in keys:
            s = np.asarray(samples_by_n[n])
            pick = rng.integers(0, s.size, size=s.size)
            pts.append(average_over_realizations(n, s[pick]))
        alphas[b] = fit_power_law(pts).alpha
    return base, float(np.std(alphas, ddof=1))


def fit_per_realization(samples_by_n):
    """Fit-then-average alternative: one fit per realization index, averaged.

    Requires the same realization count for every N.
    """
    keys = sorted(samples_by_n)
    counts = {len(np.asarray(samples_by_n[n])) for n in keys}
    if len(counts) != 1:
        raise ValueError("fit_per_realization needs equal realization counts")
    (count,) = counts
    alphas = []
    for r in range(count):
        pts = [SweepPoint(n, float(np.asarray(samples_by_n[n])[r]), 0.0, 1) for n in keys]
        alphas.append(fit_power_law(pts).alpha)
    alphas = np.asarray(alphas)
    return float(alphas.mean()), float(alphas.std(ddof=1) / math.sqrt(count))
