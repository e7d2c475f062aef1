"""Bias-corrected and accelerated (BCa) bootstrap intervals for cohort
means.

The bias term z0 comes from the fraction of bootstrap means below the
sample mean (clamped away from 0 and 1 so its normal quantile stays
finite); the acceleration term comes from the jackknife skewness of the
leave-one-out means. Zero-variance and single-value inputs yield flagged
point intervals instead of errors so cohort sweeps always complete.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sp_stats

from .errors import EmptyInput, InvalidConfig


@dataclass
class BootstrapCI:
    mean: float
    lo: float
    hi: float
    B: int
    method: str = "BCa"
    degenerate: bool = False

    def __post_init__(self):
        if self.B < 1:
            raise InvalidConfig(f"B must be >= 1, got {self.B}")
        if not self.lo <= self.mean <= self.hi:
            raise InvalidConfig(
                f"interval [{self.lo}, {self.hi}] must contain mean {self.mean}")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "lo": self.lo, "hi": self.hi, "B": self.B,
                "method": self.method, "degenerate": self.degenerate}


def bca_quantile_levels(z0: float, a: float, alpha: float) -> tuple[float, float]:
    """Adjusted quantile levels; with z0 = 0 and a = 0 these reduce to the
    plain percentile levels (alpha/2, 1 - alpha/2)."""
    out = []
    for z_alpha in (sp_stats.norm.ppf(alpha / 2.0), sp_stats.norm.ppf(1.0 - alpha / 2.0)):
        shifted = z0 + z_alpha
        out.append(float(sp_stats.norm.cdf(z0 + shifted / (1.0 - a * shifted))))
    return out[0], out[1]


def bca_bootstrap(values, B: int = 2000, alpha: float = 0.05,
                  seed: int = 0) -> BootstrapCI:
    """BCa confidence interval for the mean of `values`.

    Deterministic per seed. Resampling happens at the element (case)
    level; B is the number of bootstrap resamples.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("bootstrap needs at least one value")
    if not 0.0 < alpha < 1.0:
        raise InvalidConfig(f"alpha must be in (0, 1), got {alpha}")
    if B < 1:
        raise InvalidConfig(f"B must be >= 1, got {B}")

    n = values.size
    mean = float(values.mean())
    if n == 1 or np.all(values == values[0]):
        return BootstrapCI(mean=mean, lo=mean, hi=mean, B=B, degenerate=True)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(B, n))
    boot_means = values[idx].mean(axis=1)

    frac_below = np.count_nonzero(boot_means < mean) / B
    frac_below = min(max(frac_below, 1.0 / (2.0 * B)), 1.0 - 1.0 / (2.0 * B))
    z0 = float(sp_stats.norm.ppf(frac_below))

    jack_means = (values.sum() - values) / (n - 1)
    centered = jack_means.mean() - jack_means
    denom = np.sum(centered ** 2) ** 1.5
    a = float(np.sum(centered ** 3) / (6.0 * denom)) if denom > 0 else 0.0

    q_lo, q_hi = bca_quantile_levels(z0, a, alpha)
    lo = float(np.quantile(boot_means, q_lo))
    hi = float(np.quantile(boot_means, q_hi))
    # extreme bias/acceleration can push a finite-B quantile past the mean
    lo, hi = min(lo, mean), max(hi, mean)
    return BootstrapCI(mean=mean, lo=lo, hi=hi, B=B)
