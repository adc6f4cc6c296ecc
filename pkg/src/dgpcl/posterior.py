"""Per-sample predictive moments and their law-of-total-variance summary."""
from dataclasses import dataclass

import numpy as np


@dataclass
class MomentSamples:
    """Predictive means and variances, one row per retained MCMC sample."""

    mu_t: np.ndarray  # (T, n_p)
    var_t: np.ndarray  # (T, n_p)

    def __post_init__(self):
        self.mu_t = np.atleast_2d(np.asarray(self.mu_t, dtype=float))
        self.var_t = np.atleast_2d(np.asarray(self.var_t, dtype=float))
        if self.mu_t.shape != self.var_t.shape:
            raise ValueError(f"shape mismatch {self.mu_t.shape} vs {self.var_t.shape}")
        if self.mu_t.shape[0] < 1:
            raise ValueError("need at least one sample")
        if np.any(self.var_t < 0):
            raise ValueError("negative predictive variance")

    @property
    def n_samples(self):
        return self.mu_t.shape[0]

    @property
    def sigma_t(self):
        return np.sqrt(self.var_t)


@dataclass
class AggregatedPosterior:
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def var(self):
        return self.sigma**2


def aggregate(ms):
    """Collapse per-sample moments with the law of total variance.

    Mean of the means; variance is the mean within-sample variance plus the
    population (divide by T) variance of the sample means.
    """
    mu = ms.mu_t.mean(axis=0)
    var = ms.var_t.mean(axis=0) + ms.mu_t.var(axis=0)
    return AggregatedPosterior(mu=mu, sigma=np.sqrt(var))
