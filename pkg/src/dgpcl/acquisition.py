"""Failure probability, entropy and Pareto-front acquisition over candidates."""
import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import entr, ndtr

from ._accel import USE_NUMBA, njit

SIGMA_FLOOR = 1e-10


class Direction(str, enum.Enum):
    FAIL_ABOVE = "fail_above"
    FAIL_BELOW = "fail_below"


@dataclass(frozen=True)
class Threshold:
    g: float
    direction: Direction = Direction.FAIL_ABOVE

    def __post_init__(self):
        if not np.isfinite(self.g):
            raise ValueError(f"limit state must be finite, got {self.g}")
        object.__setattr__(self, "direction", Direction(self.direction))

    def fails(self, f):
        f = np.asarray(f)
        return f > self.g if self.direction is Direction.FAIL_ABOVE else f < self.g


def failure_prob(mu, sigma, thr):
    """P(failure) under N(mu, sigma^2); sigma is floored at 1e-10."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise ValueError("non-finite predictive moments")
    z = (thr.g - mu) / np.maximum(sigma, SIGMA_FLOOR)
    p = 1.0 - ndtr(z) if thr.direction is Direction.FAIL_ABOVE else ndtr(z)
    return p[()] if p.ndim == 0 else p


def entropy(p):
    """Binary entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError("probabilities must lie in [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    h = entr(p) + entr(1.0 - p)
    return h[()] if h.ndim == 0 else h


def posthoc_entropy(agg, thr):
    return entropy(failure_prob(agg.mu, agg.sigma, thr))


def mcmc_entropy(ms, thr):
    """Entropy averaged over the per-sample failure probabilities."""
    return entropy(failure_prob(ms.mu_t, ms.sigma_t, thr)).mean(axis=0)


# ---------------------------------------------------------------------------
# Pareto front, maximising both coordinates: j dominates i iff it is at least
# as good in both and strictly better in one. Exact duplicates never dominate
# each other, so they share front membership. After sorting by a (descending),
# i survives iff b_i tops its group of equal a and beats every larger-a point.


@njit
def _front_scan_nb(a, b, order):
    n = a.size
    mask = np.zeros(n, dtype=np.bool_)
    best = -np.inf  # max b over points with strictly larger a
    k = 0
    while k < n:
        j = k
        group_max = -np.inf
        while j < n and a[order[j]] == a[order[k]]:
            if b[order[j]] > group_max:
                group_max = b[order[j]]
            j += 1
        if group_max > best:
            for m in range(k, j):
                if b[order[m]] == group_max:
                    mask[order[m]] = True
            best = group_max
        k = j
    return mask


def _front_scan_np(a, b, order):
    a_s, b_s = a[order], b[order]
    # start of each run of equal a
    starts = np.flatnonzero(np.r_[True, a_s[1:] != a_s[:-1]])
    group_max = np.maximum.reduceat(b_s, starts)
    prev_best = np.r_[-np.inf, np.maximum.accumulate(group_max)[:-1]]
    group_of = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, a_s.size]))
    keep = (b_s == group_max[group_of]) & (b_s > prev_best[group_of])
    mask = np.zeros(a.size, dtype=bool)
    mask[order[keep]] = True
    return mask


_front_scan = _front_scan_nb if USE_NUMBA else _front_scan_np


def pareto_mask(a, b):
    """Boolean mask of the non-dominated set of the pairs ``(a_i, b_i)``."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("need two equal-length nonempty score vectors")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("scores must be finite")
    order = np.argsort(-a, kind="stable")
    return _front_scan(a, b, order)


def pareto_front(scores):
    """Indices of the non-dominated pairs, for an (N, 2) array of (entropy, sigma)."""
    scores = np.asarray(scores, dtype=float).reshape(-1, 2)
    return np.flatnonzero(pareto_mask(scores[:, 0], scores[:, 1]))


@dataclass
class CandidateScores:
    X_cand: np.ndarray
    entropy: np.ndarray
    sigma: np.ndarray
    pareto_mask: np.ndarray = None

    def __post_init__(self):
        if self.pareto_mask is None:
            self.pareto_mask = pareto_mask(self.entropy, self.sigma)


def score_candidates(X_cand, ms, thr, method="posthoc"):
    """Entropy and aggregated predictive sd for each candidate."""
    from .posterior import aggregate

    agg = aggregate(ms)
    if method == "posthoc":
        h = posthoc_entropy(agg, thr)
    elif method == "mcmc":
        h = mcmc_entropy(ms, thr)
    else:
        raise ValueError(f"unknown entropy method {method!r}")
    return CandidateScores(np.asarray(X_cand), h, agg.sigma)


def select_acquisition(scores, rng, exclude=None):
    """Uniform draw from the Pareto set; ``exclude`` masks candidates that may not be picked."""
    mask = scores.pareto_mask.copy()
    if exclude is not None:
        mask &= ~exclude
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty Pareto front")
    return int(idx[rng.integers(idx.size)])
