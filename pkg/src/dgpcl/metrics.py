"""Classification and probabilistic scores on a hold-out set."""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

logger = logging.getLogger(__name__)

INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def classify(f_true, mu, thr):
    f_true = np.asarray(f_true, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    if f_true.shape != mu.shape:
        raise ValueError(f"length mismatch: {f_true.size} truths, {mu.size} predictions")
    truth = thr.fails(f_true)
    pred = thr.fails(mu)
    return Confusion(
        tp=int(np.sum(truth & pred)),
        fp=int(np.sum(~truth & pred)),
        tn=int(np.sum(~truth & ~pred)),
        fn=int(np.sum(truth & ~pred)),
    )


def _ratio(num, den, name):
    # no positives (or negatives) to score: report a perfect 1.0
    if den == 0:
        logger.warning("%s undefined (zero denominator); reporting 1.0", name)
        return 1.0
    return num / den


def sensitivity(c):
    return _ratio(c.tp, c.tp + c.fn, "sensitivity")


def specificity(c):
    return _ratio(c.tn, c.tn + c.fp, "specificity")


def f1(c):
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "F1")


def rmse(y_true, mu):
    y_true = np.asarray(y_true, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.sqrt(np.mean((mu - y_true) ** 2)))


def crps(y_true, mu, sigma):
    """Mean CRPS of Gaussian predictive marginals."""
    y_true = np.asarray(y_true, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("CRPS needs strictly positive predictive sd")
    z = (y_true - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return float(np.mean(sigma * (2.0 * pdf + z * (2.0 * ndtr(z) - 1.0) - INV_SQRT_PI)))


def all_metrics(f_true, mu, sigma, thr, sigma_floor=1e-10):
    c = classify(f_true, mu, thr)
    return {
        "sensitivity": sensitivity(c),
        "specificity": specificity(c),
        "f1": f1(c),
        "rmse": rmse(f_true, mu),
        "crps": crps(f_true, mu, np.maximum(sigma, sigma_floor)),
    }
