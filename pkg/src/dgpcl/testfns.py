"""Synthetic benchmark functions on the unit cube, with their failure thresholds."""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .acquisition import Direction, Threshold


def std_normal_cdf(z):
    return ndtr(z)


def _unscale(x, lo=-2.0, hi=2.0):
    return lo + (hi - lo) * np.asarray(x, dtype=float)


def plateau(x):
    """``2 Phi(sqrt(2) (-4 - 3 sum z)) - 1`` with ``z`` the input mapped to [-2, 2]^d.

    Accepts a single point or an (n, d) array.
    """
    z = _unscale(x)
    s = z.sum(axis=-1)
    return 2.0 * ndtr(np.sqrt(2.0) * (-4.0 - 3.0 * s)) - 1.0


def cross_in_tray(x):
    """Cross-in-tray on [-2, 2]^2, coefficient -0.001 (the common library version uses -0.0001)."""
    z = _unscale(x)
    if z.shape[-1] != 2:
        raise ValueError("cross-in-tray is two dimensional")
    z1, z2 = z[..., 0], z[..., 1]
    r = np.sqrt(z1**2 + z2**2)
    inner = np.abs(np.sin(z1) * np.sin(z2) * np.exp(np.abs(100.0 - r / np.pi)))
    return -0.001 * (inner + 1.0) ** 0.1


@dataclass(frozen=True)
class TestFunction:
    id: str
    d: int
    bounds: tuple
    threshold: Threshold
    evaluator: Callable

    __test__ = False  # not a pytest class

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"{self.id} takes {self.d} inputs, got {x.shape[-1]}")
        return self.evaluator(x)


# Cross-in-tray: with the -0.001 coefficient the values span about
# [-20.63, -0.001], so the four-peak contour sits at f = -20 (the usual
# "-f > 2" level of the -0.0001 version, times ten).
REGISTRY = {
    "plateau2": TestFunction("plateau2", 2, ((-2.0, 2.0),) * 2, Threshold(0.0, Direction.FAIL_ABOVE), plateau),
    "plateau5": TestFunction("plateau5", 5, ((-2.0, 2.0),) * 5, Threshold(0.0, Direction.FAIL_ABOVE), plateau),
    "crossintray": TestFunction(
        "crossintray", 2, ((-2.0, 2.0),) * 2, Threshold(-20.0, Direction.FAIL_BELOW), cross_in_tray
    ),
}


def get_function(fid):
    try:
        return REGISTRY[fid]
    except KeyError:
        raise KeyError(f"unknown function id {fid!r}; choose from {sorted(REGISTRY)}") from None
