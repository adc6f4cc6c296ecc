"""Matern-5/2 covariance and dense Cholesky helpers shared by every GP layer.

Covariances follow ``tau2 * (k(r2) + eta * [i == j])`` where ``r2`` is the
squared distance with each coordinate divided by its lengthscale ``theta_h``.
Lengthscales therefore act on *squared* distances. Inputs are expected to be
scaled to the unit cube by the caller; nothing here rescales.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from ._accel import USE_NUMBA, njit

SQRT5 = math.sqrt(5.0)
DEFAULT_NUGGET = 1e-6
JITTER_FACTOR = 100.0


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky hit a non-positive pivot."""

    def __init__(self, pivot, n=None):
        self.pivot = int(pivot)
        size = f" of a {n}x{n} matrix" if n is not None else ""
        super().__init__(f"matrix is not positive definite: pivot {self.pivot}{size} is <= 0")


@dataclass(frozen=True)
class KernelHyper:
    """Scale ``tau2``, per-dimension lengthscales ``theta`` and nugget ``eta``."""

    tau2: float
    theta: np.ndarray
    eta: float = DEFAULT_NUGGET

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if not (np.isfinite(self.tau2) and self.tau2 > 0):
            raise ValueError(f"tau2 must be positive, got {self.tau2}")
        if theta.ndim != 1 or theta.size == 0 or not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise ValueError(f"theta must be a nonempty vector of positive reals, got {theta}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def d(self):
        return self.theta.size


def scaled_sq_dist(x, x2, theta):
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if x.shape != x2.shape or x.shape != theta.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape}, {x2.shape}, theta {theta.shape}")
    if np.any(theta <= 0):
        raise ValueError("theta must be strictly positive")
    return float(np.sum((x - x2) ** 2 / theta))


def matern52(r2):
    """Matern nu=5/2 correlation as a function of the scaled squared distance."""
    r2 = np.asarray(r2, dtype=float)
    if np.any(r2 < 0):
        raise ValueError("matern52 needs a nonnegative squared distance")
    r = np.sqrt(r2)
    out = (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-SQRT5 * r)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# hot kernels: numba loops


@njit(fast=True)
def _cross_kernel_nb(X1, X2, theta, tau2):
    n, d = X1.shape
    m = X2.shape[0]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            r2 = 0.0
            for h in range(d):
                diff = X1[i, h] - X2[j, h]
                r2 += diff * diff / theta[h]
            r = math.sqrt(r2)
            K[i, j] = tau2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * math.exp(-SQRT5 * r)
    return K


@njit(fast=True)
def _sym_kernel_nb(X, theta, tau2, eta):
    n, d = X.shape
    K = np.empty((n, n))
    for i in range(n):
        K[i, i] = tau2 * (1.0 + eta)
        for j in range(i):
            r2 = 0.0
            for h in range(d):
                diff = X[i, h] - X[j, h]
                r2 += diff * diff / theta[h]
            r = math.sqrt(r2)
            v = tau2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * math.exp(-SQRT5 * r)
            K[i, j] = v
            K[j, i] = v
    return K


@njit(fast=True)
def _chol_nb(A):
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return L, j
        ljj = math.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / ljj
    return L, -1


@njit(fast=True)
def _unit_terms_nb(X, theta, eta, y):
    K = _sym_kernel_nb(X, theta, 1.0, eta)
    L, piv = _chol_nb(K)
    if piv >= 0:
        return L, 0.0, 0.0, piv
    n = X.shape[0]
    z = np.empty(n)
    logdet = 0.0
    quad = 0.0
    for i in range(n):
        s = y[i]
        for k in range(i):
            s -= L[i, k] * z[k]
        z[i] = s / L[i, i]
        quad += z[i] * z[i]
        logdet += math.log(L[i, i])
    return L, 2.0 * logdet, quad, -1


# ---------------------------------------------------------------------------
# hot kernels: numpy fallback


def _r2_np(X1, X2, theta):
    diff = X1[:, None, :] - X2[None, :, :]
    return np.einsum("ijh,ijh,h->ij", diff, diff, 1.0 / theta)


def _matern_np(r2):
    r = np.sqrt(r2)
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-SQRT5 * r)


def _cross_kernel_np(X1, X2, theta, tau2):
    return tau2 * _matern_np(_r2_np(X1, X2, theta))


def _sym_kernel_np(X, theta, tau2, eta):
    K = tau2 * _matern_np(_r2_np(X, X, theta))
    K[np.diag_indices_from(K)] = tau2 * (1.0 + eta)
    return K


def _chol_np(A):
    L, info = lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        return L, info - 1
    if info < 0:  # pragma: no cover - argument error from LAPACK
        raise ValueError(f"dpotrf illegal argument {-info}")
    return L, -1


def _unit_terms_np(X, theta, eta, y):
    K = _sym_kernel_np(X, theta, 1.0, eta)
    L, piv = _chol_np(K)
    if piv >= 0:
        return L, 0.0, 0.0, piv
    z = solve_triangular(L, y, lower=True, check_finite=False)
    return L, 2.0 * np.sum(np.log(np.diag(L))), float(z @ z), -1


if USE_NUMBA:
    cross_kernel = _cross_kernel_nb
    sym_kernel = _sym_kernel_nb
    _chol = _chol_nb
    _unit_terms = _unit_terms_nb
else:
    cross_kernel = _cross_kernel_np
    sym_kernel = _sym_kernel_np
    _chol = _chol_np
    _unit_terms = _unit_terms_np


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def kernel_matrix(X, X2=None, hyp=None, add_nugget=False):
    """Covariance between the rows of ``X`` and ``X2``.

    The nugget only ever lands on the diagonal of a self-covariance, i.e. when
    ``X2`` is omitted (or is the very same array object) and ``add_nugget`` is set.
    """
    if hyp is None:
        raise TypeError("kernel_matrix needs a KernelHyper")
    X = np.atleast_2d(_f64(X))
    same = X2 is None or X2 is X
    X2 = X if X2 is None else np.atleast_2d(_f64(X2))
    if X.shape[1] != hyp.d or X2.shape[1] != hyp.d:
        raise ValueError(f"column count mismatch: {X.shape[1]}, {X2.shape[1]} vs {hyp.d} lengthscales")
    theta = _f64(hyp.theta)
    if same:
        return sym_kernel(X, theta, float(hyp.tau2), float(hyp.eta) if add_nugget else 0.0)
    return cross_kernel(X, X2, theta, float(hyp.tau2))


def chol_factor(A):
    """Lower Cholesky factor; raises NotPositiveDefiniteError naming the failing pivot."""
    A = _f64(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    L, piv = _chol(A)
    if piv >= 0:
        raise NotPositiveDefiniteError(piv, A.shape[0])
    return L


def chol_solve(L, b):
    """Solve ``A x = b`` given the lower factor of ``A``."""
    z = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L, z, lower=True, trans="T", check_finite=False)


def chol_logdet(L):
    return float(2.0 * np.sum(np.log(np.diag(L))))


def unit_terms(X, theta, eta, y):
    """Factor ``C + eta I`` (unit scale) and return ``(L, log|C + eta I|, y' (C + eta I)^-1 y)``.

    A failed factorisation is retried once with the nugget inflated a hundredfold
    (with a warning); a second failure raises NotPositiveDefiniteError.
    """
    L, logdet, quad, piv = _unit_terms(X, theta, eta, y)
    if piv >= 0:
        warnings.warn(
            f"Cholesky failed at pivot {piv}; retrying with nugget {eta * JITTER_FACTOR:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        L, logdet, quad, piv = _unit_terms(X, theta, eta * JITTER_FACTOR, y)
        if piv >= 0:
            raise NotPositiveDefiniteError(piv, X.shape[0])
    return L, logdet, quad


def unit_chol(X, theta, eta):
    """Cholesky factor of ``C + eta I`` with the same single jitter retry as ``unit_terms``."""
    L, piv = _chol(sym_kernel(X, theta, 1.0, eta))
    if piv >= 0:
        warnings.warn(
            f"Cholesky failed at pivot {piv}; retrying with nugget {eta * JITTER_FACTOR:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        L, piv = _chol(sym_kernel(X, theta, 1.0, eta * JITTER_FACTOR))
        if piv >= 0:
            raise NotPositiveDefiniteError(piv, X.shape[0])
    return L
