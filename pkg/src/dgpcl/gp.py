"""Stationary zero-mean GP: likelihood, prediction and lengthscale MCMC.

The scale ``tau2`` is integrated out under the reference prior ``1/tau2``, so
the chains only move the lengthscales (and the nugget when it is not fixed).
Predictions plug in ``tau2_hat = y' K^-1 y / n`` at each retained sample.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels as kern
from .kernels import DEFAULT_NUGGET, KernelHyper
from .posterior import MomentSamples

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GpData:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=float)))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} design rows but {y.size} responses")
        if X.shape[0] < 2:
            raise ValueError("a GP needs at least two observations")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite design or response values")
        if np.any(X < -1e-12) or np.any(X > 1 + 1e-12):
            raise ValueError("design must be scaled to the unit cube")
        dup = find_duplicate_rows(X)
        if dup is not None:
            raise ValueError(f"duplicated design rows {dup[0]} and {dup[1]}")
        self.X, self.y = X, y

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def find_duplicate_rows(X, tol=1e-12):
    """First pair of rows closer than ``tol`` in max-norm, or None."""
    for i in range(1, X.shape[0]):
        gap = np.max(np.abs(X[:i] - X[i]), axis=1)
        j = np.flatnonzero(gap <= tol)
        if j.size:
            return int(j[0]), i
    return None


@dataclass
class GpPosterior:
    mu: np.ndarray
    sigma2: np.ndarray
    cov: np.ndarray = None


def log_marginal_likelihood(X, y, hyp):
    """``log N(y; 0, tau2 (C + eta I))``."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    n = y.size
    theta = np.ascontiguousarray(hyp.theta, dtype=float)
    L, logdet, quad, piv = kern._unit_terms(X, theta, hyp.eta, y)
    if piv >= 0:
        _, logdet, quad = kern.unit_terms(X, theta, hyp.eta, y)
    else:
        # one step of iterative refinement on K^-1 y; the quadratic term dominates for large |y|
        K = kern.sym_kernel(X, theta, 1.0, hyp.eta)
        alpha = kern.chol_solve(L, y)
        alpha += kern.chol_solve(L, y - K @ alpha)
        quad = float(y @ alpha)
    return -0.5 * quad / hyp.tau2 - 0.5 * (n * math.log(hyp.tau2) + logdet) - 0.5 * n * LOG_2PI


def profile_log_likelihood(X, y, theta, eta):
    """Log likelihood with tau2 integrated out under ``p(tau2) ∝ 1/tau2``, up to a constant in n.

    Returns ``(loglik, tau2_hat)``.
    """
    _, logdet, quad = kern.unit_terms(X, theta, eta, y)
    n = y.size
    return -0.5 * n * math.log(quad) - 0.5 * logdet, quad / n


def predict(X, y, hyp, Xnew, full_cov=False):
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    Xnew = np.ascontiguousarray(np.atleast_2d(Xnew), dtype=float)
    if Xnew.shape[1] != X.shape[1]:
        raise ValueError(f"prediction inputs have {Xnew.shape[1]} columns, design has {X.shape[1]}")
    L = kern.chol_factor(kern.kernel_matrix(X, hyp=hyp, add_nugget=True))
    Kx = kern.kernel_matrix(Xnew, X, hyp)
    alpha = kern.chol_solve(L, y)
    mu = Kx @ alpha
    V = solve_triangular(L, Kx.T, lower=True, check_finite=False)
    if full_cov:
        cov = kern.kernel_matrix(Xnew, hyp=hyp, add_nugget=True) - V.T @ V
        sigma2 = np.maximum(np.diag(cov).copy(), 0.0)
        return GpPosterior(mu=mu, sigma2=sigma2, cov=cov)
    sigma2 = np.maximum(hyp.tau2 * (1.0 + hyp.eta) - np.sum(V * V, axis=0), 0.0)
    return GpPosterior(mu=mu, sigma2=sigma2)


# ---------------------------------------------------------------------------
# MCMC


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) truncated to [lower, upper]."""

    shape: float = 1.5
    rate: float = 3.9 / 1.5
    lower: float = 1e-4
    upper: float = 1e3

    def logpdf(self, x):
        if not (self.lower <= x <= self.upper):
            return -math.inf
        return (self.shape - 1.0) * math.log(x) - self.rate * x


NUGGET_PRIOR = GammaPrior(shape=1.5, rate=3.9, lower=1e-8, upper=1.0)


class ScaleWalk:
    """Coordinate-wise Metropolis-Hastings with log-normal random-walk proposals.

    The proposal ``x' = x exp(step * z)`` is asymmetric, so the acceptance
    ratio carries the Jacobian factor ``x'/x``. Step sizes are tuned in windows
    of ``window`` sweeps, only while ``adapting`` is on.
    """

    def __init__(self, size, step=0.3, target=(0.30, 0.45), window=50):
        self.step = np.full(size, float(step))
        self.target = target
        self.window = window
        self.accepted = np.zeros(size, dtype=np.int64)
        self.tried = np.zeros(size, dtype=np.int64)
        self._win_acc = np.zeros(size, dtype=np.int64)
        self._win_tried = np.zeros(size, dtype=np.int64)

    def move(self, value, log_target, cur_lp, prior, rng, h=0):
        """One MH update of ``value`` (a positive scalar).

        ``log_target(x)`` returns ``(log likelihood, extra)``; ``cur_lp`` is the
        current log likelihood. Returns ``(value, lp, extra, accepted)``, with
        ``extra`` None on rejection.
        """
        prop = value * math.exp(self.step[h] * rng.standard_normal())
        self.tried[h] += 1
        self._win_tried[h] += 1
        lprior = prior.logpdf(prop)
        if lprior == -math.inf:
            return value, cur_lp, None, False
        lp, extra = log_target(prop)
        log_alpha = lp + lprior - cur_lp - prior.logpdf(value) + math.log(prop / value)
        if math.log(rng.random()) < log_alpha:
            self.accepted[h] += 1
            self._win_acc[h] += 1
            return prop, lp, extra, True
        return value, cur_lp, None, False

    def end_sweep(self, adapting):
        if not adapting or self._win_tried.max() < self.window:
            return
        rate = self._win_acc / np.maximum(self._win_tried, 1)
        lo, hi = self.target
        self.step = np.where(rate < lo, self.step * 0.8, np.where(rate > hi, self.step * 1.25, self.step))
        self.step = np.clip(self.step, 0.01, 3.0)
        self._win_acc[:] = 0
        self._win_tried[:] = 0

    @property
    def accept_rate(self):
        return self.accepted / np.maximum(self.tried, 1)

    def state(self):
        return {"step": self.step.copy(), "accepted": self.accepted.copy(), "tried": self.tried.copy()}

    def restore(self, state):
        self.step = np.array(state["step"], dtype=float)
        self.accepted = np.array(state["accepted"], dtype=np.int64)
        self.tried = np.array(state["tried"], dtype=np.int64)


def retained_iterations(n_iter, burn, thin):
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    if burn >= n_iter:
        raise ValueError(f"empty chain: burn-in {burn} >= {n_iter} iterations")
    return range(burn, n_iter, thin)


@dataclass
class HyperChain:
    theta: np.ndarray  # (T, d)
    tau2: np.ndarray  # (T,)
    eta: np.ndarray  # (T,)
    accept_rate: np.ndarray
    last_theta: np.ndarray = None
    last_eta: float = DEFAULT_NUGGET
    walk_state: dict = field(default_factory=dict)

    @property
    def samples(self):
        return [KernelHyper(t2, th, e) for th, t2, e in zip(self.theta, self.tau2, self.eta)]

    def __len__(self):
        return self.theta.shape[0]


def sample_hypers(
    X,
    y,
    init,
    n_iter,
    rng,
    burn=0,
    thin=1,
    prior=GammaPrior(),
    fix_nugget=True,
    step=0.3,
    walk_state=None,
):
    """Metropolis-within-Gibbs over each lengthscale (and the nugget unless fixed).

    ``init.tau2`` is ignored: the scale is integrated out. Adaptation of the
    proposal widths happens only during the first ``burn`` iterations.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    keep = set(retained_iterations(n_iter, burn, thin))
    d = X.shape[1]
    theta = np.array(init.theta, dtype=float)
    if theta.size != d:
        raise ValueError(f"init has {theta.size} lengthscales for {d} input columns")
    eta = float(init.eta)
    walk = ScaleWalk(d + 1, step=step)
    if walk_state:
        walk.restore(walk_state)
    cur_lp, cur_tau2 = profile_log_likelihood(X, y, theta, eta)

    out_theta, out_tau2, out_eta = [], [], []
    for it in range(n_iter):
        for h in range(d):

            def target(v, h=h):
                trial = theta.copy()
                trial[h] = v
                return profile_log_likelihood(X, y, trial, eta)

            theta[h], cur_lp, extra, ok = walk.move(theta[h], target, cur_lp, prior, rng, h)
            if ok:
                cur_tau2 = extra
        if not fix_nugget:
            eta, cur_lp, extra, ok = walk.move(
                eta, lambda v: profile_log_likelihood(X, y, theta, v), cur_lp, NUGGET_PRIOR, rng, d
            )
            if ok:
                cur_tau2 = extra
        walk.end_sweep(adapting=it < burn)
        if it in keep:
            out_theta.append(theta.copy())
            out_tau2.append(cur_tau2)
            out_eta.append(eta)
    rate = walk.accept_rate if not fix_nugget else walk.accept_rate[:d]
    return HyperChain(
        theta=np.array(out_theta),
        tau2=np.array(out_tau2),
        eta=np.array(out_eta),
        accept_rate=rate,
        last_theta=theta.copy(),
        last_eta=eta,
        walk_state=walk.state(),
    )


def _theta_init(d):
    return np.full(d, 0.1)


class GpMcmc:
    """One-layer GP surrogate with MCMC-sampled separable lengthscales."""

    kind = "gp-mcmc"

    def __init__(self, eta=DEFAULT_NUGGET, prior=GammaPrior(), fix_nugget=True, step=0.3):
        self.eta = eta
        self.prior = prior
        self.fix_nugget = fix_nugget
        self.step = step
        self.data = None
        self.chain = None

    def fit(self, X, y, rng, n_iter=10_000, burn=8_000, thin=4):
        self.data = GpData(X, y)
        init = KernelHyper(1.0, _theta_init(self.data.d), self.eta)
        self.chain = sample_hypers(
            self.data.X, self.data.y, init, n_iter, rng, burn=burn, thin=thin,
            prior=self.prior, fix_nugget=self.fix_nugget, step=self.step,
        )
        return self

    def update(self, X, y, rng, n_iter=1_000, thin=4):
        """Resume the chain from its last state on the augmented data."""
        if self.chain is None:
            raise RuntimeError("update() before fit()")
        self.data = GpData(X, y)
        init = KernelHyper(1.0, self.chain.last_theta, self.chain.last_eta)
        self.chain = sample_hypers(
            self.data.X, self.data.y, init, n_iter, rng, burn=0, thin=thin,
            prior=self.prior, fix_nugget=self.fix_nugget, step=self.step,
            walk_state=self.chain.walk_state,
        )
        return self

    def predict_moments(self, Xnew):
        Xnew = np.ascontiguousarray(np.atleast_2d(Xnew), dtype=float)
        X, y = self.data.X, self.data.y
        mus, vs = [], []
        cache_key, cache = None, None
        for theta, tau2, eta in zip(self.chain.theta, self.chain.tau2, self.chain.eta):
            key = (theta.tobytes(), eta)
            if key != cache_key:
                post = predict(X, y, KernelHyper(tau2, theta, eta), Xnew)
                cache_key, cache = key, post
            mus.append(cache.mu)
            vs.append(cache.sigma2)
        return MomentSamples(np.array(mus), np.array(vs))

    # checkpointing
    def state_dict(self):
        c = self.chain
        return {
            "kind": self.kind,
            "X": self.data.X, "y": self.data.y,
            "theta": c.theta, "tau2": c.tau2, "eta": c.eta,
            "accept_rate": c.accept_rate, "last_theta": c.last_theta,
            "last_eta": np.float64(c.last_eta),
            "walk_step": c.walk_state["step"], "walk_accepted": c.walk_state["accepted"],
            "walk_tried": c.walk_state["tried"],
            "cfg_eta": np.float64(self.eta), "fix_nugget": np.bool_(self.fix_nugget),
        }

    def load_state_dict(self, s):
        self.data = GpData(s["X"], s["y"])
        self.eta = float(s["cfg_eta"])
        self.fix_nugget = bool(s["fix_nugget"])
        self.chain = HyperChain(
            theta=np.array(s["theta"]), tau2=np.array(s["tau2"]), eta=np.array(s["eta"]),
            accept_rate=np.array(s["accept_rate"]), last_theta=np.array(s["last_theta"]),
            last_eta=float(s["last_eta"]),
            walk_state={"step": np.array(s["walk_step"]), "accepted": np.array(s["walk_accepted"]),
                        "tried": np.array(s["walk_tried"])},
        )
        return self
