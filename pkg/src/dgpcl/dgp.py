"""Two-layer deep GP with elliptical slice sampling of the latent layer.

The latent layer ``W`` (n x p, p = d) holds ``p`` independent zero-mean GPs
over the inputs, each with unit scale, its own lengthscales and the fixed
nugget. The outer GP maps ``W`` to ``y``; its scale is integrated out exactly
as in the one-layer model. Each Gibbs sweep ESS-updates every node, then
MH-updates the inner lengthscales and finally the outer ones.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import kernels as kern
from .gp import GammaPrior, GpData, ScaleWalk, profile_log_likelihood, retained_iterations
from .kernels import DEFAULT_NUGGET
from .posterior import AggregatedPosterior, MomentSamples, aggregate  # noqa: F401  (re-export)

TWO_PI = 2.0 * math.pi
CHAIN_FORMAT = "dgpcl-dgp-chain"
CHAIN_VERSION = 1

INNER_PRIOR = GammaPrior(shape=1.5, rate=3.9 / 4.0)
OUTER_PRIOR = GammaPrior(shape=1.5, rate=3.9 / 6.0)


class EssBracketError(RuntimeError):
    pass


def ellipse_point(w, nu, gamma):
    return w * math.cos(gamma) + nu * math.sin(gamma)


def ess_step(w, prior_chol, loglik, rng, cur_ll=None):
    """One elliptical slice sampling update of ``w`` under a N(0, L L') prior.

    Returns ``(w_new, loglik(w_new))``.
    """
    if cur_ll is None:
        cur_ll = loglik(w)
    nu = prior_chol @ rng.standard_normal(w.size)
    log_y = cur_ll + math.log(rng.random())
    gamma = rng.uniform(0.0, TWO_PI)
    lo, hi = gamma - TWO_PI, gamma
    while True:
        prop = ellipse_point(w, nu, gamma)
        ll = loglik(prop)
        if ll > log_y:
            return prop, ll
        if gamma < 0.0:
            lo = gamma
        else:
            hi = gamma
        if hi - lo < 1e-12:
            raise EssBracketError("elliptical slice bracket collapsed without an acceptable point")
        gamma = rng.uniform(lo, hi)


@dataclass
class DgpFit:
    """Data plus the retained MCMC states ``t = 0..T-1``."""

    data: GpData
    W: np.ndarray  # (T, n, p)
    theta_in: np.ndarray  # (T, p, d)
    theta_out: np.ndarray  # (T, p)
    tau2: np.ndarray  # (T,)
    eta: float = DEFAULT_NUGGET
    last: dict = field(default_factory=dict)  # W, theta_in, theta_out of the final iteration
    walks: dict = field(default_factory=dict)

    def __post_init__(self):
        T = self.W.shape[0]
        if T < 1:
            raise ValueError("empty chain")
        if self.W.shape[1] != self.data.n or self.theta_in.shape[0] != T or self.theta_out.shape[0] != T:
            raise ValueError("inconsistent chain shapes")

    @property
    def n_samples(self):
        return self.W.shape[0]

    @property
    def p(self):
        return self.W.shape[2]


def _node_chols(X, theta_in, eta):
    return [kern.unit_chol(X, np.ascontiguousarray(th), eta) for th in theta_in]


def _warp_rows(X, Xnew, W, theta_in, eta, chols=None):
    """Predictive-mean warping of ``Xnew`` through every latent node."""
    if chols is None:
        chols = _node_chols(X, theta_in, eta)
    out = np.empty((Xnew.shape[0], W.shape[1]))
    for i, L in enumerate(chols):
        Kx = kern.cross_kernel(Xnew, X, np.ascontiguousarray(theta_in[i]), 1.0)
        out[:, i] = Kx @ cho_solve((L, True), W[:, i], check_finite=False)
    return out


def _run_chain(X, y, state, n_iter, burn, thin, rng, eta, inner_prior, outer_prior, walks):
    W = state["W"].copy()
    theta_in = state["theta_in"].copy()
    theta_out = state["theta_out"].copy()
    n, p = W.shape
    d = X.shape[1]
    keep = set(retained_iterations(n_iter, burn, thin))
    w_in = [ScaleWalk(d) for _ in range(p)]
    w_out = ScaleWalk(p)
    if walks:
        for i, wk in enumerate(w_in):
            wk.restore(walks["inner"][i])
        w_out.restore(walks["outer"])

    chols = _node_chols(X, theta_in, eta)
    cur_ll, cur_tau2 = profile_log_likelihood(W, y, theta_out, eta)
    Wtmp = W.copy()
    out_W, out_in, out_out, out_tau2 = [], [], [], []

    for it in range(n_iter):
        for i in range(p):
            def node_ll(wi, i=i):
                Wtmp[:, i] = wi
                ll, t2 = profile_log_likelihood(Wtmp, y, theta_out, eta)
                node_ll.tau2 = t2
                return ll

            W[:, i], cur_ll = ess_step(W[:, i].copy(), chols[i], node_ll, rng, cur_ll)
            Wtmp[:, i] = W[:, i]
            cur_tau2 = node_ll.tau2

        for i in range(p):
            wi = np.ascontiguousarray(W[:, i])
            z = solve_triangular(chols[i], wi, lower=True, check_finite=False)
            cur_in = -0.5 * float(z @ z) - float(np.sum(np.log(np.diag(chols[i]))))
            for h in range(d):
                def inner_target(v, i=i, h=h, wi=wi):
                    th = theta_in[i].copy()
                    th[h] = v
                    L, logdet, quad = kern.unit_terms(X, th, eta, wi)
                    return -0.5 * quad - 0.5 * logdet, L

                theta_in[i, h], cur_in, L, ok = w_in[i].move(theta_in[i, h], inner_target, cur_in, inner_prior, rng, h)
                if ok:
                    chols[i] = L
            w_in[i].end_sweep(adapting=it < burn)

        for h in range(p):
            def outer_target(v, h=h):
                th = theta_out.copy()
                th[h] = v
                return profile_log_likelihood(W, y, th, eta)

            theta_out[h], cur_ll, t2, ok = w_out.move(theta_out[h], outer_target, cur_ll, outer_prior, rng, h)
            if ok:
                cur_tau2 = t2
        w_out.end_sweep(adapting=it < burn)

        if it in keep:
            out_W.append(W.copy())
            out_in.append(theta_in.copy())
            out_out.append(theta_out.copy())
            out_tau2.append(cur_tau2)

    last = {"W": W, "theta_in": theta_in, "theta_out": theta_out}
    walk_states = {"inner": [wk.state() for wk in w_in], "outer": w_out.state()}
    return np.array(out_W), np.array(out_in), np.array(out_out), np.array(out_tau2), last, walk_states


def fit_dgp(X, y, n_iter, burn, thin, rng, eta=DEFAULT_NUGGET, inner_prior=INNER_PRIOR, outer_prior=OUTER_PRIOR):
    data = GpData(X, y)
    retained_iterations(n_iter, burn, thin)
    d = data.d
    state = {
        "W": data.X.copy(),
        "theta_in": np.full((d, d), 0.5),
        "theta_out": np.full(d, 0.5),
    }
    Ws, tin, tout, tau2, last, walks = _run_chain(
        data.X, data.y, state, n_iter, burn, thin, rng, eta, inner_prior, outer_prior, None
    )
    return DgpFit(data, Ws, tin, tout, tau2, eta, last, walks)


def update_dgp(fit, X, y, n_iter, thin, rng, inner_prior=INNER_PRIOR, outer_prior=OUTER_PRIOR):
    """Warm-start the chain on augmented data.

    Latent values at new rows start at the warped predictive mean of the
    final state; all other state (including proposal widths) carries over.
    """
    data = GpData(X, y)
    n_old = fit.data.n
    if data.n < n_old or not np.array_equal(data.X[:n_old], fit.data.X):
        raise ValueError("update expects the old design as a prefix of the new one")
    last = fit.last
    W = last["W"]
    if data.n > n_old:
        extra = _warp_rows(fit.data.X, data.X[n_old:], W, last["theta_in"], fit.eta)
        W = np.vstack([W, extra])
    state = {"W": W, "theta_in": last["theta_in"], "theta_out": last["theta_out"]}
    Ws, tin, tout, tau2, last, walks = _run_chain(
        data.X, data.y, state, n_iter, 0, thin, rng, fit.eta, inner_prior, outer_prior, fit.walks
    )
    return DgpFit(data, Ws, tin, tout, tau2, fit.eta, last, walks)


def warp(fit, t, Xnew):
    """Latent locations of ``Xnew`` under retained sample ``t`` (predictive mean only)."""
    Xnew = np.ascontiguousarray(np.atleast_2d(Xnew), dtype=float)
    return _warp_rows(fit.data.X, Xnew, fit.W[t], fit.theta_in[t], fit.eta)


def _outer_moments(Wt, y, theta_out, tau2, eta, Wnew):
    L = kern.unit_chol(Wt, theta_out, eta)
    Kx = kern.cross_kernel(Wnew, Wt, theta_out, 1.0)
    alpha = cho_solve((L, True), y, check_finite=False)
    V = solve_triangular(L, Kx.T, lower=True, check_finite=False)
    mu = Kx @ alpha
    var = tau2 * np.maximum(1.0 + eta - np.sum(V * V, axis=0), 0.0)
    return mu, var


def predict_moments(fit, Xnew):
    Xnew = np.ascontiguousarray(np.atleast_2d(Xnew), dtype=float)
    if Xnew.shape[1] != fit.data.d:
        raise ValueError(f"prediction inputs have {Xnew.shape[1]} columns, design has {fit.data.d}")
    y = fit.data.y
    T = fit.n_samples
    mu = np.empty((T, Xnew.shape[0]))
    var = np.empty_like(mu)
    for t in range(T):
        Wt = np.ascontiguousarray(fit.W[t])
        Wnew = warp(fit, t, Xnew)
        mu[t], var[t] = _outer_moments(Wt, y, np.ascontiguousarray(fit.theta_out[t]), fit.tau2[t], fit.eta, Wnew)
    return MomentSamples(mu, var)


class Dgp:
    """Surrogate wrapper used by the design loop."""

    kind = "dgp-ess"

    def __init__(self, eta=DEFAULT_NUGGET, inner_prior=INNER_PRIOR, outer_prior=OUTER_PRIOR):
        self.eta = eta
        self.inner_prior = inner_prior
        self.outer_prior = outer_prior
        self.fit_ = None

    def fit(self, X, y, rng, n_iter=10_000, burn=8_000, thin=4):
        self.fit_ = fit_dgp(X, y, n_iter, burn, thin, rng, self.eta, self.inner_prior, self.outer_prior)
        return self

    def update(self, X, y, rng, n_iter=1_000, thin=4):
        if self.fit_ is None:
            raise RuntimeError("update() before fit()")
        self.fit_ = update_dgp(self.fit_, X, y, n_iter, thin, rng, self.inner_prior, self.outer_prior)
        return self

    def predict_moments(self, Xnew):
        return predict_moments(self.fit_, Xnew)

    def state_dict(self):
        return fit_to_arrays(self.fit_)

    def load_state_dict(self, s):
        self.fit_ = fit_from_arrays(s)
        self.eta = self.fit_.eta
        return self


# ---------------------------------------------------------------------------
# checkpoint format: npz with a format/version header, float64 arrays stored verbatim


def fit_to_arrays(fit):
    out = {
        "format": np.array(CHAIN_FORMAT),
        "version": np.int64(CHAIN_VERSION),
        "kind": np.array(Dgp.kind),
        "X": fit.data.X, "y": fit.data.y,
        "W": fit.W, "theta_in": fit.theta_in, "theta_out": fit.theta_out, "tau2": fit.tau2,
        "eta": np.float64(fit.eta),
        "last_W": fit.last["W"], "last_theta_in": fit.last["theta_in"], "last_theta_out": fit.last["theta_out"],
    }
    for i, st in enumerate(fit.walks.get("inner", [])):
        for k, v in st.items():
            out[f"walk_inner{i}_{k}"] = v
    for k, v in fit.walks.get("outer", {}).items():
        out[f"walk_outer_{k}"] = v
    return out


def fit_from_arrays(s):
    if str(s["format"]) != CHAIN_FORMAT:
        raise ValueError(f"not a DGP chain file (format {s['format']!s})")
    if int(s["version"]) != CHAIN_VERSION:
        raise ValueError(f"unsupported chain version {int(s['version'])}")
    data = GpData(s["X"], s["y"])
    p = s["W"].shape[2]
    walks = {}
    if "walk_outer_step" in s:
        keys = ("step", "accepted", "tried")
        walks = {
            "inner": [{k: np.array(s[f"walk_inner{i}_{k}"]) for k in keys} for i in range(p)],
            "outer": {k: np.array(s[f"walk_outer_{k}"]) for k in keys},
        }
    last = {"W": np.array(s["last_W"]), "theta_in": np.array(s["last_theta_in"]),
            "theta_out": np.array(s["last_theta_out"])}
    return DgpFit(data, np.array(s["W"]), np.array(s["theta_in"]), np.array(s["theta_out"]),
                  np.array(s["tau2"]), float(s["eta"]), last, walks)


def save_fit(path, fit):
    np.savez(path, **fit_to_arrays(fit))


def load_fit(path):
    with np.load(path, allow_pickle=False) as s:
        return fit_from_arrays({k: s[k] for k in s.files})
