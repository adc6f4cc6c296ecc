"""Sequential contour-location designs and static LHS baselines."""
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from . import acquisition as acq
from .dgp import Dgp
from .gp import GpMcmc
from .metrics import all_metrics
from .posterior import aggregate
from .testfns import get_function
from .tricands import targeted_subsample, tricands, ORIGIN_NAMES

logger = logging.getLogger(__name__)

SURROGATES = ("dgp-ess", "gp-mcmc")
ACQUISITIONS = ("pareto", "entropy", "random")
ENTROPIES = ("posthoc", "mcmc")
CHECKPOINT_FILE = "checkpoint.npz"


class ConfigError(ValueError):
    pass


@dataclass
class McmcConfig:
    initial: int = 10_000
    update: int = 1_000
    burn: int = 8_000
    thin: int = 4


@dataclass
class ExperimentConfig:
    function: str = "plateau2"
    n0: int = 5
    budget: int = 30
    surrogate: str = "dgp-ess"
    acquisition: str = "pareto"
    entropy: str = "posthoc"
    alpha: float = 0.9
    n_max: int = None
    n_test: int = None
    reps: int = 1
    seed: int = 0
    g: float = None
    direction: str = None
    d: int = None
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if isinstance(self.mcmc, dict):
            unknown = set(self.mcmc) - set(McmcConfig.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown mcmc keys: {sorted(unknown)}")
            self.mcmc = McmcConfig(**self.mcmc)
        try:
            fn = get_function(self.function)
        except KeyError as err:
            raise ConfigError(str(err.args[0])) from None
        if self.d is None:
            self.d = fn.d
        elif self.d != fn.d:
            raise ConfigError(f"{self.function} is {fn.d}-dimensional, config says d={self.d}")
        if self.n_max is None:
            self.n_max = 100 * self.d
        if self.n_test is None:
            self.n_test = min(5000, int(round(4500 * self.d / 7)))
        self.validate()

    def validate(self):
        if self.surrogate not in SURROGATES:
            raise ConfigError(f"surrogate must be one of {SURROGATES}, got {self.surrogate!r}")
        if self.acquisition not in ACQUISITIONS:
            raise ConfigError(f"acquisition must be one of {ACQUISITIONS}, got {self.acquisition!r}")
        if self.entropy not in ENTROPIES:
            raise ConfigError(f"entropy must be one of {ENTROPIES}, got {self.entropy!r}")
        if self.n0 < self.d + 1:
            raise ConfigError(f"n0={self.n0} is too small to triangulate in {self.d} dimensions")
        if self.budget < self.n0:
            raise ConfigError(f"budget {self.budget} is below the initial design size {self.n0}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_max < 1 or self.n_test < 1 or self.reps < 1:
            raise ConfigError("n_max, n_test and reps must be positive")
        m = self.mcmc
        if m.initial < 1 or m.update < 1 or m.thin < 1 or m.burn < 0:
            raise ConfigError("mcmc counts must be positive")
        if m.burn >= m.initial:
            raise ConfigError(f"mcmc burn-in {m.burn} leaves an empty chain of {m.initial}")
        self.threshold  # noqa: B018  (validates g / direction overrides)

    @property
    def threshold(self):
        base = get_function(self.function).threshold
        g = base.g if self.g is None else float(self.g)
        direction = base.direction if self.direction is None else self.direction
        try:
            return acq.Threshold(g, direction)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    @property
    def method(self):
        return f"{self.surrogate}-{self.acquisition}"

    @classmethod
    def from_dict(cls, raw):
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as err:
            raise ConfigError(str(err)) from None


@dataclass
class RunRecord:
    n: int
    sensitivity: float
    specificity: float
    f1: float
    rmse: float
    crps: float
    fit_time_s: float
    acq_time_s: float = 0.0
    acquired: list = None
    origin: str = ""
    front_size: int = 0
    candidates_digest: str = ""


def lhs(n, d, rng):
    """Latin hypercube: every column has one point in each of the n strata."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return qmc.LatinHypercube(d, rng=rng).random(n)


def make_surrogate(name):
    return Dgp() if name == "dgp-ess" else GpMcmc()


def _is_duplicate(cand, X, tol=1e-12):
    return np.array([np.any(np.max(np.abs(X - c), axis=1) <= tol) for c in cand], dtype=bool)


def choose(cfg, scores, dup, rng):
    """Index of the next acquisition among the scored candidates."""
    if np.all(dup):
        raise RuntimeError("every candidate duplicates an existing design point")
    if cfg.acquisition == "random":
        ok = np.flatnonzero(~dup)
        return int(ok[rng.integers(ok.size)])
    if cfg.acquisition == "entropy":
        h = np.where(dup, -np.inf, scores.entropy)
        return int(np.argmax(h))
    if np.any(scores.pareto_mask & ~dup):
        return acq.select_acquisition(scores, rng, exclude=dup)
    sigma = np.where(dup, -np.inf, scores.sigma)
    return int(np.argmax(sigma))


def _fit(model, cfg, X, y, rng, first):
    m = cfg.mcmc
    if first:
        model.fit(X, y, rng, n_iter=m.initial, burn=m.burn, thin=m.thin)
    else:
        model.update(X, y, rng, n_iter=m.update, thin=m.thin)


def _evaluate(model, test_X, test_y, thr):
    agg = aggregate(model.predict_moments(test_X))
    return all_metrics(test_y, agg.mu, agg.sigma, thr)


def _rng_state(rng):
    return json.dumps(rng.bit_generator.state)


def _set_rng_state(rng, text):
    rng.bit_generator.state = json.loads(text)


def _save_checkpoint(path, cfg, rng, X, y, test_X, test_y, records, model):
    arrays = {f"model_{k}": v for k, v in model.state_dict().items()}
    arrays.update(
        X=X, y=y, test_X=test_X, test_y=test_y,
        rng=np.array(_rng_state(rng)),
        records=np.array(json.dumps([asdict(r) for r in records])),
        config=np.array(json.dumps(asdict(cfg))),
    )
    tmp = os.path.join(path, "checkpoint.tmp.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, os.path.join(path, CHECKPOINT_FILE))


def _load_checkpoint(path, cfg, rng):
    with np.load(os.path.join(path, CHECKPOINT_FILE), allow_pickle=False) as s:
        data = {k: s[k] for k in s.files}
    saved = json.loads(str(data["config"]))
    if saved != json.loads(json.dumps(asdict(cfg))):
        raise ConfigError("checkpoint was written by a different configuration")
    model = make_surrogate(cfg.surrogate)
    model.load_state_dict({k[len("model_"):]: v for k, v in data.items() if k.startswith("model_")})
    _set_rng_state(rng, str(data["rng"]))
    records = [RunRecord(**r) for r in json.loads(str(data["records"]))]
    return data["X"], data["y"], data["test_X"], data["test_y"], records, model


def run_sequential(cfg, f, rng, checkpoint_dir=None, on_record=None):
    """Fit, build tricands, score, select, evaluate; repeat until the budget is spent.

    Returns ``budget - n0 + 1`` records, the first describing the initial fit.
    If ``checkpoint_dir`` holds a checkpoint from the same configuration the run
    resumes from it; a fresh snapshot is written after every iteration. On
    failure the exception carries the partial record list as ``.records``.
    """
    thr = cfg.threshold
    if checkpoint_dir and os.path.exists(os.path.join(checkpoint_dir, CHECKPOINT_FILE)):
        X, y, test_X, test_y, records, model = _load_checkpoint(checkpoint_dir, cfg, rng)
        if records and records[-1].acquired is None:
            return records
        x_next = np.array(records[-1].acquired)
        X = np.vstack([X, x_next])
        y = np.r_[y, f(x_next[None, :])]
        first = False
    else:
        test_X = lhs(cfg.n_test, cfg.d, rng)
        test_y = f(test_X)
        X = lhs(cfg.n0, cfg.d, rng)
        y = f(X)
        records, model, first = [], make_surrogate(cfg.surrogate), True
        if checkpoint_dir:
            os.makedirs(checkpoint_dir, exist_ok=True)

    try:
        while True:
            t0 = time.perf_counter()
            _fit(model, cfg, X, y, rng, first)
            fit_time = time.perf_counter() - t0
            first = False
            scores = _evaluate(model, test_X, test_y, thr)
            rec = RunRecord(n=X.shape[0], fit_time_s=fit_time, **scores)
            if X.shape[0] < cfg.budget:
                t1 = time.perf_counter()
                cands = tricands(X, alpha=cfg.alpha)
                cands = targeted_subsample(cands, y, thr, cfg.n_max, rng)
                ms = model.predict_moments(cands.X)
                cs = acq.score_candidates(cands.X, ms, thr, cfg.entropy)
                k = choose(cfg, cs, _is_duplicate(cands.X, X), rng)
                rec.acq_time_s = time.perf_counter() - t1
                rec.acquired = [float(v) for v in cands.X[k]]
                rec.origin = ORIGIN_NAMES[int(cands.origin[k])]
                rec.front_size = int(cs.pareto_mask.sum())
                rec.candidates_digest = cands.digest()
            records.append(rec)
            if on_record is not None:
                on_record(rec)
            if checkpoint_dir:
                _save_checkpoint(checkpoint_dir, cfg, rng, X, y, test_X, test_y, records, model)
            if rec.acquired is None:
                return records
            x_next = np.array(rec.acquired)
            X = np.vstack([X, x_next])
            y = np.r_[y, f(x_next[None, :])]
    except Exception as err:
        err.records = records
        raise


def run_static(cfg, f, rng):
    """One surrogate fit on an LHS of the full budget; same test set as a sequential run with this rng."""
    thr = cfg.threshold
    test_X = lhs(cfg.n_test, cfg.d, rng)
    test_y = f(test_X)
    X = lhs(cfg.budget, cfg.d, rng)
    y = f(X)
    model = make_surrogate(cfg.surrogate)
    t0 = time.perf_counter()
    _fit(model, cfg, X, y, rng, first=True)
    fit_time = time.perf_counter() - t0
    return RunRecord(n=X.shape[0], fit_time_s=fit_time, **_evaluate(model, test_X, test_y, thr))
