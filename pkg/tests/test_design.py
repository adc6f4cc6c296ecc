from dataclasses import asdict

import numpy as np
import pytest

from dgpcl import design
from dgpcl.acquisition import CandidateScores
from dgpcl.design import ConfigError, ExperimentConfig
from dgpcl.testfns import get_function

FAST = dict(initial=200, update=40, burn=100, thin=4)


def cfg(**kw):
    base = dict(function="plateau2", n0=5, budget=9, n_test=200, mcmc=FAST)
    base.update(kw)
    return ExperimentConfig(**base)


def strip_timing(records):
    out = []
    for r in records:
        d = asdict(r)
        d.pop("fit_time_s")
        d.pop("acq_time_s")
        out.append(d)
    return out


def test_lhs_stratified():
    X = design.lhs(4, 2, np.random.default_rng(0))
    for col in X.T:
        assert sorted(np.floor(col * 4).astype(int)) == [0, 1, 2, 3]
    one = design.lhs(1, 3, np.random.default_rng(1))
    assert one.shape == (1, 3) and np.all((one > 0) & (one < 1))
    np.testing.assert_array_equal(design.lhs(7, 2, np.random.default_rng(5)), design.lhs(7, 2, np.random.default_rng(5)))
    with pytest.raises(ValueError):
        design.lhs(0, 2, np.random.default_rng(0))


@pytest.mark.parametrize("bad", [
    dict(n0=2), dict(budget=4), dict(alpha=1.2), dict(surrogate="gp-mle"), dict(acquisition="ei"),
    dict(function="branin"), dict(d=3), dict(mcmc=dict(initial=100, burn=100)), dict(direction="sideways", g=0.0),
    dict(entropy="bayes"),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        cfg(**bad)


def test_config_defaults_and_unknown_keys():
    c = ExperimentConfig.from_dict({"function": "plateau5", "n0": 10, "budget": 20})
    assert c.d == 5 and c.n_max == 500 and c.n_test == 3214
    assert ExperimentConfig().n_test == 1286
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"function": "plateau2", "colour": "red"})
    with pytest.raises(ConfigError, match="unknown mcmc"):
        ExperimentConfig.from_dict({"mcmc": {"initial": 10, "warmup": 3}})


def test_budget_equal_n0_gives_one_record():
    recs = design.run_sequential(cfg(budget=5), get_function("plateau2"), np.random.default_rng(0))
    assert len(recs) == 1 and recs[0].acquired is None and recs[0].n == 5


@pytest.mark.parametrize("surrogate", ["gp-mcmc", "dgp-ess"])
@pytest.mark.parametrize("acquisition", ["pareto", "entropy", "random"])
def test_sequential_run_invariants(surrogate, acquisition):
    c = cfg(surrogate=surrogate, acquisition=acquisition)
    recs = design.run_sequential(c, get_function("plateau2"), np.random.default_rng(3))
    assert len(recs) == c.budget - c.n0 + 1
    assert [r.n for r in recs] == list(range(5, 10))
    acquired = np.array([r.acquired for r in recs[:-1]])
    assert np.all((acquired >= 0) & (acquired <= 1))
    assert len({tuple(a) for a in acquired}) == len(acquired)
    for r in recs:
        assert 0 <= r.sensitivity <= 1 and r.rmse >= 0 and r.crps >= 0
    assert all(r.origin in ("internal", "fringe") for r in recs[:-1])


def test_sequential_is_deterministic():
    f = get_function("plateau2")
    a = design.run_sequential(cfg(), f, np.random.default_rng(11))
    b = design.run_sequential(cfg(), f, np.random.default_rng(11))
    assert strip_timing(a) == strip_timing(b)


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    f = get_function("plateau2")
    c = cfg(surrogate="dgp-ess", budget=8)
    full = design.run_sequential(c, f, np.random.default_rng(2))

    class Stop(Exception):
        pass

    def stop_after(k):
        seen = []

        def hook(rec):
            seen.append(rec)
            if len(seen) == k:
                raise Stop
        return hook

    with pytest.raises(Stop) as err:
        design.run_sequential(c, f, np.random.default_rng(2), checkpoint_dir=str(tmp_path), on_record=stop_after(3))
    assert len(err.value.records) == 3  # reported, though the third never reached the checkpoint
    resumed = design.run_sequential(c, f, np.random.default_rng(999), checkpoint_dir=str(tmp_path))
    assert strip_timing(resumed) == strip_timing(full)
    # a finished checkpoint just returns its records
    again = design.run_sequential(c, f, np.random.default_rng(0), checkpoint_dir=str(tmp_path))
    assert strip_timing(again) == strip_timing(full)
    with pytest.raises(ConfigError, match="different configuration"):
        design.run_sequential(cfg(surrogate="dgp-ess", budget=7), f, np.random.default_rng(0), checkpoint_dir=str(tmp_path))


def test_static_run_deterministic_and_shares_test_set():
    f = get_function("plateau2")
    c = cfg(budget=12)
    a = design.run_static(c, f, np.random.default_rng(4))
    b = design.run_static(c, f, np.random.default_rng(4))
    assert a.n == 12 and strip_timing([a]) == strip_timing([b])
    r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
    t1 = design.lhs(c.n_test, 2, r1)
    t2 = design.lhs(c.n_test, 2, r2)
    np.testing.assert_array_equal(t1, t2)


def _cs(h, s):
    return CandidateScores(np.zeros((len(h), 2)), np.array(h, float), np.array(s, float))


def test_choose_duplicate_fallbacks():
    rng = np.random.default_rng(0)
    scores = _cs([0.6, 0.1, 0.2], [0.5, 0.05, 0.3])  # front = {0}
    c = cfg()
    assert design.choose(c, scores, np.array([False, False, False]), rng) == 0
    # whole front duplicated: highest-sigma non-duplicate
    assert design.choose(c, scores, np.array([True, False, False]), rng) == 2
    assert design.choose(cfg(acquisition="entropy"), scores, np.array([True, False, False]), rng) == 2
    with pytest.raises(RuntimeError):
        design.choose(c, scores, np.ones(3, bool), rng)


def test_is_duplicate():
    X = np.array([[0.1, 0.2], [0.5, 0.5]])
    cand = np.array([[0.1, 0.2 + 1e-13], [0.1, 0.2 + 1e-9]])
    np.testing.assert_array_equal(design._is_duplicate(cand, X), [True, False])
