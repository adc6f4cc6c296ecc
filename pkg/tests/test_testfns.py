import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgpcl import testfns as tf
from dgpcl.acquisition import Direction


def to_unit(z):
    return (np.asarray(z, dtype=float) + 2.0) / 4.0


def test_plateau_examples():
    assert tf.plateau(to_unit([-2 / 3, -2 / 3])) == pytest.approx(0.0, abs=1e-15)
    assert tf.plateau(to_unit([-2.0, -2.0])) == pytest.approx(1.0, abs=1e-12)
    assert tf.plateau(to_unit([0.0, 0.0])) == pytest.approx(-0.9999999845827421, abs=1e-15)  # mpmath


def test_cross_in_tray_examples():
    for z in ([0.0, 0.0], [0.0, 1.3], [-1.7, 0.0]):
        assert tf.cross_in_tray(to_unit(z)) == pytest.approx(-0.001, abs=1e-15)
    # 30-digit evaluation of the formula
    assert tf.cross_in_tray(to_unit([2.0, 2.0])) == pytest.approx(-19.7508490873, abs=1e-9)
    with pytest.raises(ValueError):
        tf.cross_in_tray(np.array([0.5, 0.5, 0.5]))


def test_std_normal_cdf():
    assert tf.std_normal_cdf(0.0) == 0.5
    assert tf.std_normal_cdf(1.96) == pytest.approx(0.9750021049, abs=1e-10)


@given(st.integers(0, 2**31), st.sampled_from([2, 5]))
def test_plateau_monotone_and_bounded(seed, d):
    r = np.random.default_rng(seed)
    x = r.uniform(size=d)
    h = r.integers(d)
    x2 = x.copy()
    x2[h] = min(1.0, x[h] + r.uniform(0, 0.5))
    assert tf.plateau(x2) <= tf.plateau(x)
    assert -1.0 <= tf.plateau(x) <= 1.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_cross_in_tray_bounds_and_symmetry(a, b):
    f = tf.cross_in_tray(np.array([a, b]))
    assert f <= -0.001 + 1e-15
    assert tf.cross_in_tray(np.array([b, a])) == pytest.approx(f, rel=1e-12)
    assert tf.cross_in_tray(np.array([1 - a, b])) == pytest.approx(f, rel=1e-12)


def test_registry():
    assert tf.get_function("plateau5").d == 5
    cit = tf.get_function("crossintray")
    assert cit.threshold.direction is Direction.FAIL_BELOW
    x = np.random.default_rng(0).uniform(size=(20000, 2))
    frac = cit.threshold.fails(cit(x)).mean()
    assert 0.2 < frac < 0.6  # a nontrivial contour
    with pytest.raises(KeyError):
        tf.get_function("branin")
    with pytest.raises(ValueError):
        tf.get_function("plateau2")(np.zeros(3))
