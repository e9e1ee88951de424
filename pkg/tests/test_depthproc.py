import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pseudostereo.depthproc import normalize_inverse_depth, tcg_confidence
from pseudostereo.imagecore import hflip

unit = st.floats(0.0, 1.0, allow_nan=False)
maps = st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(
    lambda shape: st.tuples(arrays(np.float64, shape, elements=unit),
                            arrays(np.float64, shape, elements=unit))
)


def test_normalize_min_max():
    np.testing.assert_array_equal(normalize_inverse_depth(np.array([[0.0, 5.0, 10.0]])),
                                  [[0.0, 0.5, 1.0]])


def test_normalize_constant_is_zero(caplog):
    with caplog.at_level(logging.WARNING):
        out = normalize_inverse_depth(np.full((3, 4), 7.5))
    np.testing.assert_array_equal(out, 0.0)
    assert "constant" in caplog.text


def test_normalize_rejects_non_finite():
    with pytest.raises(ValueError):
        normalize_inverse_depth(np.array([[0.0, np.inf]]))


def test_normalize_attains_bounds(rng):
    out = normalize_inverse_depth(rng.normal(size=(16, 16)) * 40 + 3)
    assert out.min() == 0.0 and out.max() == 1.0


def test_perfect_flip_consistency_gives_ones(rng):
    depth = rng.random((6, 9))
    np.testing.assert_array_equal(tcg_confidence(depth, hflip(depth)), 1.0)


def test_hand_evaluated_1x2():
    # D = [0, 1], H^-1(D') = [0, 0]  ->  u = [1, 0]  ->  C = [1, 0]
    conf = tcg_confidence(np.array([[0.0, 1.0]]), np.array([[0.0, 0.0]]))
    np.testing.assert_array_equal(conf, [[1.0, 0.0]])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        tcg_confidence(np.zeros((2, 3)), np.zeros((3, 2)))


@settings(max_examples=200, deadline=None)
@given(maps)
def test_confidence_range_and_extremes(pair):
    depth, depth_f = pair
    conf = tcg_confidence(depth, depth_f)
    assert np.all((conf >= 0) & (conf <= 1))
    u = 1 - np.abs(depth - hflip(depth_f))
    if u.max() > u.min():
        assert conf.min() == 0.0 and conf.max() == 1.0
    else:
        assert np.all(conf == 1.0)


@settings(max_examples=200, deadline=None)
@given(maps)
def test_flip_equivariance_exact(pair):
    depth, depth_f = pair
    np.testing.assert_array_equal(tcg_confidence(hflip(depth), hflip(depth_f)),
                                  hflip(tcg_confidence(depth, depth_f)))


@settings(max_examples=100, deadline=None)
@given(maps)
def test_role_swap_symmetry(pair):
    # the flipped prediction, seen from the flipped frame, gives the flipped confidence
    depth, depth_f = pair
    np.testing.assert_array_equal(tcg_confidence(depth_f, depth),
                                  hflip(tcg_confidence(depth, depth_f)))
