import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cqsa.encoding import (
    ModelUpdate,
    clip_to_bound,
    decode_sum,
    encode_update,
    global_max,
    local_max,
    make_scaling,
)
from cqsa.errors import DegenerateScaling, ProtocolViolation

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_scaling_factor():
    ctx = make_scaling(4, 2.0)
    assert ctx.S == math.pi / 8
    assert ctx.phase_bound == math.pi / 4


def test_local_and_global_max():
    assert local_max([0.5, -2.0, 1.0]) == 2.0
    assert global_max([0.1, 3.0, 2.0]) == 3.0
    with pytest.raises(ValueError):
        global_max([])


def test_bad_updates_rejected():
    with pytest.raises(ValueError):
        ModelUpdate(np.array([]))
    with pytest.raises(ValueError):
        ModelUpdate(np.array([1.0, np.nan]))


def test_bound_violation():
    ctx = make_scaling(3, 1.0)
    with pytest.raises(ProtocolViolation):
        encode_update(ModelUpdate(np.array([0.5, 1.5]), "c7"), ctx)


def test_degenerate_round():
    ctx = make_scaling(4, 0.0)
    assert ctx.degenerate
    np.testing.assert_array_equal(encode_update(np.zeros(3), ctx), np.zeros(3))
    np.testing.assert_array_equal(decode_sum(np.zeros(3), ctx), np.zeros(3))
    with pytest.raises(DegenerateScaling):
        decode_sum(0.1, ctx)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 24), arrays(np.float64, st.integers(1, 6).map(lambda d: (24, d)), elements=finite))
def test_cluster_phase_sums_stay_in_range(k, rows):
    w = rows[:k]
    w_max = float(np.max(np.abs(w)))
    ctx = make_scaling(k, w_max)
    phases = np.stack([encode_update(r, ctx) for r in w])
    assert np.all(np.abs(phases) <= math.pi / k + 1e-12)
    assert np.all(np.abs(phases.sum(axis=0)) <= math.pi + 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), arrays(np.float64, (8, 5), elements=finite))
def test_encode_decode_roundtrip(k, rows):
    w = rows[:k]
    w_max = float(np.max(np.abs(w)))
    ctx = make_scaling(k, w_max)
    theta_sum = np.sum([encode_update(r, ctx) for r in w], axis=0)
    np.testing.assert_allclose(decode_sum(theta_sum, ctx), w.sum(axis=0), rtol=1e-12, atol=1e-9 * max(w_max, 1))


def test_clip_to_bound():
    clipped, n = clip_to_bound([3.0, -0.5, -4.0], 1.0)
    np.testing.assert_array_equal(clipped, [1.0, -0.5, -1.0])
    assert n == 2
