import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from padkit import numcore as nc
from padkit.numcore import ConfigurationError, DimensionError, NumericError, Tensor, UsageError
from padkit.numcore import _kernels
from padkit.numcore.gradcheck import check_gradients

from helpers import gradient_cases
from oracles import adam_first_step, naive_conv2d, naive_dense


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float32), requires_grad=True)


# ------------------------------------------------------------------- conv2d
def test_conv_identity_kernel():
    out = nc.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    assert out.shape == (1, 1, 3, 3)
    np.testing.assert_array_equal(out.data, 1.0)


def test_conv_sum_kernel():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    out = nc.conv2d(x, Tensor(np.ones((1, 1, 2, 2))), Tensor(np.zeros(1)))
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 10.0


def test_conv_matches_loop_reference(rng):
    x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
    k = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    out = nc.conv2d(Tensor(x), Tensor(k), Tensor(b), stride=2, padding=1)
    assert out.shape == (2, 4, 4, 4)
    np.testing.assert_allclose(out.data, naive_conv2d(x, k, b, 2, 1), atol=1e-5)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        nc.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)))


def test_conv_fractional_output_size():
    with pytest.raises(ConfigurationError):
        nc.conv2d(Tensor(np.ones((1, 1, 6, 6))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), stride=2)


@pytest.mark.parametrize("size,k,s,p,expect", [(40, 4, 2, 1, 20), (20, 3, 1, 1, 20), (84, 4, 2, 1, 42), (10, 3, 1, 0, 8)])
def test_conv_output_size(size, k, s, p, expect):
    assert nc.conv_output_size(size, k, s, p) == expect


# -------------------------------------------------------------------- dense
def test_dense_identity():
    x = np.arange(6, dtype=np.float32).reshape(2, 3)
    out = nc.dense(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x)


def test_dense_hand_value():
    out = nc.dense(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]), Tensor([3.0]))
    assert out.data.tolist() == [[6.0]]


def test_dense_matches_loop(rng):
    x, w, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 4)), rng.normal(size=4)
    out = nc.dense(Tensor(x), Tensor(w), Tensor(b))
    np.testing.assert_allclose(out.data, naive_dense(x.astype(np.float32), w.astype(np.float32), b.astype(np.float32)), atol=1e-5)


def test_dense_inner_mismatch():
    with pytest.raises(DimensionError):
        nc.dense(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 1))), Tensor(np.zeros(1)))


def test_elementwise_shapes_must_match():
    with pytest.raises(DimensionError):
        nc.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


# -------------------------------------------------------------- activations
def test_relu_values():
    assert nc.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_softmax_uniform():
    np.testing.assert_allclose(nc.softmax(Tensor(np.zeros((1, 4)))).data, 0.25)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (3, 5), elements=st.floats(-20, 20)),
    st.floats(-50, 50),
)
def test_softmax_shift_invariant_and_normalised(x, c):
    p = nc.softmax(Tensor(x, dtype=np.float64), axis=1).data
    q = nc.softmax(Tensor(x + c, dtype=np.float64), axis=1).data
    np.testing.assert_allclose(p, q, atol=1e-6)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (2, 6), elements=st.floats(-10, 10, width=32)))
def test_log_softmax_is_log_of_softmax(x):
    ls = nc.log_softmax(Tensor(x), axis=1).data
    np.testing.assert_allclose(ls, np.log(nc.softmax(Tensor(x), axis=1).data), atol=1e-5)


def test_nan_output_is_an_error():
    with pytest.raises(NumericError):
        nc.log(Tensor([-1.0]))


# ----------------------------------------------------------------- backward
def test_backward_sum_gives_ones():
    x = leaf(np.random.default_rng(0).normal(size=(2, 3, 4)))
    nc.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_sum_of_squares():
    x = leaf([1.0, 2.0, 3.0])
    nc.sum(nc.mul(x, x)).backward()
    assert x.grad.tolist() == [2.0, 4.0, 6.0]


def test_backward_accumulates_over_uses():
    x = leaf([1.0, -2.0])
    loss = nc.add(nc.sum(nc.mul(x, 3.0)), nc.sum(nc.square(x)))
    loss.backward()
    np.testing.assert_allclose(x.grad, [3 + 2, 3 - 4])


def test_backward_adds_onto_existing_grad():
    x = leaf([1.0])
    nc.sum(x).backward()
    nc.sum(x).backward()
    assert x.grad.tolist() == [2.0]


def test_dead_branch_gets_zero_grad():
    x = leaf([-1.0, -2.0])
    nc.sum(nc.relu(x)).backward()
    assert x.grad.tolist() == [0.0, 0.0]


def test_backward_needs_scalar():
    with pytest.raises(UsageError):
        nc.mul(leaf([1.0, 2.0]), 2.0).backward()


@pytest.mark.parametrize("name", sorted(gradient_cases()))
def test_gradcheck_each_op(name):
    fn, make = gradient_cases()[name]
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    for _ in range(3):
        assert check_gradients(fn, make(rng)) < 1e-4


# --------------------------------------------------------------------- adam
def test_adam_first_step_hand_value():
    p = leaf([1.0])
    p.grad = np.array([1.0], dtype=np.float32)
    nc.adam_step({"p": p}, nc.AdamState(learning_rate=0.1))
    assert abs(p.data[0] - 0.9) < 1e-6
    assert abs(p.data[0] - adam_first_step(1.0, 1.0, 0.1)) < 1e-6


def test_adam_zero_grad_is_noop_but_counts():
    p = leaf([0.5, -0.5])
    p.grad = np.zeros(2, dtype=np.float32)
    state = nc.AdamState()
    nc.adam_step({"p": p}, state)
    assert p.data.tolist() == [0.5, -0.5]
    assert state.step_count == 1
    assert state.m["p"].shape == p.shape


def test_adam_missing_grad():
    with pytest.raises(UsageError):
        nc.adam_step({"p": leaf([1.0])}, nc.AdamState())


def test_adam_zeroes_grads_afterwards():
    p = leaf([1.0, 2.0])
    p.grad = np.ones(2, dtype=np.float32)
    nc.adam_step({"p": p}, nc.AdamState())
    assert p.grad.tolist() == [0.0, 0.0]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5, width=32), min_size=1, max_size=8))
def test_adam_symmetry(grads):
    a, b = leaf([0.3]), leaf([0.3])
    state = nc.AdamState(learning_rate=0.05)
    for g in grads:
        a.grad = np.array([g], dtype=np.float32)
        b.grad = np.array([g], dtype=np.float32)
        nc.adam_step({"a": a, "b": b}, state)
        assert a.data[0] == b.data[0]
    assert state.step_count == len(grads)


def test_adam_rejects_bad_betas():
    with pytest.raises(ValueError):
        nc.AdamState(beta1=1.0)


# ----------------------------------------------------------------- kernels
@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 2), st.integers(1, 3), st.integers(4, 9), st.sampled_from([(3, 1), (4, 2), (2, 2), (1, 1)]),
    st.integers(0, 2**31 - 1),
)
def test_numba_and_numpy_kernels_agree(n, c, size, geom, seed):
    k, stride = geom
    ho = (size - k) // stride + 1
    if ho < 1:
        return
    xp = np.random.default_rng(seed).normal(size=(n, c, size, size)).astype(np.float32)
    a = _kernels.im2col_numpy(xp, k, k, stride, ho, ho)
    b = _kernels.im2col_numba(xp, k, k, stride, ho, ho)
    np.testing.assert_array_equal(a, b)
    d = np.random.default_rng(seed + 1).normal(size=a.shape).astype(np.float32)
    np.testing.assert_array_equal(
        _kernels.col2im_numpy(d, xp.shape, k, k, stride, ho, ho),
        _kernels.col2im_numba(d, xp.shape, k, k, stride, ho, ho),
    )


def test_numpy_fallback_selected_by_env_flag():
    code = "from padkit import _accel; print(_accel.USE_NUMBA)"
    env = dict(os.environ, PADKIT_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_determinism_same_inputs_same_bits(rng):
    x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
    k = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
    outs = [nc.conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(4)), 2, 1).data for _ in range(2)]
    assert outs[0].tobytes() == outs[1].tobytes()


def test_float32_default_and_grad_shape():
    x = leaf(np.ones((2, 2)))
    assert x.dtype == np.float32
    nc.sum(nc.square(x)).backward()
    assert x.grad.shape == x.shape and x.grad.dtype == np.float32
    assert math.isclose(float(x.grad.sum()), 8.0)
