import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from poseaqa import numcore as nc
from poseaqa.errors import ContractError, ShapeError


def rand_param(rng, *shape, scale=1.0):
    return nc.parameter(rng.normal(scale=scale, size=shape))


def test_matmul_identity_and_hand_values():
    a = nc.Tensor(np.arange(9.0).reshape(3, 3))
    np.testing.assert_array_equal(nc.matmul(nc.Tensor(np.eye(3)), a).data, a.data)
    out = nc.matmul(nc.Tensor([[1.0, 2.0], [3.0, 4.0]]), nc.Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nc.matmul(nc.Tensor(np.zeros((2, 3))), nc.Tensor(np.zeros((2, 3))))


def test_matmul_grad_vs_finite_differences():
    rng = np.random.default_rng(0)
    a = rand_param(rng, 4, 3)
    b = nc.Tensor(rng.normal(size=(3, 5)))
    assert nc.grad_check(lambda x: nc.matmul(x, b).sum(), a) <= 1e-6


def test_softmax_values():
    np.testing.assert_allclose(nc.softmax(nc.Tensor([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(nc.softmax(nc.Tensor([math.log(2.0), 0.0])).data, [2 / 3, 1 / 3], rtol=1e-15)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    s = nc.softmax(nc.Tensor(x), axis=-1).data
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


def test_layer_norm_constant_vector_is_zero():
    x = nc.Tensor(np.full(6, 3.7))
    out = nc.layer_norm(x, nc.Tensor(np.ones(6)), nc.Tensor(np.zeros(6)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_relu_and_identity_conv():
    np.testing.assert_array_equal(nc.relu(nc.Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    x = nc.Tensor(np.random.default_rng(1).normal(size=(7, 3)))
    k = nc.Tensor(np.eye(3)[None])
    np.testing.assert_array_equal(nc.temporal_conv1d(x, k, stride=1, padding=0).data, x.data)


def test_gru_zero_fixed_point():
    p = {"w_ih": nc.Tensor(np.zeros((4, 9))), "w_hh": nc.Tensor(np.zeros((3, 9))),
         "b_ih": nc.Tensor(np.zeros(9)), "b_hh": nc.Tensor(np.zeros(9))}
    h = nc.gru_cell(nc.Tensor(np.zeros(4)), nc.Tensor(np.zeros(3)), p)
    np.testing.assert_array_equal(h.data, np.zeros(3))


def _gru_params(rng, d_in, d_h):
    return {"w_ih": rand_param(rng, d_in, 3 * d_h, scale=0.5), "w_hh": rand_param(rng, d_h, 3 * d_h, scale=0.5),
            "b_ih": rand_param(rng, 3 * d_h, scale=0.1), "b_hh": rand_param(rng, 3 * d_h, scale=0.1)}


@pytest.mark.parametrize("steps,tol", [(1, 1e-6), (8, 1e-5)])
def test_gru_unrolled_grad(steps, tol):
    rng = np.random.default_rng(2)
    p = _gru_params(rng, 4, 3)
    xs = rng.normal(size=(steps, 4))

    def run(_):
        h = nc.Tensor(np.zeros(3))
        for t in range(steps):
            h = nc.gru_cell(nc.Tensor(xs[t]), h, p)
        return (h * h).sum()

    for name in p:
        assert nc.grad_check(run, p[name]) <= tol, name


def test_backward_simple_and_accumulates():
    x = nc.parameter([1.0, -2.0, 3.0])
    nc.tsum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones(3))
    x.zero_grad()
    loss = (x * x).sum()
    loss.backward()
    np.testing.assert_array_equal(x.grad, 2 * x.data)
    loss.backward()
    np.testing.assert_array_equal(x.grad, 4 * x.data)


def test_backward_rejects_non_scalar():
    x = nc.parameter([1.0, 2.0])
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_backward_deterministic():
    rng = np.random.default_rng(3)
    w = rand_param(rng, 6, 6)
    x = nc.Tensor(rng.normal(size=(5, 6)))
    loss = nc.softmax(nc.linear(x, w), axis=0).log().sum() + nc.layer_norm(
        nc.linear(x, w), nc.Tensor(np.ones(6)), nc.Tensor(np.zeros(6))).sum()
    loss.backward()
    g1 = w.grad.copy()
    w.zero_grad()
    loss.backward()
    assert g1.tobytes() == w.grad.tobytes()


def test_tape_is_topological():
    rng = np.random.default_rng(4)
    w = rand_param(rng, 3, 3)
    y = nc.relu(nc.matmul(w, w)) + w
    tape = nc.Tape.from_output(y.sum())
    assert tape.is_topological()
    assert tape.nodes[-1].op == "sum"


def test_grad_check_sum_exact():
    x = rand_param(np.random.default_rng(5), 10)
    assert nc.grad_check(lambda t: t.sum(), x) <= 1e-10


def test_grad_check_softmax_cross_entropy():
    rng = np.random.default_rng(6)
    logits = rand_param(rng, 4, 7)
    target = rng.integers(0, 7, size=4)
    f = lambda z: -nc.log_softmax(z, axis=-1)[np.arange(4), target].sum()
    assert nc.grad_check(f, logits) <= 1e-6


def test_grad_check_rejects_bad_eps():
    with pytest.raises(ContractError):
        nc.grad_check(lambda t: t.sum(), nc.parameter([1.0]), eps=0.1)


# every primitive, random inputs, fixed seed
rng0 = np.random.default_rng(11)
W_FIXED = rng0.normal(size=(5, 4))


def _primitive_cases():
    r = np.random.default_rng(12)
    mask = r.random((3, 5)) > 0.3
    mask[:, 0] = True
    shift = nc.Tensor(r.normal(size=(3, 5)))
    k1d = nc.Tensor(r.normal(size=(3, 4, 2)))
    k2d = nc.Tensor(r.normal(size=(3, 3, 2, 3)))
    cases = {
        "add": (lambda x: ((x + shift) ** 2).sum(), (3, 5)),
        "mul_broadcast": (lambda x: (x * nc.Tensor(W_FIXED[0])).sum(), (3, 4)),
        "div": (lambda x: (nc.Tensor(W_FIXED[:3, :4]) / (x * x + 1.0)).sum(), (3, 4)),
        "exp_log": (lambda x: nc.log(nc.exp(x) + 1.0).sum(), (3, 4)),
        "sqrt": (lambda x: nc.sqrt(x * x + 2.0).sum(), (4,)),
        "tanh": (lambda x: (nc.tanh(x) * nc.Tensor(W_FIXED[1, :4])).sum(), (2, 4)),
        "sigmoid": (lambda x: (nc.sigmoid(x) * nc.Tensor(W_FIXED[2, :4])).sum(), (2, 4)),
        "relu": (lambda x: (nc.relu(x) * nc.Tensor(W_FIXED[3, :4])).sum(), (3, 4)),
        "matmul_batched": (lambda x: (nc.matmul(x, nc.Tensor(W_FIXED[:4])) ** 2).sum(), (2, 3, 4)),
        "linear": (lambda x: nc.tanh(nc.linear(x, nc.Tensor(W_FIXED[:4]), nc.Tensor(W_FIXED[4]))).sum(), (3, 4)),
        "softmax": (lambda x: (nc.softmax(x, axis=0) * nc.Tensor(W_FIXED[:3, :4])).sum(), (3, 4)),
        "log_softmax": (lambda x: (nc.log_softmax(x, axis=1) * nc.Tensor(W_FIXED[:3, :4])).sum(), (3, 4)),
        "layer_norm": (lambda x: (nc.layer_norm(x, nc.Tensor(W_FIXED[0]), nc.Tensor(W_FIXED[1]))
                                  * nc.Tensor(W_FIXED[2:5])).sum(), (3, 4)),
        "l2_normalize": (lambda x: (nc.l2_normalize(x) * nc.Tensor(W_FIXED[:3])).sum(), (3, 4)),
        "mean": (lambda x: (nc.mean(x, axis=0) ** 2).sum(), (3, 4)),
        "max": (lambda x: (nc.tmax(x, axis=1) ** 2).sum(), (3, 5)),
        "masked_max": (lambda x: (nc.masked_max(x, mask, axis=1) ** 2).sum(), (3, 5)),
        "take_index": (lambda x: (nc.take(x, [0, 2, 2, 1], axis=1) ** 2).sum() + (x[1, 1:] ** 3).sum(), (3, 4)),
        "concat_stack": (lambda x: (nc.concat([x, x * 2.0], axis=1) ** 2).sum()
                         + (nc.stack([x, x], axis=0) ** 3).sum(), (2, 3)),
        "transpose_reshape": (lambda x: (nc.matmul(x.transpose(1, 0), x).reshape(-1) ** 2).sum(), (3, 2)),
        "temporal_conv_edge": (lambda x: (nc.temporal_conv1d(x, k1d,
                                                             padding=1) ** 2).sum(), (2, 6, 4)),
        "temporal_conv_zero_stride": (lambda x: (nc.temporal_conv1d(x, nc.Tensor(W_FIXED[:3, :4, None].repeat(2, 2)),
                                                                    stride=2, padding=1, pad_mode="zero") ** 2).sum(),
                                      (7, 4)),
        "conv2d": (lambda x: (nc.conv2d(x, k2d, stride=2, padding=1) ** 2).sum(),
                   (2, 5, 6, 2)),
        "avg_pool2d": (lambda x: (nc.avg_pool2d(x, 3, 2, padding=1) ** 2).sum(), (1, 6, 6, 2)),
    }
    return cases


CASES = _primitive_cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients(name):
    f, shape = CASES[name]
    x = nc.parameter(np.random.default_rng(zlib.crc32(name.encode())).normal(size=shape))
    assert nc.grad_check(f, x) <= 1e-5


def test_conv2d_weight_and_bias_grads():
    r = np.random.default_rng(13)
    x = nc.Tensor(r.normal(size=(2, 5, 5, 2)))
    w = rand_param(r, 3, 3, 2, 3)
    b = rand_param(r, 3)
    f = lambda _: (nc.conv2d(x, w, b, stride=1, padding=1) ** 2).sum()
    assert nc.grad_check(f, w) <= 1e-5
    assert nc.grad_check(f, b) <= 1e-5


def test_conv2d_matches_direct_loop():
    r = np.random.default_rng(14)
    x = r.normal(size=(4, 5, 2))
    w = r.normal(size=(3, 3, 2, 2))
    out = nc.conv2d(nc.Tensor(x), nc.Tensor(w), stride=1, padding=1).data
    xp = np.pad(x, [(1, 1), (1, 1), (0, 0)])
    ref = np.zeros((4, 5, 2))
    for i in range(4):
        for j in range(5):
            ref[i, j] = np.einsum("abc,abcd->d", xp[i:i + 3, j:j + 3], w)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_no_grad_builds_no_graph():
    w = nc.parameter([1.0, 2.0])
    with nc.no_grad():
        y = w * 3.0
    assert not y.requires_grad


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 3), st.integers(0, 1))
def test_avg_pool2d_matches_window_loop(seed, size, stride, pad):
    r = np.random.default_rng(seed)
    x = r.normal(size=(2, 7, 6, 3))
    out = nc.avg_pool2d(nc.Tensor(x), size, stride, padding=pad).data
    xp = np.zeros((2, 7 + 2 * pad, 6 + 2 * pad, 3))
    xp[:, pad:pad + 7, pad:pad + 6] = x
    ho, wo = (xp.shape[1] - size) // stride + 1, (xp.shape[2] - size) // stride + 1
    ref = np.zeros((2, ho, wo, 3))
    for i in range(ho):
        for j in range(wo):
            ref[:, i, j] = xp[:, i * stride:i * stride + size, j * stride:j * stride + size].mean(axis=(1, 2))
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


def test_avg_pool2d_too_small():
    with pytest.raises(ShapeError):
        nc.avg_pool2d(nc.Tensor(np.zeros((2, 2, 1))), 3, 1)
