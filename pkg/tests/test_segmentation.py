import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from poseaqa import numcore as nc
from poseaqa import segmentation as seg
from poseaqa.errors import ContractError


def one_hot_maps(T, picks):
    m = np.zeros((len(picks), T))
    m[np.arange(len(picks)), picks] = 1.0
    return m


def test_decode_unambiguous_peaks():
    assert seg.decode_transitions(one_hot_maps(24, [8, 16])).transitions == (8, 16)


def test_decode_forced_past_previous():
    assert seg.decode_transitions(one_hot_maps(24, [8, 8])).transitions == (8, 9)


def test_decode_uniform_tie_break():
    assert seg.decode_transitions(np.full((2, 24), 1 / 24)).transitions == (1, 2)


def test_decode_exhausted_falls_back():
    pred = seg.decode_transitions(one_hot_maps(10, [9, 9]))
    assert pred.fallback
    assert pred.transitions == seg.equal_transitions(10, 3)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(5, 30)),
              elements=st.floats(0, 1, allow_nan=False)))
def test_decode_always_valid(maps):
    t = seg.decode_transitions(maps).transitions
    T = maps.shape[1]
    assert len(t) == maps.shape[0]
    assert all(1 <= x <= T - 1 for x in t)
    assert all(b > a for a, b in zip(t, t[1:]))


def test_loss_one_hot_is_zero():
    maps = nc.Tensor(one_hot_maps(24, [8, 16]))
    assert seg.segmentation_loss(maps, [8, 16]).item() == 0.0


@pytest.mark.parametrize("T,heads,gt", [(24, 2, [5, 17]), (10, 1, [3]), (15, 3, [2, 7, 11])])
def test_loss_uniform_closed_form(T, heads, gt):
    maps = nc.Tensor(np.full((heads, T), 1.0 / T))
    assert seg.segmentation_loss(maps, gt).item() == pytest.approx(heads * math.log(T), rel=1e-12)
    logits = nc.Tensor(np.zeros((heads, T)))
    assert seg.segmentation_loss_from_logits(logits, gt).item() == pytest.approx(heads * math.log(T), rel=1e-12)


def test_loss_decreases_as_mass_moves_to_gt():
    T, gt = 12, 4
    vals = []
    for m in np.linspace(1.0 / T, 0.99, 25):
        row = np.full(T, (1 - m) / (T - 1))
        row[gt] = m
        vals.append(seg.segmentation_loss(nc.Tensor(row[None]), [gt]).item())
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_loss_rejects_bad_gt():
    with pytest.raises(ContractError):
        seg.segmentation_loss(nc.Tensor(np.full((2, 10), 0.1)), [5, 5])
    with pytest.raises(ContractError):
        seg.segmentation_loss(nc.Tensor(np.full((1, 10), 0.1)), [10])


def test_batched_loss_is_mean_of_samples():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(3, 2, 12))
    gts = [[2, 7], [4, 5], [1, 11]]
    batched = seg.segmentation_loss_from_logits(nc.Tensor(logits), gts).item()
    single = [seg.segmentation_loss_from_logits(nc.Tensor(l), g).item() for l, g in zip(logits, gts)]
    assert batched == pytest.approx(np.mean(single), rel=1e-13)


def test_zero_params_uniform_maps():
    params = seg.init_params(np.random.default_rng(1), d_in=6, hidden=4)
    for v in params.values():
        v.data[...] = 0.0
    f = nc.Tensor(np.random.default_rng(2).normal(size=(9, 6)))
    pred = seg.predict_transitions(f, params)
    np.testing.assert_allclose(pred.prob_maps, 1 / 9, rtol=1e-14)
    np.testing.assert_allclose(pred.prob_maps.sum(axis=1), 1.0, atol=1e-12)


def test_predict_requires_enough_frames():
    params = seg.init_params(np.random.default_rng(1), d_in=6, hidden=4, n_stages=3)
    with pytest.raises(ContractError):
        seg.predict_transitions(nc.Tensor(np.zeros((2, 6))), params)


def test_bigru_heads_grad():
    rng = np.random.default_rng(3)
    params = seg.init_params(rng, d_in=5, hidden=3)
    x = nc.parameter(rng.normal(size=(8, 5)))
    f = lambda _: seg.segmentation_loss_from_logits(seg.transition_logits(x, params), [3, 6])
    assert nc.grad_check(f, x) <= 1e-4
    for name in ("fwd.w_hh", "bwd.w_ih", "head.w", "fwd.b_hh"):
        assert nc.grad_check(f, params[name]) <= 1e-4, name


def test_pool_identity_when_stage_length_matches():
    x = np.random.default_rng(4).normal(size=(15, 3))
    out = seg.pool_stage_features(nc.Tensor(x), [5, 10], 5).data
    np.testing.assert_array_equal(out.reshape(15, 3), x)


def test_pool_single_frame_stage_repeats():
    x = np.random.default_rng(5).normal(size=(10, 2))
    out = seg.pool_stage_features(nc.Tensor(x), [1, 6], 5).data
    np.testing.assert_array_equal(out[0], np.tile(x[0], (5, 1)))


@pytest.mark.parametrize("transitions", [[9, 14], [3, 12], [1, 2]])
def test_pool_matches_brute_force_interp(transitions):
    T, D, Ts = 20, 4, 5
    x = np.random.default_rng(6).normal(size=(T, D))
    out = seg.pool_stage_features(nc.Tensor(x), transitions, Ts).data
    bounds = [0, *transitions, T]
    for k in range(3):
        a, b = bounds[k], bounds[k + 1]
        pos = np.linspace(a, b - 1, Ts)
        for c in range(D):
            ref = np.interp(pos, np.arange(a, b), x[a:b, c])
            np.testing.assert_allclose(out[k, :, c], ref, atol=1e-12)


def test_pool_batched_matches_single():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 12, 3))
    ts = [[4, 8], [2, 9]]
    out = seg.pool_stage_features(nc.Tensor(x), ts, 5).data
    for i in range(2):
        np.testing.assert_array_equal(out[i], seg.pool_stage_features(nc.Tensor(x[i]), ts[i], 5).data)


def test_streams_share_stages():
    rng = np.random.default_rng(8)
    ts = [6, 14]
    streams = [rng.normal(size=(20, 4)) for _ in range(3)]
    W = seg.resample_matrix(20, ts, 5)
    for s in streams:
        np.testing.assert_array_equal(seg.pool_stage_features(nc.Tensor(s), ts, 5).data.reshape(15, 4), W @ s)


def test_single_stage_has_no_loss():
    logits = nc.Tensor(np.zeros((4, 0, 12)))
    assert seg.segmentation_loss_from_logits(logits, np.zeros((4, 0), dtype=int)).item() == 0.0
    assert seg.segmentation_loss(nc.Tensor(np.zeros((0, 12))), []).item() == 0.0


def test_decode_rejects_too_few_frames():
    with pytest.raises(ContractError):
        seg.decode_transitions(np.full((3, 3), 1 / 3))
    assert seg.decode_transitions(np.full((3, 4), 0.25)).transitions == (1, 2, 3)
