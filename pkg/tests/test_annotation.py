import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poseaqa import annotation as ann
from poseaqa.annotation import BoundingBox as Box
from poseaqa.errors import ContractError, FormatError, NoEstimatorError

from oracles import brute_nearest


def test_track_distance_example():
    r = ann.track_nearest(Box(0, 0, 2, 2), [Box(1, 1, 3, 3)])
    assert r.index == 0 and r.distance == 2.0


def test_track_exact_overlap_wins():
    prev = Box(5, 5, 9, 9)
    r = ann.track_nearest(prev, [Box(6, 5, 9, 9, 1.0), Box(5, 5, 9, 9, 0.4), Box(4, 4, 10, 10, 1.0)])
    assert r.index == 1 and r.distance == 0.0


def test_track_tie_higher_confidence():
    prev = Box(0, 0, 2, 2)
    r = ann.track_nearest(prev, [Box(1, 0, 3, 2, 0.5), Box(-1, 0, 1, 2, 0.9)])
    assert r.index == 1
    r = ann.track_nearest(prev, [Box(1, 0, 3, 2, 0.9), Box(-1, 0, 1, 2, 0.9)])
    assert r.index == 0


def test_track_lost_and_errors():
    r = ann.track_nearest(Box(0, 0, 1, 1), [Box(0, 0, 1, 1, 0.1), Box(0, 0, 2, 2, 0.29)])
    assert r.lost and r.box is None
    with pytest.raises(ContractError):
        ann.track_nearest(Box(0, 0, 1, 1), [])
    with pytest.raises(ContractError):
        Box(2, 0, 1, 1)


def random_box(rng, integer):
    x, y = (rng.integers(0, 50, 2) if integer else rng.uniform(0, 50, 2))
    w, h = (rng.integers(1, 20, 2) if integer else rng.uniform(0.5, 20, 2))
    return Box(float(x), float(y), float(x + w), float(y + h), float(rng.choice([0.2, 0.5, 0.9, 1.0])))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_track_matches_brute_force(seed, integer):
    rng = np.random.default_rng(seed)
    prev = random_box(rng, integer)
    cands = [random_box(rng, integer) for _ in range(rng.integers(1, 7))]
    r = ann.track_nearest(prev, cands)
    assert r.index == brute_nearest(prev, cands, ann.CONFIDENCE_FLOOR)


def test_track_translation_invariance():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        prev = random_box(rng, True)
        cands = [random_box(rng, True) for _ in range(5)]
        dx, dy = rng.integers(-1000, 1000, 2).astype(float)
        a = ann.track_nearest(prev, cands).index
        b = ann.track_nearest(prev.shifted(dx, dy), [c.shifted(dx, dy) for c in cands]).index
        assert a == b


def test_track_sequence_keeps_reference_when_lost():
    seq = ann.track_sequence(Box(0, 0, 2, 2), [[Box(1, 0, 3, 2)], [Box(9, 9, 10, 10, 0.1)], [Box(1, 1, 3, 3), Box(20, 20, 22, 22)]])
    assert [r.index for r in seq] == [0, None, 0]


def test_interpolation_examples():
    np.testing.assert_array_equal(ann.interpolate_joints([0, 0], 0, [10, 10], 10, 5), [5, 5])
    np.testing.assert_array_equal(ann.interpolate_joints([0, 0], 0, [10, 10], 10, 5, printed_coefficients=True), [5, 5])
    np.testing.assert_array_equal(ann.interpolate_joints([0, 0], 0, [8, 4], 4, 1), [2, 1])
    # printed weights land next to the far endpoint
    np.testing.assert_array_equal(ann.interpolate_joints([0, 0], 0, [8, 4], 4, 1, printed_coefficients=True), [6, 3])
    with pytest.raises(ContractError):
        ann.interpolate_joints([0, 0], 0, [1, 1], 4, 4)


def test_interpolation_endpoint_limit():
    p_i, p_j = np.array([3.0, -2.0]), np.array([7.0, 11.0])
    near = ann.interpolate_joints(p_i, 0, p_j, 10**6, 1)
    np.testing.assert_allclose(near, p_i, atol=2e-5)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_interpolation_convex(seed):
    rng = np.random.default_rng(seed)
    p_i, p_j = rng.normal(size=(16, 2)) * 50, rng.normal(size=(16, 2)) * 50
    i = int(rng.integers(0, 10))
    j = i + int(rng.integers(2, 10))
    k = int(rng.integers(i + 1, j))
    p = ann.interpolate_joints(p_i, i, p_j, j, k)
    lo, hi = np.minimum(p_i, p_j), np.maximum(p_i, p_j)
    assert np.all(p >= lo - 1e-9) and np.all(p <= hi + 1e-9)


def test_splash_examples():
    assert ann.integrate_splash(ann.SplashTrack([2, 4, 6], 1.0)) == 8.0
    assert ann.integrate_splash(ann.SplashTrack([3.0] * 7, 0.5)) == 3.0 * 6 * 0.5
    assert ann.integrate_splash(ann.SplashTrack([5.0])) == 0.0
    with pytest.raises(ContractError):
        ann.SplashTrack([1, -1, 2])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.lists(st.floats(0, 100), min_size=0, max_size=20))
def test_splash_additive(a, b):
    whole = ann.integrate_splash(ann.SplashTrack(a + b))
    left = ann.integrate_splash(ann.SplashTrack(a))
    right = ann.integrate_splash(ann.SplashTrack(a[-1:] + b))
    assert whole == pytest.approx(left + right, rel=1e-12, abs=1e-9)


@pytest.fixture
def clip():
    rng = np.random.default_rng(1)
    poses = rng.uniform(4, 28, size=(12, 16, 2))
    frames = np.zeros((12, 32, 32, 1))
    boxes = [Box(2, 2, 30, 30)] * 12
    return poses, frames, boxes


def test_estimator_noise_zero_exact(clip):
    poses, frames, boxes = clip
    out = ann.estimate_pose_stub(frames, boxes, ann.ReplayEstimator(poses))
    assert np.array_equal(out, poses)


def test_estimator_noise_std():
    poses = np.zeros((625, 16, 2))  # 2 * 10^4 coordinates
    frames = np.zeros((625, 8, 8, 1))
    out = ann.estimate_pose_stub(frames, [Box(0, 0, 8, 8)] * 625, ann.ReplayEstimator(poses, sigma=1.5, seed=3))
    assert abs(out.std() - 1.5) <= 0.2 * 1.5


def test_estimator_gap_filled_by_interpolation(clip):
    poses, frames, boxes = clip
    out = ann.estimate_pose_stub(frames, boxes, ann.ReplayEstimator(poses, drop=frozenset({4, 5, 6, 0})))
    for k in (4, 5, 6):
        want = poses[3] * (7 - k) / 4 + poses[7] * (k - 3) / 4
        np.testing.assert_allclose(out[k], want, atol=1e-12)
    np.testing.assert_array_equal(out[0], poses[1])


def test_estimator_errors(clip):
    poses, frames, boxes = clip
    with pytest.raises(NoEstimatorError):
        ann.estimate_pose_stub(frames, boxes, None)
    with pytest.raises(ContractError):
        ann.estimate_pose_stub(frames, [Box(20, 20, 40, 30)] * 12, ann.ReplayEstimator(poses))


def test_pose_csv_roundtrip(tmp_path, clip):
    poses, _, _ = clip
    poses = poses + 1e-13 * np.arange(poses.size).reshape(poses.shape)
    anns = ann.poses_to_annotations(poses)
    anns[2].visible[5] = False
    path = tmp_path / "p.csv"
    ann.write_pose_csv(path, anns)
    back = ann.read_pose_csv(path)
    assert len(back) == len(anns)
    for a, b in zip(anns, back):
        assert a.frame == b.frame and a.box == b.box
        assert np.array_equal(a.keypoints, b.keypoints) and np.array_equal(a.visible, b.visible)
    ann.write_pose_csv(tmp_path / "q.csv", back)
    assert (tmp_path / "q.csv").read_bytes() == path.read_bytes()


def test_pose_csv_format_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("frame,a,b\n1,2,3\n")
    with pytest.raises(FormatError):
        ann.read_pose_csv(p)
    with pytest.raises(FormatError):
        ann.read_pose_csv(tmp_path / "missing.csv")
