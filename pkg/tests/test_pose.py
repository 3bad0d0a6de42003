import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalloc.pose import (PoseTrack, chunk_pose, fuse_with_rgb, impute_track, person_pair_frames, pose_features,
                          select_principal_tracks, vectorize_frame)
from toy_skeleton import EXPECTED, keypoints


def norms(vectors):
    return np.linalg.norm(np.asarray(vectors).reshape(-1, 2), axis=1)


def test_toy_skeleton_directions():
    np.testing.assert_allclose(vectorize_frame(keypoints()), EXPECTED, rtol=0, atol=1e-12)


def test_axis_aligned_shoulder():
    kps = keypoints()
    kps[2, :2] = kps[1, :2] + [5, 0]
    assert tuple(vectorize_frame(kps)[:2]) == (1.0, 0.0)


def test_missing_wrist_zeroes_only_its_limb():
    kps = keypoints()
    kps[4, 2] = 0.05
    out = vectorize_frame(kps).reshape(12, 2)
    np.testing.assert_array_equal(out[2], 0.0)
    np.testing.assert_allclose(np.delete(out, 2, axis=0), np.delete(EXPECTED.reshape(12, 2), 2, axis=0), atol=1e-12)
    kps[4] = np.nan
    assert np.all(vectorize_frame(kps).reshape(12, 2)[2] == 0.0)


def test_face_points_do_not_matter():
    kps = keypoints()
    kps[[0, 14, 15, 16, 17], :2] = [[1, 2], [3, 4], [5, 6], [7, 8], [9, 9]]
    np.testing.assert_array_equal(vectorize_frame(kps), vectorize_frame(keypoints()))


def test_coincident_points_give_zero():
    kps = keypoints()
    kps[3, :2] = kps[2, :2]
    assert np.all(vectorize_frame(kps).reshape(12, 2)[1] == 0.0)


@given(st.integers(0, 10**6))
def test_vector_norms_are_zero_or_one(seed):
    rng = np.random.default_rng(seed)
    kps = np.column_stack([rng.uniform(0, 640, (18, 2)), rng.uniform(0, 1, 18)])
    n = norms(vectorize_frame(kps))
    assert np.all((n == 0.0) | (np.abs(n - 1.0) <= 1e-9))


def test_impute_track_examples():
    assert np.all(impute_track(None, 4) == 0)
    track = PoseTrack(0, {3: keypoints()})
    out = impute_track(track, 6)
    assert np.all(out[:3] == 0)
    for j in range(3, 6):
        np.testing.assert_array_equal(out[j], vectorize_frame(keypoints()))
    moved = keypoints()
    moved[4, :2] = moved[3, :2] + [0, 10]
    full = PoseTrack(1, {j: (moved if j % 2 else keypoints()) for j in range(4)})
    out = impute_track(full, 4)
    for j in range(4):
        np.testing.assert_array_equal(out[j], vectorize_frame(moved if j % 2 else keypoints()))


def track_with(track_id, frames):
    return PoseTrack(track_id, {j: keypoints() for j in frames})


def test_select_principal_tracks():
    tracks = [track_with(0, range(3)), track_with(1, range(10)), track_with(2, range(7))]
    a, b = select_principal_tracks(tracks)
    assert (a.track_id, b.track_id) == (1, 2)
    a, b = select_principal_tracks([track_with(5, range(4)), track_with(2, range(4))])
    assert (a.track_id, b.track_id) == (2, 5)
    a, b = select_principal_tracks([track_with(3, range(2))])
    assert a.track_id == 3 and b is None
    frames = person_pair_frames([track_with(3, range(2))], 2)
    assert frames.shape == (2, 48) and np.all(frames[:, 24:] == 0)


def test_chunk_pose_examples():
    frames = np.random.default_rng(0).standard_normal((32, 48))
    chunks = chunk_pose(frames)
    assert chunks.shape == (2, 768)
    np.testing.assert_array_equal(chunks[1, :48], frames[16])
    chunks = chunk_pose(frames[:20])
    assert chunks.shape == (2, 768)
    np.testing.assert_array_equal(chunks[1, :4 * 48], frames[16:20].reshape(-1))
    assert np.all(chunks[1, 4 * 48:] == 0)
    assert np.all(chunk_pose(np.zeros((5, 48))) == 0)
    with pytest.raises(ValueError):
        chunk_pose(frames, 0)


def test_fuse_with_rgb():
    rgb = np.random.default_rng(1).standard_normal((3, 1024))
    fused = fuse_with_rgb(rgb, np.zeros((4, 768)))
    assert fused.shape == (3, 1792)
    np.testing.assert_array_equal(fused[:, :1024], rgb)
    pose = np.random.default_rng(2).standard_normal((3, 768))
    small = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(fuse_with_rgb(small, pose), np.concatenate([small, pose], axis=1))
    with pytest.raises(ValueError, match="2 pose chunks for 3"):
        fuse_with_rgb(small, pose[:2])


def test_pipeline_width_independent_of_people():
    for tracks in ([], [track_with(0, range(5))], [track_with(i, range(i + 1)) for i in range(4)]):
        out = pose_features(tracks, 40)
        assert out.shape == (3, 768)


def random_similarity(rng):
    angle = 0.0  # rotation changes directions; only translation and scale are invariances
    scale = float(rng.uniform(0.1, 10.0))
    shift = rng.uniform(-500, 500, 2)
    return scale, shift, angle


def test_translation_and_scale_invariance_over_random_transforms():
    rng = np.random.default_rng(0)
    base = np.column_stack([rng.uniform(0, 640, (18, 2)), np.full(18, 0.9)])
    ref = vectorize_frame(base)
    for _ in range(100):
        scale, shift, _ = random_similarity(rng)
        moved = base.copy()
        moved[:, :2] = base[:, :2] * scale + shift
        np.testing.assert_allclose(vectorize_frame(moved), ref, rtol=0, atol=1e-9)
