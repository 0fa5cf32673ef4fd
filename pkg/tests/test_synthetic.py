import numpy as np
import pytest

from dtd_landmarks.core import landmarks_to_normalized
from dtd_landmarks.errors import InvalidSpec
from dtd_landmarks.harness.synthetic import (BASE_LAYOUT, Occlusion, SyntheticSceneSpec, check_scene,
                                             generate_synthetic_video, quantize, scene_spec, static_trajectory,
                                             synthetic_training_samples, wandering_trajectory)


def small_spec(**kw):
    base = dict(frame_width=320, frame_height=240, num_frames=3, face_size=60,
                trajectory=static_trajectory(3, 160, 120), texture_seed=1)
    base.update(kw)
    return SyntheticSceneSpec(**base)


def test_same_seed_same_video():
    a, ta = generate_synthetic_video(small_spec())
    b, tb = generate_synthetic_video(small_spec())
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.pixels, y.pixels)
    assert ta == tb
    c, _ = generate_synthetic_video(small_spec(texture_seed=2))
    assert not np.array_equal(a[0].pixels, c[0].pixels)


def test_static_trajectory_gives_identical_frames(static_scene):
    frames, truth = static_scene
    for img in frames[1:]:
        np.testing.assert_array_equal(img.pixels, frames[0].pixels)
    assert len({gt.box for gt in truth}) == 1


def test_ground_truth_follows_the_layout(moving_scene):
    _, truth = moving_scene
    for gt in truth:
        np.testing.assert_allclose(landmarks_to_normalized(gt.landmarks, gt.box), BASE_LAYOUT, atol=1e-9)
        assert gt.visible


def test_frames_are_on_the_8bit_grid(static_scene):
    frames, _ = static_scene
    np.testing.assert_array_equal(quantize(frames[0].pixels), frames[0].pixels)
    assert frames[0].pixels.min() >= 0 and frames[0].pixels.max() <= 1


def test_eyes_are_dark_on_a_bright_face(static_scene):
    frames, truth = static_scene
    le = truth[0].landmarks["LE"]
    cx, cy = truth[0].box.center
    assert frames[0].pixels[round(le.y), round(le.x)] < 0.35
    assert frames[0].pixels[round(cy + 0.05 * 80), round(cx - 0.25 * 80)] > 0.6


def test_wandering_steps_stay_small():
    traj = wandering_trajectory(200, 1280, 720, 160, seed=3, max_step=5.0)
    xy = np.array([[s.cx, s.cy] for s in traj])
    assert np.linalg.norm(np.diff(xy, axis=0), axis=1).max() < 5.0
    spec = scene_spec(200, seed=3)
    check_scene(spec)


def test_occluded_frames_are_invisible():
    occ = Occlusion(start=1, end=2, x=100, y=60, w=120, h=120)
    frames, truth = generate_synthetic_video(small_spec(occlusions=[occ]))
    assert [gt.visible for gt in truth] == [True, False, True]
    assert np.all(frames[1].pixels[70:170, 110:210] == frames[1].pixels[100, 150])


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        generate_synthetic_video(small_spec(num_frames=4))
    with pytest.raises(InvalidSpec):
        generate_synthetic_video(small_spec(face_size=20, trajectory=static_trajectory(3, 160, 120)))
    with pytest.raises(InvalidSpec):
        generate_synthetic_video(small_spec(trajectory=static_trajectory(3, 40, 120)))
    with pytest.raises(InvalidSpec):
        generate_synthetic_video(small_spec(occlusions=[Occlusion(start=2, end=1, x=0, y=0, w=5, h=5)]))
    with pytest.raises(InvalidSpec):
        wandering_trajectory(10, 200, 200, 160)


def test_exits_allowed_when_asked():
    _, truth = generate_synthetic_video(small_spec(trajectory=static_trajectory(3, -5, 120), allow_exits=True))
    assert not truth[0].visible


def test_training_samples_keep_faces_inside():
    for s in synthetic_training_samples(10, seed=4):
        assert s.box.x >= 0 and s.box.x2 <= s.image.width
        assert s.box.y >= 0 and s.box.y2 <= s.image.height
        pts = landmarks_to_normalized(s.landmarks, s.box)
        assert np.abs(pts - BASE_LAYOUT).max() <= 0.04 + 1e-9
