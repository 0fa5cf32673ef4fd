import numpy as np
import pytest

from dtd_landmarks.core import GrayImage, bbox_iou
from dtd_landmarks.errors import ContractError, DimensionMismatch, EmptySequence
from dtd_landmarks.harness.synthetic import (SyntheticSceneSpec, generate_synthetic_video, linear_trajectory,
                                             occluder_over, static_trajectory)
from dtd_landmarks.pipeline import (STAGES, DTDPipeline, FrameByFrameBaseline, FrameStatus, Mode,
                                    run_baseline_frame_by_frame, run_dtd)


@pytest.fixture
def pipeline(face_model, prior_cascade, settings):
    return DTDPipeline(face_model, prior_cascade, settings)


@pytest.fixture(scope="module")
def translating_scene():
    spec = SyntheticSceneSpec(frame_width=480, frame_height=360, num_frames=6, face_size=80,
                              trajectory=linear_trajectory(6, (200, 160), (4, 2)), texture_seed=4)
    return generate_synthetic_video(spec)


@pytest.fixture(scope="module")
def occluded_scene():
    trajectory = static_trajectory(9, 240, 180)
    spec = SyntheticSceneSpec(frame_width=480, frame_height=360, num_frames=9, face_size=80,
                              trajectory=trajectory, texture_seed=8)
    box = generate_synthetic_video(spec.model_copy(update={"num_frames": 1, "trajectory": trajectory[:1]}))[1][0].box
    return generate_synthetic_video(spec.model_copy(update={"occlusions": [occluder_over(box, 3, 6)]}))


def center(box):
    return np.array(box.center)


def test_first_frame_is_detected(pipeline, static_scene):
    frames, truth = static_scene
    r = pipeline.process_first_frame(frames[0])
    assert r.status == FrameStatus.DETECTED_GLOBAL
    assert r.frame_index == 0
    assert bbox_iou(r.box, truth[0].box) >= 0.5
    assert r.landmarks is not None
    assert set(r.timings) == set(STAGES)
    assert r.timings["total"] >= r.timings["global_detect"] > 0
    assert pipeline.state.mode == Mode.TRACKING


def test_blank_first_frame_is_lost(pipeline, static_scene):
    blank = GrayImage(np.full((360, 480), 0.5))
    r = pipeline.process_first_frame(blank)
    assert r.status == FrameStatus.LOST
    assert r.box is None and r.landmarks is None
    # no face has been seen yet, so the next find is a first detection
    r = pipeline.process_next_frame(static_scene[0][0])
    assert r.status == FrameStatus.DETECTED_GLOBAL
    assert r.frame_index == 1


def test_first_frame_only_once(pipeline, static_scene):
    frames, _ = static_scene
    pipeline.process_first_frame(frames[0])
    with pytest.raises(ContractError):
        pipeline.process_first_frame(frames[1])
    pipeline.reset()
    assert pipeline.process_first_frame(frames[0]).frame_index == 0


def test_identical_frames_stay_put(pipeline, static_scene):
    frames, _ = static_scene
    report = pipeline.run(frames)
    first = report.results[0]
    assert first.status == FrameStatus.DETECTED_GLOBAL
    for r in report.results[1:]:
        assert r.status == FrameStatus.TRACKED_VALIDATED
        assert np.abs(np.array(r.box.as_tuple()) - np.array(first.box.as_tuple())).max() <= 1.0
        assert r.points_kept >= 8
        assert r.timings["global_detect"] == 0.0
        assert r.timings["local_detect"] > 0


def test_translation_is_tracked(pipeline, translating_scene):
    frames, truth = translating_scene
    report = pipeline.run(frames)
    statuses = [r.status for r in report.results]
    assert statuses == [FrameStatus.DETECTED_GLOBAL] + [FrameStatus.TRACKED_VALIDATED] * 5
    for prev, curr in zip(report.results, report.results[1:]):
        np.testing.assert_allclose(center(curr.box) - center(prev.box), [4, 2], atol=1.0)
    assert bbox_iou(report.results[-1].box, truth[-1].box) >= 0.5


def test_first_frame_matches_baseline(face_model, prior_cascade, settings, moving_scene):
    frames, _ = moving_scene
    dtd = run_dtd(frames[:3], face_model, prior_cascade, settings)
    base = run_baseline_frame_by_frame(frames[:3], face_model, prior_cascade, settings)
    assert dtd.results[0].box == base.results[0].box
    assert dtd.results[0].landmarks == base.results[0].landmarks
    assert all(r.status == FrameStatus.DETECTED_GLOBAL for r in base.results)
    assert all(r.timings["track"] == 0.0 for r in base.results)


def test_occlusion_is_lost_then_recovered(pipeline, occluded_scene):
    frames, truth = occluded_scene
    statuses = [r.status for r in pipeline.run(frames).results]
    assert statuses[:3] == [FrameStatus.DETECTED_GLOBAL] + [FrameStatus.TRACKED_VALIDATED] * 2
    assert statuses[3:6] == [FrameStatus.LOST] * 3
    assert statuses[6] == FrameStatus.RECOVERED_GLOBAL
    assert statuses[7:] == [FrameStatus.TRACKED_VALIDATED] * 2
    assert [t.visible for t in truth[3:6]] == [False] * 3


def test_lost_streak_counts_and_resets(pipeline, occluded_scene):
    frames, _ = occluded_scene
    pipeline.process_first_frame(frames[0])
    for img in frames[1:5]:
        pipeline.process_next_frame(img)
    assert pipeline.state.mode == Mode.LOST
    assert pipeline.state.lost_streak == 2
    for img in frames[5:7]:
        pipeline.process_next_frame(img)
    assert pipeline.state.mode == Mode.TRACKING
    assert pipeline.state.lost_streak == 0


def test_mismatched_frames(pipeline, static_scene):
    frames, _ = static_scene
    with pytest.raises(DimensionMismatch):
        pipeline.run([frames[0], GrayImage(np.zeros((100, 100)))])


def test_empty_sequence(face_model, prior_cascade):
    with pytest.raises(EmptySequence):
        DTDPipeline(face_model, prior_cascade).run([])
    with pytest.raises(EmptySequence):
        FrameByFrameBaseline(face_model, prior_cascade).run([])


def test_report_summary(pipeline, static_scene):
    report = pipeline.run(static_scene[0][:4])
    counts = report.status_counts()
    assert sum(counts.values()) == 4
    assert counts["DetectedGlobal"] == 1 and counts["TrackedValidated"] == 3
    assert list(report.summary.index) == list(STAGES)
    assert list(report.summary.columns) == ["mean", "median", "p95"]


@pytest.fixture(scope="module")
def frame_pool(static_scene, moving_scene):
    frames, truth = static_scene
    spec = SyntheticSceneSpec(frame_width=480, frame_height=360, num_frames=1, face_size=80,
                              trajectory=static_trajectory(1, 240, 180), texture_seed=3,
                              occlusions=[occluder_over(truth[0].box, 0, 1)])
    occluded = generate_synthetic_video(spec)[0][0]
    blank = GrayImage(np.full((360, 480), 0.5))
    return [blank, frames[0], occluded] + list(moving_scene[0][:3])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_state_stays_sound_on_random_sequences(pipeline, frame_pool, seed):
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(frame_pool), size=8)
    seen, streak = False, 0
    for i, k in enumerate(picks):
        mode_before = pipeline.state.mode
        img = frame_pool[k]
        r = pipeline.process_first_frame(img) if i == 0 else pipeline.process_next_frame(img)
        pipeline.state.check()
        assert r.frame_index == i
        assert pipeline.state.frame_index == i + 1
        if r.status == FrameStatus.LOST:
            streak += 1
            assert r.box is None and r.landmarks is None
            assert pipeline.state.mode == (Mode.LOST if seen else Mode.UNINITIALIZED)
        else:
            assert r.box is not None and r.landmarks is not None
            assert pipeline.state.mode == Mode.TRACKING
            assert pipeline.state.box == r.box
            expected = {FrameStatus.DETECTED_GLOBAL: not seen,
                        FrameStatus.RECOVERED_GLOBAL: seen,
                        FrameStatus.TRACKED_VALIDATED: mode_before == Mode.TRACKING}
            assert expected[r.status]
            seen, streak = True, 0
        assert pipeline.state.lost_streak == streak
