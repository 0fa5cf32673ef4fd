import numpy as np
import pytest
from numpy.testing import assert_allclose

from dtd_landmarks.config import FlowConfig
from dtd_landmarks.core import GrayImage, Point2, sample_bilinear
from dtd_landmarks.errors import DimensionMismatch, EmptyPointList, ImageTooSmall, NoValidPoints
from dtd_landmarks.pyramid_flow import (FBResult, FBStatus, TrackStatus, build_pyramid, filter_by_median,
                                        lk_track_point, lk_track_points, median_filter, track_fb_arrays,
                                        track_forward_backward)

SIZE = 96


def wave_texture(rng, shift=(0.0, 0.0), size=SIZE):
    """Sum of random plane waves (periods 16-32 px), optionally translated by `shift`."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    xs = xs - shift[0]
    ys = ys - shift[1]
    out = np.full((size, size), 0.5)
    for _ in range(5):
        angle = rng.uniform(0, np.pi)
        period = rng.uniform(16, 32)
        phase = rng.uniform(0, 2 * np.pi)
        out += 0.1 * np.sin(2 * np.pi * (np.cos(angle) * xs + np.sin(angle) * ys) / period + phase)
    return out


def image_pair(seed, shift):
    a = wave_texture(np.random.default_rng(seed))
    b = wave_texture(np.random.default_rng(seed), shift)
    return GrayImage(a), GrayImage(b)


def ncc_search(prev, nxt, point, radius=8, reach=5, fine_step=0.05):
    """Displacement maximising normalised cross-correlation: integer grid, then a fine grid.

    The window is wider than the tracker's so the smooth test texture has
    curvature inside it; a 9x9 patch of it is close to a ramp.
    """
    r = np.arange(-radius, radius + 1, dtype=float)
    oy, ox = [a.ravel() for a in np.meshgrid(r, r, indexing="ij")]
    template = sample_bilinear(prev, point[0] + ox, point[1] + oy)
    template = (template - template.mean()) / template.std()

    def best(candidates):
        qx = point[0] + candidates[:, 0:1] + ox[None]
        qy = point[1] + candidates[:, 1:2] + oy[None]
        patches = sample_bilinear(nxt, qx, qy)
        patches = (patches - patches.mean(axis=1, keepdims=True)) / patches.std(axis=1, keepdims=True)
        return candidates[np.argmax(patches @ template)]

    coarse = np.arange(-reach, reach + 1, dtype=float)
    grid = np.array([(dx, dy) for dy in coarse for dx in coarse])
    start = best(grid)
    fine = np.arange(-1.0, 1.0 + 1e-9, fine_step)
    grid = np.array([(start[0] + dx, start[1] + dy) for dy in fine for dx in fine])
    return best(grid)


def test_pyramid_levels(textured):
    pyr = build_pyramid(textured, FlowConfig(pyramid_levels=3))
    assert pyr.num_levels == 3
    assert pyr.levels[1].shape == (48, 64)
    assert pyr.levels[2].shape == (24, 32)
    # 2x2 block averages
    assert pyr.levels[1][0, 0] == pytest.approx(textured.pixels[:2, :2].mean())


def test_pyramid_stops_before_window_outgrows_level():
    img = GrayImage(np.random.default_rng(0).uniform(size=(30, 30)))
    assert build_pyramid(img, FlowConfig(pyramid_levels=5)).num_levels == 2


def test_image_smaller_than_window():
    with pytest.raises(ImageTooSmall):
        build_pyramid(GrayImage(np.zeros((5, 5))), FlowConfig())


def test_zero_motion_tracks_in_place(textured, flow_cfg):
    pyr = build_pyramid(textured, flow_cfg)
    pts = np.array([[30.0, 40.0], [64.5, 50.25], [90.0, 20.0]])
    out, status = lk_track_points(pyr, pyr, pts, flow_cfg)
    assert np.all(status == TrackStatus.OK)
    assert_allclose(out, pts, atol=1e-6)


def test_lk_matches_ncc_oracle_on_subpixel_shifts(flow_cfg):
    rng = np.random.default_rng(99)
    within = total = 0
    oracle_err = []
    for seed in range(20):
        shift = rng.uniform(-4, 4, size=2)
        prev, nxt = image_pair(seed, shift)
        pts = rng.uniform(24, SIZE - 24, size=(10, 2))
        out, status = lk_track_points(build_pyramid(prev, flow_cfg), build_pyramid(nxt, flow_cfg), pts, flow_cfg)
        for p, q, st in zip(pts, out, status):
            oracle = ncc_search(prev.pixels, nxt.pixels, p)
            oracle_err.append(np.hypot(*(oracle - shift)))
            total += 1
            if st == TrackStatus.OK and np.hypot(*(q - p - shift)) < 0.1 and np.hypot(*(q - p - oracle)) < 0.15:
                within += 1
    assert np.median(oracle_err) < 0.05
    assert within >= 0.95 * total


def test_flat_image_is_lost(flow_cfg):
    flat = build_pyramid(GrayImage(np.full((64, 64), 0.5)), flow_cfg)
    _, status = lk_track_point(flat, flat, Point2(32, 32), flow_cfg)
    assert status == TrackStatus.LOST


def test_point_near_border_is_out_of_bounds(textured, flow_cfg):
    pyr = build_pyramid(textured, flow_cfg)
    _, status = lk_track_point(pyr, pyr, Point2(2.0, 40.0), flow_cfg)
    assert status == TrackStatus.OUT_OF_BOUNDS


def test_forward_backward_consistent_on_clean_shift(flow_cfg):
    prev, nxt = image_pair(5, (2.5, -1.25))
    pts = [Point2(40, 40), Point2(50, 60), Point2(60, 45)]
    results = track_forward_backward(prev, nxt, pts, flow_cfg)
    assert [r.status for r in results] == [FBStatus.OK] * 3
    for r in results:
        assert r.fb_error < 0.05
        assert r.forward_estimate.x - r.original.x == pytest.approx(2.5, abs=0.1)


def test_forward_backward_statuses_are_enum_members(flow_cfg):
    tex = wave_texture(np.random.default_rng(2), size=64)
    tex[:24, :24] = 0.5
    img = GrayImage(tex)
    results = track_forward_backward(img, img, [Point2(32, 32), Point2(1, 1), Point2(12, 12)], flow_cfg)
    assert results[0].status is FBStatus.OK
    assert results[0].fb_error == pytest.approx(0.0, abs=1e-6)
    assert results[1].status is FBStatus.OUT_OF_BOUNDS
    assert results[1].fb_error is None
    assert results[2].status is FBStatus.LOST_FORWARD


def test_coarse_weak_window_does_not_lose_point():
    # pixel noise: strong gradients at level 0, averaged nearly flat by level 2
    noise = GrayImage(np.random.default_rng(6).uniform(size=(96, 96)))
    cfg = FlowConfig(min_eigen_threshold=0.01)
    pyr = build_pyramid(noise, cfg)
    out, status = lk_track_points(pyr, pyr, np.array([[48.0, 48.0]]), cfg)
    assert status[0] == TrackStatus.OK
    assert_allclose(out[0], [48.0, 48.0], atol=1e-6)


def test_forward_backward_errors(textured, flow_cfg):
    other = GrayImage(np.zeros((50, 50)))
    with pytest.raises(DimensionMismatch):
        track_forward_backward(textured, other, [Point2(10, 10)], flow_cfg)
    with pytest.raises(EmptyPointList):
        track_forward_backward(textured, textured, [], flow_cfg)


def test_median_filter_keeps_at_or_below_median():
    err = np.array([0.1, 0.5, 0.2, np.nan, 0.4])
    ok = np.array([True, True, True, False, True])
    kept, median = median_filter(err, ok)
    assert median == pytest.approx(0.3)
    assert list(kept) == [0, 2]


def test_filter_by_median_drops_failed_points():
    def res(err, status=FBStatus.OK):
        p = Point2(0, 0)
        return FBResult(p, p, p, err, status)

    results = [res(0.3), res(None, FBStatus.LOST_FORWARD), res(0.1), res(0.2), res(None, FBStatus.OUT_OF_BOUNDS)]
    kept, median = filter_by_median(results)
    assert median == 0.2
    assert kept == [2, 3]
    with pytest.raises(NoValidPoints):
        filter_by_median([res(None, FBStatus.LOST_BACKWARD)])


def test_median_filter_rejects_corrupted_forward_tracks(flow_cfg):
    prev, nxt = image_pair(11, (3.0, 2.0))
    p_prev, p_next = build_pyramid(prev, flow_cfg), build_pyramid(nxt, flow_cfg)
    base = np.random.default_rng(0).uniform(30, SIZE - 30, size=(80, 2))
    fb = track_fb_arrays(p_prev, p_next, base, flow_cfg)
    assert fb.ok.sum() >= 60
    base, forward_clean = base[fb.ok], fb.forward[fb.ok]
    n = len(base)
    n_bad = 3 * n // 10

    excluded = corrupted_total = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        bad = rng.choice(n, size=n_bad, replace=False)
        forward = forward_clean.copy()
        angle = rng.uniform(0, 2 * np.pi, size=n_bad)
        length = rng.uniform(20, 60, size=n_bad)
        forward[bad] += np.column_stack([np.cos(angle), np.sin(angle)]) * length[:, None]

        back, status = lk_track_points(p_next, p_prev, forward, flow_cfg)
        ok = status == TrackStatus.OK
        err = np.where(ok, np.hypot(*(back - base).T), np.nan)
        kept, _ = median_filter(err, ok)
        excluded += np.setdiff1d(bad, kept).size
        corrupted_total += bad.size
    assert excluded >= 0.95 * corrupted_total
