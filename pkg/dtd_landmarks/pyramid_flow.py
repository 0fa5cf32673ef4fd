"""Image pyramids, pyramidal Lucas-Kanade and forward-backward (median flow) filtering.

All point tracking is vectorised over the point set: one call tracks every
point through every pyramid level, so the per-frame cost does not grow with
Python-level loops over points.
"""
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import FlowConfig
from .core import GrayImage, Point2, in_bounds, sample_bilinear
from .errors import DimensionMismatch, EmptyPointList, ImageTooSmall, NoValidPoints

logger = logging.getLogger(__name__)


class TrackStatus(IntEnum):
    OK = 0
    LOST = 1
    OUT_OF_BOUNDS = 2


class FBStatus(str, Enum):
    OK = "Ok"
    LOST_FORWARD = "LostForward"
    LOST_BACKWARD = "LostBackward"
    OUT_OF_BOUNDS = "OutOfBounds"


@dataclass(frozen=True, eq=False)
class ImagePyramid:
    levels: Tuple[np.ndarray, ...]

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.levels[0].shape


@dataclass(frozen=True)
class FBResult:
    original: Point2
    forward_estimate: Point2
    backward_estimate: Point2
    fb_error: Optional[float]
    status: FBStatus


@dataclass(frozen=True, eq=False)
class FBArrays:
    """Array form of a forward-backward pass over N points."""

    original: np.ndarray      # (N, 2)
    forward: np.ndarray       # (N, 2)
    backward: np.ndarray      # (N, 2)
    fb_error: np.ndarray      # (N,), NaN where status is not Ok
    status: np.ndarray        # (N,) of FBStatus values

    @property
    def ok(self) -> np.ndarray:
        return self.status == np.asarray(FBStatus.OK, dtype=object)

    def to_results(self) -> List[FBResult]:
        out = []
        for i in range(len(self.status)):
            err = float(self.fb_error[i]) if self.status[i] == FBStatus.OK else None
            out.append(FBResult(
                original=Point2(*map(float, self.original[i])),
                forward_estimate=Point2(*map(float, self.forward[i])),
                backward_estimate=Point2(*map(float, self.backward[i])),
                fb_error=err,
                status=FBStatus(self.status[i]),
            ))
        return out


def _downsample(level: np.ndarray) -> np.ndarray:
    h, w = level.shape[0] // 2, level.shape[1] // 2
    return level[:2 * h, :2 * w].reshape(h, 2, w, 2).mean(axis=(1, 3))


def build_pyramid(img: GrayImage, cfg: FlowConfig) -> ImagePyramid:
    win = cfg.window_size
    if img.width < win or img.height < win:
        raise ImageTooSmall(f"{img.width}x{img.height} image cannot host a {win}x{win} window")
    levels = [img.pixels]
    while len(levels) < cfg.pyramid_levels:
        prev = levels[-1]
        if prev.shape[0] // 2 < win or prev.shape[1] // 2 < win:
            break
        nxt = _downsample(prev)
        nxt.setflags(write=False)
        levels.append(nxt)
    return ImagePyramid(tuple(levels))


def _window_offsets(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    r = np.arange(-radius, radius + 1, dtype=np.float64)
    oy, ox = np.meshgrid(r, r, indexing="ij")
    return ox.ravel(), oy.ravel()


def _window_fits(shape: Tuple[int, int], xs: np.ndarray, ys: np.ndarray, radius: int) -> np.ndarray:
    # half-pixel gradient reads reach 0.5 px beyond the window
    reach = radius + 0.5
    h, w = shape
    return (xs - reach >= 0) & (ys - reach >= 0) & (xs + reach <= w - 1) & (ys + reach <= h - 1)


def lk_track_points(prev: ImagePyramid, nxt: ImagePyramid, points: np.ndarray,
                    cfg: FlowConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Coarse-to-fine iterative LK for an (N, 2) array of points.

    Returns the tracked (N, 2) positions and an (N,) array of TrackStatus.
    Levels where a point's window does not fit are skipped and the current
    guess is propagated; level 0 always enforces the window margin. The
    texture gate only loses a point at level 0; at coarser levels a weak
    window just keeps the guess from above.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    status = np.full(n, TrackStatus.OK, dtype=np.int64)
    ox, oy = _window_offsets(cfg.window_radius)
    area = float(ox.size)
    num_levels = min(prev.num_levels, nxt.num_levels)

    status[~_window_fits(prev.shape, pts[:, 0], pts[:, 1], cfg.window_radius)] = TrackStatus.OUT_OF_BOUNDS

    guess = np.zeros((n, 2))
    for level in range(num_levels - 1, -1, -1):
        scale = float(2 ** level)
        img_i = prev.levels[level]
        img_j = nxt.levels[level]
        p = pts / scale
        usable = (status == TrackStatus.OK) & _window_fits(img_i.shape, p[:, 0], p[:, 1], cfg.window_radius)
        idx = np.nonzero(usable)[0]
        if idx.size:
            px = p[idx, 0:1] + ox[None, :]
            py = p[idx, 1:2] + oy[None, :]
            template = sample_bilinear(img_i, px, py)
            ix = sample_bilinear(img_i, px + 0.5, py) - sample_bilinear(img_i, px - 0.5, py)
            iy = sample_bilinear(img_i, px, py + 0.5) - sample_bilinear(img_i, px, py - 0.5)
            gxx = np.sum(ix * ix, axis=1)
            gxy = np.sum(ix * iy, axis=1)
            gyy = np.sum(iy * iy, axis=1)
            min_eig = 0.5 * (gxx + gyy - np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy * gxy))
            weak = min_eig / area < cfg.min_eigen_threshold
            if level == 0:
                status[idx[weak]] = TrackStatus.LOST

            keep = ~weak
            idx, px, py = idx[keep], px[keep], py[keep]
            template, ix, iy = template[keep], ix[keep], iy[keep]
            gxx, gxy, gyy = gxx[keep], gxy[keep], gyy[keep]
            det = gxx * gyy - gxy * gxy

            v = np.zeros((idx.size, 2))
            done = np.zeros(idx.size, dtype=bool)
            for _ in range(cfg.max_iterations):
                live = np.nonzero(~done)[0]
                if live.size == 0:
                    break
                shift = guess[idx[live]] + v[live]
                qx = px[live] + shift[:, 0:1]
                qy = py[live] + shift[:, 1:2]
                inside = np.all(in_bounds(img_j.shape, qx, qy), axis=1)
                if not np.all(inside):
                    gone = live[~inside]
                    if level == 0:
                        status[idx[gone]] = TrackStatus.OUT_OF_BOUNDS
                    done[gone] = True
                    live, qx, qy = live[inside], qx[inside], qy[inside]
                    if live.size == 0:
                        break
                diff = template[live] - sample_bilinear(img_j, qx, qy)
                bx = np.sum(diff * ix[live], axis=1)
                by = np.sum(diff * iy[live], axis=1)
                d = det[live]
                ex = (gyy[live] * bx - gxy[live] * by) / d
                ey = (gxx[live] * by - gxy[live] * bx) / d
                v[live, 0] += ex
                v[live, 1] += ey
                done[live[np.hypot(ex, ey) < cfg.epsilon]] = True
            guess[idx] += v
        if level > 0:
            guess *= 2.0

    return pts + guess, status


def lk_track_point(prev: ImagePyramid, nxt: ImagePyramid, p: Point2,
                   cfg: FlowConfig) -> Tuple[Point2, TrackStatus]:
    out, status = lk_track_points(prev, nxt, np.array([[p.x, p.y]]), cfg)
    return Point2(float(out[0, 0]), float(out[0, 1])), TrackStatus(int(status[0]))


def _mark(status: np.ndarray, idx: np.ndarray, value: FBStatus) -> None:
    for i in idx:
        status[i] = value


def track_fb_arrays(prev: ImagePyramid, nxt: ImagePyramid, points: np.ndarray,
                    cfg: FlowConfig) -> FBArrays:
    """Forward-backward pass over prebuilt pyramids (reused across all points)."""
    if prev.shape != nxt.shape:
        raise DimensionMismatch(f"Frames differ in size: {prev.shape} vs {nxt.shape}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyPointList("No points to track")

    forward, fwd_status = lk_track_points(prev, nxt, pts, cfg)
    # object array of enum members; np.full would coerce the str enum to plain text
    status = np.empty(len(pts), dtype=object)
    _mark(status, np.arange(len(pts)), FBStatus.OK)
    _mark(status, np.nonzero(fwd_status == TrackStatus.LOST)[0], FBStatus.LOST_FORWARD)
    _mark(status, np.nonzero(fwd_status == TrackStatus.OUT_OF_BOUNDS)[0], FBStatus.OUT_OF_BOUNDS)

    backward = pts.copy()
    fb_error = np.full(len(pts), np.nan)
    fwd_ok = np.nonzero(fwd_status == TrackStatus.OK)[0]
    if fwd_ok.size:
        back, back_status = lk_track_points(nxt, prev, forward[fwd_ok], cfg)
        backward[fwd_ok] = back
        _mark(status, fwd_ok[back_status == TrackStatus.LOST], FBStatus.LOST_BACKWARD)
        _mark(status, fwd_ok[back_status == TrackStatus.OUT_OF_BOUNDS], FBStatus.OUT_OF_BOUNDS)
        ok = fwd_ok[back_status == TrackStatus.OK]
        fb_error[ok] = np.hypot(*(pts[ok] - backward[ok]).T)

    return FBArrays(original=pts, forward=forward, backward=backward, fb_error=fb_error, status=status)


def track_forward_backward(prev: GrayImage, nxt: GrayImage, points: Sequence[Point2],
                           cfg: FlowConfig) -> List[FBResult]:
    if prev.shape != nxt.shape:
        raise DimensionMismatch(f"Frames differ in size: {prev.shape} vs {nxt.shape}")
    if len(points) == 0:
        raise EmptyPointList("No points to track")
    arr = np.array([[p.x, p.y] for p in points], dtype=np.float64)
    return track_fb_arrays(build_pyramid(prev, cfg), build_pyramid(nxt, cfg), arr, cfg).to_results()


def median_filter(fb_error: np.ndarray, ok: np.ndarray) -> Tuple[np.ndarray, float]:
    """Indices of Ok points whose FB error is at most the median Ok error."""
    valid = np.nonzero(ok)[0]
    if valid.size == 0:
        raise NoValidPoints("No point survived forward-backward tracking")
    median = float(np.median(fb_error[valid]))
    kept = valid[fb_error[valid] <= median]
    return kept, median


def filter_by_median(results: Sequence[FBResult]) -> Tuple[List[int], float]:
    ok = np.array([r.status == FBStatus.OK for r in results], dtype=bool)
    err = np.array([r.fb_error if r.fb_error is not None else np.nan for r in results], dtype=np.float64)
    kept, median = median_filter(err, ok)
    logger.debug("Median FB error %.4f px, kept %d of %d", median, kept.size, len(results))
    return [int(i) for i in kept], median
