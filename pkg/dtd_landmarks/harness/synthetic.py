"""Seeded synthetic face videos and training faces with analytic ground truth.

A face is a bright ellipse filling its (square) bounding box, with two dark
eye blobs, a mid-gray nose wedge and a dark mouth bar placed relative to the
five landmarks. Its texture is value noise in face coordinates, so it moves
and scales with the face; the background is value noise in frame coordinates
and stays put.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core import BoundingBox, GrayImage, LandmarkSet, normalized_to_landmarks
from ..errors import InvalidSpec
from ..landmark_net.augment import TrainingSample

logger = logging.getLogger(__name__)

# LE, RE, N, LM, RM in face-box units
BASE_LAYOUT = np.array([
    [7 / 24, 9.5 / 24],
    [17 / 24, 9.5 / 24],
    [0.5, 0.62],
    [8 / 24, 18.5 / 24],
    [16 / 24, 18.5 / 24],
])

SKIN = 0.78
DARK = 0.15
NOSE = 0.5
OCCLUDER = 0.45
FACE_RADII = (0.46, 0.5)
EYE_RADII = (0.08, 0.05)
MOUTH_HALF_HEIGHT = 0.03
NOSE_APEX_ABOVE = 0.12
NOSE_BASE_BELOW = 0.02
NOSE_HALF_BASE = 0.07

BACKGROUND_RANGE = (0.35, 0.6)
BACKGROUND_CELL = 96.0
BACKGROUND_FINE = (16.0, 0.03)
TEXTURE_OCTAVES = ((1 / 8, 0.06), (1 / 20, 0.03))


# -- noise -------------------------------------------------------------------

def _smooth(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def value_noise(xs: np.ndarray, ys: np.ndarray, lattice: np.ndarray, cell: float) -> np.ndarray:
    """Smoothstep-interpolated lattice values at (xs, ys); lattice node k sits at k * cell."""
    gx = np.clip(np.asarray(xs, dtype=np.float64) / cell, 0.0, lattice.shape[1] - 1.000001)
    gy = np.clip(np.asarray(ys, dtype=np.float64) / cell, 0.0, lattice.shape[0] - 1.000001)
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    fx = _smooth(gx - x0)
    fy = _smooth(gy - y0)
    top = lattice[y0, x0] * (1 - fx) + lattice[y0, x0 + 1] * fx
    bottom = lattice[y0 + 1, x0] * (1 - fx) + lattice[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bottom * fy


def _lattice(rng: np.random.Generator, extent: float, cell: float) -> np.ndarray:
    n = int(np.ceil(extent / cell)) + 2
    return rng.uniform(-1.0, 1.0, size=(n, n))


def render_background(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    extent = float(max(width, height))
    lo, hi = BACKGROUND_RANGE
    coarse = value_noise(xs, ys, _lattice(rng, extent, BACKGROUND_CELL), BACKGROUND_CELL)
    fine_cell, fine_amp = BACKGROUND_FINE
    fine = value_noise(xs, ys, _lattice(rng, extent, fine_cell), fine_cell)
    return lo + (hi - lo) * 0.5 * (coarse + 1.0) + fine_amp * fine


@dataclass(frozen=True, eq=False)
class FaceTexture:
    """Per-video face texture lattices, in face-box units."""

    octaves: Tuple[Tuple[np.ndarray, float, float], ...]  # (lattice, cell, amplitude)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "FaceTexture":
        return cls(tuple((_lattice(rng, 1.0, cell), cell, amp) for cell, amp in TEXTURE_OCTAVES))

    def sample(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.zeros(np.shape(u))
        for lattice, cell, amp in self.octaves:
            out += amp * value_noise(u, v, lattice, cell)
        return out


# -- face rendering ----------------------------------------------------------

def _coverage(distance_px: np.ndarray) -> np.ndarray:
    # about one pixel of soft edge
    return np.clip(0.5 - distance_px, 0.0, 1.0)


def _ellipse_distance(u, v, cu, cv, ru, rv, side):
    r = np.sqrt(((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2)
    return (r - 1.0) * min(ru, rv) * side


def render_face(canvas: np.ndarray, box: BoundingBox, layout: np.ndarray, texture: FaceTexture) -> None:
    """Composite a face into `canvas` in place; `layout` is (5, 2) in face-box units."""
    h, w = canvas.shape
    x0, x1 = max(int(np.floor(box.x)) - 1, 0), min(int(np.ceil(box.x2)) + 2, w)
    y0, y1 = max(int(np.floor(box.y)) - 1, 0), min(int(np.ceil(box.y2)) + 2, h)
    if x1 <= x0 or y1 <= y0:
        return
    side = box.w
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    u = (xs - box.x) / box.w
    v = (ys - box.y) / box.h

    face = SKIN + texture.sample(u, v)
    for cu, cv in layout[:2]:
        c = _coverage(_ellipse_distance(u, v, cu, cv, EYE_RADII[0], EYE_RADII[1], side))
        face = face * (1 - c) + DARK * c

    nu, nv = layout[2]
    apex, base = nv - NOSE_APEX_ABOVE, nv + NOSE_BASE_BELOW
    half = NOSE_HALF_BASE * np.clip((v - apex) / (base - apex), 0.0, None)
    nose_d = np.maximum(np.maximum(apex - v, v - base), np.abs(u - nu) - half) * side
    c = _coverage(nose_d)
    face = face * (1 - c) + NOSE * c

    (lu, lv), (ru, rv) = layout[3], layout[4]
    mu, mv, mhalf = (lu + ru) / 2, (lv + rv) / 2, (ru - lu) / 2
    mouth_d = np.maximum(np.abs(u - mu) - mhalf, np.abs(v - mv) - MOUTH_HALF_HEIGHT) * side
    c = _coverage(mouth_d)
    face = face * (1 - c) + DARK * c

    outline = _coverage(_ellipse_distance(u, v, 0.5, 0.5, FACE_RADII[0], FACE_RADII[1], side))
    region = canvas[y0:y1, x0:x1]
    canvas[y0:y1, x0:x1] = region * (1 - outline) + face * outline


# -- scenes ------------------------------------------------------------------

class TrajectorySample(BaseModel):
    model_config = ConfigDict(frozen=True)

    cx: float
    cy: float
    scale: float = Field(1.0, gt=0.0)


class Occlusion(BaseModel):
    """Flat rectangle drawn over frames start..end-1."""

    model_config = ConfigDict(frozen=True)

    start: int = Field(ge=0)
    end: int = Field(gt=0)
    x: float
    y: float
    w: float = Field(gt=0.0)
    h: float = Field(gt=0.0)

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, self.w, self.h)

    def active(self, frame: int) -> bool:
        return self.start <= frame < self.end


class SyntheticSceneSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_width: int = Field(1280, gt=0)
    frame_height: int = Field(720, gt=0)
    num_frames: int = Field(gt=0)
    face_size: float = Field(160.0, gt=0.0)
    trajectory: List[TrajectorySample]
    texture_seed: int = Field(0, ge=0)
    occlusions: List[Occlusion] = []
    allow_exits: bool = False


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_index: int
    box: BoundingBox
    landmarks: LandmarkSet
    visible: bool


def face_box(spec: SyntheticSceneSpec, sample: TrajectorySample) -> BoundingBox:
    side = spec.face_size * sample.scale
    return BoundingBox.from_center(sample.cx, sample.cy, side, side)


def check_scene(spec: SyntheticSceneSpec) -> None:
    if len(spec.trajectory) != spec.num_frames:
        raise InvalidSpec(f"Trajectory has {len(spec.trajectory)} samples for {spec.num_frames} frames")
    if spec.face_size < 24:
        raise InvalidSpec(f"Face size {spec.face_size} is below the 24 px detector window")
    for occ in spec.occlusions:
        if occ.end <= occ.start:
            raise InvalidSpec(f"Empty occlusion range {occ.start}..{occ.end}")
    if spec.allow_exits:
        return
    for t, sample in enumerate(spec.trajectory):
        box = face_box(spec, sample)
        margin = box.w
        if (box.x < margin or box.y < margin or box.x2 > spec.frame_width - margin
                or box.y2 > spec.frame_height - margin):
            raise InvalidSpec(f"Frame {t}: face {box.as_tuple()} is within one face width of the border")


def _visible(box: BoundingBox, frame: int, spec: SyntheticSceneSpec) -> bool:
    try:
        inside = BoundingBox(max(box.x, 0), max(box.y, 0),
                             min(box.x2, spec.frame_width) - max(box.x, 0),
                             min(box.y2, spec.frame_height) - max(box.y, 0))
    except ValueError:
        return False
    if inside.area < 0.5 * box.area:
        return False
    for occ in spec.occlusions:
        if occ.active(frame):
            o = occ.box
            iw = max(0.0, min(box.x2, o.x2) - max(box.x, o.x))
            ih = max(0.0, min(box.y2, o.y2) - max(box.y, o.y))
            if iw * ih >= 0.5 * box.area:
                return False
    return True


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so frames survive a PGM round trip unchanged."""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0


def generate_synthetic_video(spec: SyntheticSceneSpec) -> Tuple[List[GrayImage], List[GroundTruthFrame]]:
    check_scene(spec)
    rng = np.random.default_rng(spec.texture_seed)
    background = render_background(spec.frame_width, spec.frame_height, rng)
    texture = FaceTexture.random(rng)

    frames, truth = [], []
    for t, sample in enumerate(spec.trajectory):
        canvas = background.copy()
        box = face_box(spec, sample)
        render_face(canvas, box, BASE_LAYOUT, texture)
        for occ in spec.occlusions:
            if occ.active(t):
                ox0, oy0 = max(int(round(occ.x)), 0), max(int(round(occ.y)), 0)
                ox1 = min(int(round(occ.x + occ.w)), spec.frame_width)
                oy1 = min(int(round(occ.y + occ.h)), spec.frame_height)
                canvas[oy0:oy1, ox0:ox1] = OCCLUDER
        frames.append(GrayImage(quantize(canvas)))
        truth.append(GroundTruthFrame(t, box, normalized_to_landmarks(BASE_LAYOUT, box), _visible(box, t, spec)))
    logger.info("Generated %d synthetic %dx%d frames (seed %d)",
                spec.num_frames, spec.frame_width, spec.frame_height, spec.texture_seed)
    return frames, truth


# -- trajectories ------------------------------------------------------------

def static_trajectory(num_frames: int, cx: float, cy: float, scale: float = 1.0) -> List[TrajectorySample]:
    return [TrajectorySample(cx=cx, cy=cy, scale=scale)] * num_frames


def linear_trajectory(num_frames: int, start: Tuple[float, float], velocity: Tuple[float, float],
                      scale: float = 1.0) -> List[TrajectorySample]:
    return [TrajectorySample(cx=start[0] + velocity[0] * t, cy=start[1] + velocity[1] * t, scale=scale)
            for t in range(num_frames)]


def wandering_trajectory(num_frames: int, frame_width: int, frame_height: int, face_size: float,
                         seed: int = 0, max_step: float = 5.0,
                         scale_swing: float = 0.05) -> List[TrajectorySample]:
    """Smooth Lissajous-style path; per-frame motion stays below max_step px."""
    rng = np.random.default_rng(seed)
    reach = 1.5 * face_size * (1 + scale_swing) + 1.0
    ax = min(frame_width / 2 - reach, 200.0)
    ay = min(frame_height / 2 - reach, 100.0)
    if ax <= 0 or ay <= 0:
        raise InvalidSpec(f"A {face_size}px face cannot wander in a {frame_width}x{frame_height} frame")
    # each axis moves at most 0.7 * max_step per frame
    wx, wy = 0.7 * max_step / ax, 0.7 * max_step / ay
    px, py, ps = rng.uniform(0, 2 * np.pi, size=3)
    t = np.arange(num_frames)
    cx = frame_width / 2 + ax * np.sin(wx * t + px)
    cy = frame_height / 2 + ay * np.sin(wy * t + py)
    scale = 1.0 + scale_swing * np.sin(0.02 * t + ps)
    return [TrajectorySample(cx=float(a), cy=float(b), scale=float(s)) for a, b, s in zip(cx, cy, scale)]


def scene_spec(num_frames: int, seed: int = 0, frame_size: Tuple[int, int] = (1280, 720),
               face_size: float = 160.0, max_step: float = 5.0,
               occlusions: Optional[Sequence[Occlusion]] = None) -> SyntheticSceneSpec:
    w, h = frame_size
    return SyntheticSceneSpec(
        frame_width=w, frame_height=h, num_frames=num_frames, face_size=face_size,
        trajectory=wandering_trajectory(num_frames, w, h, face_size, seed, max_step),
        texture_seed=seed, occlusions=list(occlusions or []),
    )


def occluder_over(box: BoundingBox, start: int, end: int, pad: float = 0.3) -> Occlusion:
    b = box.scaled_about_center(1.0 + 2 * pad)
    return Occlusion(start=start, end=end, x=b.x, y=b.y, w=b.w, h=b.h)


# -- training faces ----------------------------------------------------------

def synthetic_training_samples(count: int, seed: int = 0, image_size: int = 64,
                               face_range: Tuple[float, float] = (36.0, 48.0),
                               layout_jitter: float = 0.02) -> List[TrainingSample]:
    """Single faces on small backgrounds, each with a slightly perturbed layout."""
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        side = rng.uniform(*face_range)
        cx, cy = rng.uniform(side / 2 + 2, image_size - side / 2 - 2, size=2)
        box = BoundingBox.from_center(float(cx), float(cy), float(side), float(side))
        layout = BASE_LAYOUT.copy()
        eye_dy = rng.uniform(-layout_jitter, layout_jitter)
        layout[0] += rng.uniform(-layout_jitter, layout_jitter, size=2) * (1, 0) + (0, eye_dy)
        layout[1] += rng.uniform(-layout_jitter, layout_jitter, size=2) * (1, 0) + (0, eye_dy)
        layout[2] += rng.uniform(-layout_jitter, layout_jitter, size=2)
        mouth = rng.uniform(-layout_jitter, layout_jitter, size=3)
        layout[3] += (mouth[0], mouth[2])
        layout[4] += (mouth[1], mouth[2])
        canvas = render_background(image_size, image_size, rng)
        render_face(canvas, box, layout, FaceTexture.random(rng))
        samples.append(TrainingSample(GrayImage(quantize(canvas)), box, normalized_to_landmarks(layout, box)))
    return samples
