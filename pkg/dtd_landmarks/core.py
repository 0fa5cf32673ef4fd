"""Geometric and raster primitives shared by the detector, tracker and network."""
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DegenerateBox, NoOverlap

LANDMARK_NAMES: Tuple[str, ...] = ("LE", "RE", "N", "LM", "RM")
NUM_LANDMARKS = len(LANDMARK_NAMES)

# Horizontal mirroring exchanges left/right labels; the nose maps to itself.
MIRROR_PERMUTATION: Tuple[int, ...] = (1, 0, 2, 4, 3)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel float64 raster, row-major, nominal range [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("GrayImage values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_uint8(cls, data: np.ndarray) -> "GrayImage":
        return cls(np.asarray(data, dtype=np.float64) / 255.0)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    @property
    def data(self) -> np.ndarray:
        return self.pixels.ravel()

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.pixels * 255.0), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"Point2 coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in frame coordinates; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"BoundingBox.{name} must be finite")
            object.__setattr__(self, name, value)
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBox(f"BoundingBox needs positive size, got w={self.w}, h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def short_side(self) -> float:
        return min(self.w, self.h)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def scaled_about_center(self, factor: float) -> "BoundingBox":
        cx, cy = self.center
        return BoundingBox.from_center(cx, cy, self.w * factor, self.h * factor)

    def sub_box(self, top: float, bottom: float) -> "BoundingBox":
        """Horizontal band of the box between fractional heights top..bottom."""
        return BoundingBox(self.x, self.y + top * self.h, self.w, (bottom - top) * self.h)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class LandmarkSet:
    """The five facial points, in LANDMARK_NAMES order, in frame coordinates."""

    points: Tuple[Point2, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        if len(pts) != NUM_LANDMARKS:
            raise ValueError(f"LandmarkSet needs exactly {NUM_LANDMARKS} points, got {len(pts)}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_array(cls, coords: Iterable[Sequence[float]]) -> "LandmarkSet":
        arr = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        return cls(tuple(Point2(float(x), float(y)) for x, y in arr))

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)

    def __getitem__(self, name: str) -> Point2:
        return self.points[LANDMARK_NAMES.index(name)]

    def translated(self, dx: float, dy: float) -> "LandmarkSet":
        return LandmarkSet.from_array(self.as_array() + np.array([dx, dy]))


def bbox_iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return float(inter / (a.area + b.area - inter))


def iou_matrix(boxes: np.ndarray) -> np.ndarray:
    """Pairwise IoU of an (N, 4) array of (x, y, w, h) rows."""
    x1, y1 = boxes[:, 0], boxes[:, 1]
    x2, y2 = x1 + boxes[:, 2], y1 + boxes[:, 3]
    iw = np.clip(np.minimum(x2[:, None], x2[None, :]) - np.maximum(x1[:, None], x1[None, :]), 0, None)
    ih = np.clip(np.minimum(y2[:, None], y2[None, :]) - np.maximum(y1[:, None], y1[None, :]), 0, None)
    inter = iw * ih
    area = boxes[:, 2] * boxes[:, 3]
    return inter / (area[:, None] + area[None, :] - inter)


def landmarks_to_normalized(lm: LandmarkSet, box: BoundingBox) -> np.ndarray:
    """Box-relative coordinates, shape (5, 2); the box spans [0, 1]²."""
    pts = lm.as_array()
    return (pts - np.array([box.x, box.y])) / np.array([box.w, box.h])


def normalized_to_landmarks(coords: np.ndarray, box: BoundingBox) -> LandmarkSet:
    coords = np.asarray(coords, dtype=np.float64).reshape(NUM_LANDMARKS, 2)
    return LandmarkSet.from_array(coords * np.array([box.w, box.h]) + np.array([box.x, box.y]))


def clamp_bbox(box: BoundingBox, frame_w: float, frame_h: float) -> BoundingBox:
    x1, y1 = max(box.x, 0.0), max(box.y, 0.0)
    x2, y2 = min(box.x2, float(frame_w)), min(box.y2, float(frame_h))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise NoOverlap(f"Box {box.as_tuple()} does not overlap the {frame_w}x{frame_h} frame")
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def in_bounds(shape: Tuple[int, int], xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """True where (x, y) can be sampled bilinearly without leaving the raster."""
    h, w = shape
    return (xs >= 0) & (ys >= 0) & (xs <= w - 1) & (ys <= h - 1)


def sample_bilinear(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear reads at arbitrary coordinates; callers check in_bounds first."""
    h, w = pixels.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = pixels[y0, x0] * (1.0 - fx) + pixels[y0, x1] * fx
    bottom = pixels[y1, x0] * (1.0 - fx) + pixels[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy
