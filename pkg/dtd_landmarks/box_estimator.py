"""Tracking point cloud around the landmarks, and median-based box/landmark estimation."""
import logging
from dataclasses import dataclass

import numpy as np

from .core import (NUM_LANDMARKS, BoundingBox, LandmarkSet, landmarks_to_normalized,
                   normalized_to_landmarks)
from .errors import DegenerateBox, InsufficientSupport

logger = logging.getLogger(__name__)

POINTS_PER_LANDMARK = 16
# 4x4 grid in units of the spacing s; symmetric, so each group's centroid is its landmark
GRID_OFFSETS = np.array([(dx, dy) for dy in (-1.5, -0.5, 0.5, 1.5) for dx in (-1.5, -0.5, 0.5, 1.5)])
DEGENERATE_DISTANCE = 1e-6


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray          # (80, 2)
    owner_landmark: np.ndarray  # (80,), values 0..4

    def __len__(self) -> int:
        return len(self.points)

    def group(self, landmark: int) -> np.ndarray:
        return self.points[self.owner_landmark == landmark]


@dataclass(frozen=True)
class BoxEstimate:
    box: BoundingBox
    dx: float
    dy: float
    scale: float
    support: int


def generate_grid_points(lm: LandmarkSet, box: BoundingBox, grid_fraction: float = 0.05) -> PointCloud:
    spacing = grid_fraction * min(box.w, box.h)
    if spacing <= 0:
        raise DegenerateBox(f"Grid spacing {spacing} from box {box.as_tuple()}")
    centers = lm.as_array()
    points = (centers[:, None, :] + spacing * GRID_OFFSETS[None, :, :]).reshape(-1, 2)
    owner = np.repeat(np.arange(NUM_LANDMARKS), POINTS_PER_LANDMARK)
    return PointCloud(points=points, owner_landmark=owner)


def median_scale(prev: np.ndarray, curr: np.ndarray) -> float:
    """Median ratio of pairwise distances, skipping near-coincident previous pairs."""
    i, j = np.triu_indices(len(prev), k=1)
    d_prev = np.hypot(*(prev[i] - prev[j]).T)
    d_curr = np.hypot(*(curr[i] - curr[j]).T)
    usable = d_prev >= DEGENERATE_DISTANCE
    if not np.any(usable):
        return 1.0
    return float(np.median(d_curr[usable] / d_prev[usable]))


def estimate_box(prev_box: BoundingBox, prev_points: np.ndarray, curr_points: np.ndarray,
                 min_support: int = 8) -> BoxEstimate:
    """New box from matched (prev, curr) point pairs, given as two (N, 2) arrays."""
    prev = np.asarray(prev_points, dtype=np.float64).reshape(-1, 2)
    curr = np.asarray(curr_points, dtype=np.float64).reshape(-1, 2)
    if len(prev) != len(curr):
        raise ValueError(f"Unpaired points: {len(prev)} previous vs {len(curr)} current")
    if len(prev) < min_support:
        raise InsufficientSupport(f"{len(prev)} point pairs, need at least {min_support}")

    dx = float(np.median(curr[:, 0] - prev[:, 0]))
    dy = float(np.median(curr[:, 1] - prev[:, 1]))
    scale = median_scale(prev, curr)
    if not np.isfinite(scale) or scale <= 0:
        raise InsufficientSupport(f"Degenerate scale estimate {scale}")

    cx, cy = prev_box.center
    box = BoundingBox.from_center(cx + dx, cy + dy, prev_box.w * scale, prev_box.h * scale)
    return BoxEstimate(box=box, dx=dx, dy=dy, scale=scale, support=len(prev))


def estimate_landmarks(prev_lm: LandmarkSet, prev_box: BoundingBox, new_box: BoundingBox) -> LandmarkSet:
    return normalized_to_landmarks(landmarks_to_normalized(prev_lm, prev_box), new_box)
