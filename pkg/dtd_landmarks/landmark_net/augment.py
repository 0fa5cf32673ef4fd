"""Training-set augmentation: small rotations and horizontal mirroring."""
import math
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from ..core import MIRROR_PERMUTATION, BoundingBox, GrayImage, LandmarkSet, in_bounds, sample_bilinear

ROTATION_DEGREES = 5.0


@dataclass(frozen=True, eq=False)
class TrainingSample:
    image: GrayImage
    box: BoundingBox
    landmarks: LandmarkSet


def _rotation(degrees: float) -> np.ndarray:
    # positive angles turn clockwise on screen (y axis points down)
    t = math.radians(degrees)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def _image_center(img: GrayImage) -> np.ndarray:
    return np.array([(img.width - 1) / 2.0, (img.height - 1) / 2.0])


def rotate_points(points: np.ndarray, img: GrayImage, degrees: float) -> np.ndarray:
    c = _image_center(img)
    return (points - c) @ _rotation(degrees).T + c


def rotate_sample(sample: TrainingSample, degrees: float) -> TrainingSample:
    """Rotate image and landmarks about the image centre; the box keeps its size and follows its centre."""
    img = sample.image
    c = _image_center(img)
    ys, xs = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    # inverse map every output pixel back into the source
    inv = _rotation(-degrees)
    sx = inv[0, 0] * (xs - c[0]) + inv[0, 1] * (ys - c[1]) + c[0]
    sy = inv[1, 0] * (xs - c[0]) + inv[1, 1] * (ys - c[1]) + c[1]
    inside = in_bounds(img.shape, sx, sy)
    out = np.zeros(img.shape)
    out[inside] = sample_bilinear(img.pixels, sx[inside], sy[inside])

    cx, cy = rotate_points(np.array([sample.box.center]), img, degrees)[0]
    box = BoundingBox.from_center(cx, cy, sample.box.w, sample.box.h)
    lm = LandmarkSet.from_array(rotate_points(sample.landmarks.as_array(), img, degrees))
    return TrainingSample(GrayImage(out), box, lm)


def mirror_sample(sample: TrainingSample) -> TrainingSample:
    """Horizontal flip; left/right eye and mouth-corner labels swap."""
    img = sample.image
    edge = img.width - 1
    box = BoundingBox(edge - sample.box.x2, sample.box.y, sample.box.w, sample.box.h)
    pts = sample.landmarks.as_array()
    pts[:, 0] = edge - pts[:, 0]
    lm = LandmarkSet.from_array(pts[list(MIRROR_PERMUTATION)])
    return TrainingSample(GrayImage(img.pixels[:, ::-1]), box, lm)


def augment(img: GrayImage, box: BoundingBox, lm: LandmarkSet) -> List[TrainingSample]:
    """Six samples: the original followed by five derived ones.

    Derived, in order: rotated +5 and -5 degrees, the mirror of each rotation,
    and the mirror of the original. A mirrored original rotated by either
    angle equals the mirror of the opposite rotation, so no further distinct
    sample exists.
    """
    original = TrainingSample(img, box, lm)
    plus = rotate_sample(original, ROTATION_DEGREES)
    minus = rotate_sample(original, -ROTATION_DEGREES)
    return [original, plus, minus, mirror_sample(plus), mirror_sample(minus), mirror_sample(original)]


def expand_dataset(samples: Iterable[TrainingSample]) -> List[TrainingSample]:
    out: List[TrainingSample] = []
    for s in samples:
        out.extend(augment(s.image, s.box, s.landmarks))
    return out
