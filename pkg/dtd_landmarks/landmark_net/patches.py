"""Crop resampling and per-patch normalisation for network inputs."""
import numpy as np

from ..core import BoundingBox, GrayImage, in_bounds, sample_bilinear
from ..errors import DegenerateRegion

SIGMA_FLOOR = 1e-8


def sample_region(img: GrayImage, region: BoundingBox, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of `region` onto an out_h x out_w grid of pixel centres.

    Samples falling outside the frame read as 0.
    """
    if out_h <= 0 or out_w <= 0:
        raise DegenerateRegion(f"Output size {out_h}x{out_w} is empty")
    if (region.x2 <= 0 or region.y2 <= 0 or region.x >= img.width or region.y >= img.height):
        raise DegenerateRegion(f"Region {region.as_tuple()} misses the {img.width}x{img.height} frame")
    xs = region.x + (np.arange(out_w) + 0.5) * (region.w / out_w) - 0.5
    ys = region.y + (np.arange(out_h) + 0.5) * (region.h / out_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    inside = in_bounds(img.shape, gx, gy)
    out = np.zeros((out_h, out_w))
    out[inside] = sample_bilinear(img.pixels, gx[inside], gy[inside])
    return out


def normalize_patch(patch: np.ndarray) -> np.ndarray:
    sigma = patch.std()
    if sigma < SIGMA_FLOOR:
        return np.zeros_like(patch)
    return (patch - patch.mean()) / sigma


def extract_patch(img: GrayImage, region: BoundingBox, out_h: int, out_w: int) -> np.ndarray:
    """Zero-mean, unit-variance (out_h, out_w) network input for `region`."""
    return normalize_patch(sample_region(img, region, out_h, out_w))


def square_patch(center_x: float, center_y: float, half_size: float) -> BoundingBox:
    return BoundingBox(center_x - half_size, center_y - half_size, 2.0 * half_size, 2.0 * half_size)
