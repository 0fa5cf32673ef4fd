"""Haar-cascade face detection: integral images, staged classifiers, multi-scale scan,
plus the global detection and local validation steps of the tracking loop.

Cascade models are declarative JSON files:

    {"base_window": 24,
     "stages": [{"threshold": 1.5,
                 "weak": [{"rects": [{"x": 5, "y": 8, "w": 14, "h": 3, "weight": -1.0}, ...],
                           "split": 0.03, "left": 0.0, "right": 1.0}, ...]}, ...]}

A weak classifier votes `left` when its normalised score is below `split` and
`right` otherwise; a stage passes when its vote sum reaches `threshold`.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from .config import DetectParams, ValidationConfig
from .core import BoundingBox, GrayImage, bbox_iou, clamp_bbox, iou_matrix
from .errors import EmptyImage, ModelFormatError, NoOverlap, OutOfBounds, RegionOutsideFrame

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6


class HaarRect(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    w: int = Field(gt=0)
    h: int = Field(gt=0)
    weight: float

    @property
    def area(self) -> int:
        return self.w * self.h


class HaarFeature(BaseModel):
    """Weighted rectangles in base-window units; weighted areas sum to zero."""

    rects: List[HaarRect] = Field(min_length=2, max_length=3)

    @model_validator(mode="after")
    def _zero_sum(self):
        total = sum(r.weight * r.area for r in self.rects)
        scale = sum(abs(r.weight) * r.area for r in self.rects)
        if abs(total) > 1e-9 * max(scale, 1.0):
            raise ValueError(f"feature weights do not sum to zero (weighted area {total})")
        return self


class WeakClassifier(HaarFeature):
    split: float
    left: float
    right: float


class Stage(BaseModel):
    threshold: float
    weak: List[WeakClassifier] = Field(min_length=1)


class CascadeModel(BaseModel):
    base_window: int = Field(gt=0)
    # windows flatter than this are rejected before the first stage
    min_window_std: float = Field(0.0, ge=0.0)
    stages: List[Stage] = Field(min_length=1)

    @model_validator(mode="after")
    def _rects_inside_window(self):
        for k, stage in enumerate(self.stages):
            for weak in stage.weak:
                for r in weak.rects:
                    if r.x + r.w > self.base_window or r.y + r.h > self.base_window:
                        raise ValueError(f"stage {k}: rect {r} leaves the {self.base_window}px base window")
        return self


def load_cascade(path: Union[str, Path]) -> CascadeModel:
    try:
        return CascadeModel.model_validate(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ModelFormatError(f"Error loading cascade model {path}: {e}") from e


def save_cascade(model: CascadeModel, path: Union[str, Path]) -> None:
    Path(path).write_text(model.model_dump_json(indent=2))


@dataclass(frozen=True, eq=False)
class IntegralImage:
    """Summed-area tables of the image and its square, shape (H+1, W+1)."""

    table: np.ndarray
    sq_table: np.ndarray

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1


def _summed_area(values: np.ndarray) -> np.ndarray:
    out = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(values, axis=0, dtype=np.float64), axis=1, out=out[1:, 1:])
    return out


def integral_image(img: Union[GrayImage, np.ndarray]) -> IntegralImage:
    pixels = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    if pixels.ndim != 2 or pixels.size == 0:
        raise EmptyImage(f"Cannot build an integral image from shape {pixels.shape}")
    return IntegralImage(table=_summed_area(pixels), sq_table=_summed_area(pixels * pixels))


def rect_sum(ii: IntegralImage, x: int, y: int, w: int, h: int) -> float:
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > ii.width or y + h > ii.height:
        raise OutOfBounds(f"Rectangle ({x}, {y}, {w}, {h}) is outside the {ii.width}x{ii.height} image")
    t = ii.table
    return float(t[y + h, x + w] - t[y, x + w] - t[y + h, x] + t[y, x])


# -- window evaluation -------------------------------------------------------

Lookup = Callable[[int, int], np.ndarray]


@dataclass(frozen=True)
class _ScaledWeak:
    rects: Tuple[Tuple[int, int, int, int, float], ...]  # x, y, w, h, coefficient
    split: float
    left: float
    right: float


def _scale_cascade(model: CascadeModel, size: int) -> List[Tuple[float, List[_ScaledWeak]]]:
    """Rects mapped onto a size x size window, each with coefficient w·a/(area'·B²)."""
    s = size / model.base_window
    norm = float(model.base_window ** 2)
    stages = []
    for stage in model.stages:
        weaks = []
        for weak in stage.weak:
            rects = []
            for r in weak.rects:
                x = min(int(round(r.x * s)), size - 1)
                y = min(int(round(r.y * s)), size - 1)
                w = min(max(1, int(round(r.w * s))), size - x)
                h = min(max(1, int(round(r.h * s))), size - y)
                rects.append((x, y, w, h, r.weight * r.area / (w * h * norm)))
            weaks.append(_ScaledWeak(tuple(rects), weak.split, weak.left, weak.right))
        stages.append((stage.threshold, weaks))
    return stages


def _box_sum(lookup: Lookup, x: int, y: int, w: int, h: int) -> np.ndarray:
    return lookup(x + w, y + h) - lookup(x, y + h) - lookup(x + w, y) + lookup(x, y)


def _window_sigma(lookup: Lookup, sq_lookup: Lookup, size: int) -> np.ndarray:
    n = float(size * size)
    mean = _box_sum(lookup, 0, 0, size, size) / n
    var = _box_sum(sq_lookup, 0, 0, size, size) / n - mean * mean
    return np.sqrt(np.maximum(var, 0.0))


def _stage_passes(lookup: Lookup, sigma: np.ndarray, threshold: float, weaks: List[_ScaledWeak]) -> np.ndarray:
    flat = sigma < SIGMA_FLOOR
    safe_sigma = np.where(flat, 1.0, sigma)
    votes = np.zeros(sigma.shape)
    for weak in weaks:
        num = sum(coef * _box_sum(lookup, x, y, w, h) for x, y, w, h, coef in weak.rects)
        score = np.where(flat, 0.0, num / safe_sigma)
        votes += np.where(score < weak.split, weak.left, weak.right)
    return votes >= threshold


def _reject_stages(ii: IntegralImage, xs: np.ndarray, ys: np.ndarray, size: int,
                   stages: List[Tuple[float, List[_ScaledWeak]]], first_stage: int = 0,
                   sigma: Optional[np.ndarray] = None, min_std: float = 0.0) -> np.ndarray:
    """Index of the first failing stage per window, -1 where every stage passes."""
    reject = np.full(xs.shape, -1, dtype=np.int64)
    alive = np.arange(xs.size)
    if sigma is None:
        sigma = _window_sigma(lambda dx, dy: ii.table[ys + dy, xs + dx],
                              lambda dx, dy: ii.sq_table[ys + dy, xs + dx], size)
    if first_stage == 0 and min_std > 0:
        flat = sigma < min_std
        reject[flat] = 0
        alive = alive[~flat]
    for k in range(first_stage, len(stages)):
        if alive.size == 0:
            break
        ax, ay = xs[alive], ys[alive]
        passed = _stage_passes(lambda dx, dy: ii.table[ay + dy, ax + dx], sigma[alive], *stages[k])
        reject[alive[~passed]] = k
        alive = alive[passed]
    return reject


@dataclass(frozen=True)
class WindowVerdict:
    passed: bool
    reject_stage: Optional[int] = None


def eval_window(ii: IntegralImage, model: CascadeModel, window: BoundingBox) -> WindowVerdict:
    x, y = int(round(window.x)), int(round(window.y))
    size, h = int(round(window.w)), int(round(window.h))
    if size != h:
        raise OutOfBounds(f"Windows must be square, got {window.w}x{window.h}")
    if x < 0 or y < 0 or x + size > ii.width or y + size > ii.height:
        raise OutOfBounds(f"Window {window.as_tuple()} is outside the {ii.width}x{ii.height} image")
    reject = _reject_stages(ii, np.array([x]), np.array([y]), size, _scale_cascade(model, size),
                            min_std=model.min_window_std)
    stage = int(reject[0])
    return WindowVerdict(passed=stage < 0, reject_stage=None if stage < 0 else stage)


# -- multi-scale scan --------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    neighbors: int


@dataclass(frozen=True, eq=False)
class ScanReport:
    detections: List[Detection]
    raw: np.ndarray            # (N, 4) passing windows, frame coordinates
    windows_evaluated: int
    region: BoundingBox

    @property
    def boxes(self) -> List[BoundingBox]:
        return [d.box for d in self.detections]


def window_sizes(min_size: int, scale_factor: float, limit: float) -> List[int]:
    sizes = []
    k = 0
    while True:
        size = int(round(min_size * scale_factor ** k))
        if size > limit:
            return sizes
        if not sizes or size != sizes[-1]:
            sizes.append(size)
        k += 1


def _scan_region(img: GrayImage, region: Optional[BoundingBox]) -> Tuple[int, int, int, int, BoundingBox]:
    target = region or BoundingBox(0.0, 0.0, float(img.width), float(img.height))
    try:
        clamped = clamp_bbox(target, img.width, img.height)
    except NoOverlap as e:
        raise RegionOutsideFrame(str(e)) from e
    x0, y0 = int(math.ceil(clamped.x - 1e-9)), int(math.ceil(clamped.y - 1e-9))
    x1, y1 = int(math.floor(clamped.x2 + 1e-9)), int(math.floor(clamped.y2 + 1e-9))
    return x0, y0, x1, y1, clamped


def group_detections(raw: np.ndarray, min_neighbors: int, min_iou: float) -> List[Detection]:
    """Connected components under IoU >= min_iou; each kept component becomes its mean box."""
    n = len(raw)
    if n == 0:
        return []
    parent = np.arange(n)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    linked = np.triu(iou_matrix(raw) >= min_iou, k=1)
    for i, k in zip(*np.nonzero(linked)):
        ri, rk = find(int(i)), find(int(k))
        if ri != rk:
            parent[max(ri, rk)] = min(ri, rk)

    roots = np.array([find(i) for i in range(n)])
    groups = []
    for root in np.unique(roots):
        members = raw[roots == root]
        if len(members) >= min_neighbors:
            mean = members.mean(axis=0)
            groups.append((len(members), int(root), Detection(BoundingBox(*mean), len(members))))
    groups.sort(key=lambda g: (-g[0], g[1]))
    return [g[2] for g in groups]


def scan(img: GrayImage, model: CascadeModel, params: DetectParams) -> ScanReport:
    """Multi-scale sliding-window scan of params.region (whole frame when unset).

    The integral image covers only the scan region. The first stage is
    evaluated on strided views of the whole window grid; later stages only on
    the survivors.
    """
    x0, y0, x1, y1, region = _scan_region(img, params.region)
    crop = img.pixels[y0:y1, x0:x1]
    raw: List[np.ndarray] = []
    evaluated = 0
    if crop.shape[0] < params.min_size or crop.shape[1] < params.min_size:
        return ScanReport([], np.zeros((0, 4)), 0, region)

    ii = integral_image(crop)
    ch, cw = crop.shape
    for size in window_sizes(params.min_size, params.scale_factor, min(cw, ch)):
        step = max(1, int(round(params.step_fraction * size)))
        nx = (cw - size) // step + 1
        ny = (ch - size) // step + 1
        evaluated += nx * ny
        stages = _scale_cascade(model, size)

        def grid(table: np.ndarray) -> Lookup:
            return lambda dx, dy: table[dy:dy + (ny - 1) * step + 1:step, dx:dx + (nx - 1) * step + 1:step]

        sigma = _window_sigma(grid(ii.table), grid(ii.sq_table), size)
        first = _stage_passes(grid(ii.table), sigma, *stages[0]) & (sigma >= model.min_window_std)
        iy, ix = np.nonzero(first)
        if iy.size == 0:
            continue
        xs, ys = ix * step, iy * step
        reject = _reject_stages(ii, xs, ys, size, stages, first_stage=1, sigma=sigma[iy, ix])
        hit = reject < 0
        if np.any(hit):
            boxes = np.empty((int(hit.sum()), 4))
            boxes[:, 0] = xs[hit] + x0
            boxes[:, 1] = ys[hit] + y0
            boxes[:, 2:] = size
            raw.append(boxes)

    raw_all = np.concatenate(raw) if raw else np.zeros((0, 4))
    detections = group_detections(raw_all, params.group_min_neighbors, params.group_iou)
    logger.debug("Scanned %d windows in region %s: %d raw, %d grouped",
                 evaluated, region.as_tuple(), len(raw_all), len(detections))
    return ScanReport(detections, raw_all, evaluated, region)


def detect_faces(img: GrayImage, model: CascadeModel, params: DetectParams) -> List[BoundingBox]:
    return scan(img, model, params).boxes


def detect_global(img: GrayImage, model: CascadeModel, params: DetectParams) -> Optional[BoundingBox]:
    detections = detect_faces(img, model, params.with_region(None))
    return detections[0] if detections else None


@dataclass(frozen=True)
class LocalValidation:
    validated: bool
    box: Optional[BoundingBox]
    region: Optional[BoundingBox]
    windows_evaluated: int
    best_iou: float


def local_region(img: GrayImage, est_box: BoundingBox, expand_factor: float) -> BoundingBox:
    return clamp_bbox(est_box.scaled_about_center(expand_factor), img.width, img.height)


def local_scan_params(params: DetectParams, region: BoundingBox, est_box: BoundingBox,
                      min_iou: float) -> DetectParams:
    """Restrict the scan to `region` and to window sizes that can still reach min_iou.

    A square window of side s overlaps est_box by at most s*s, so its IoU is
    at most s*s / area; smaller windows are skipped.
    """
    floor = int(math.floor(math.sqrt(min_iou * est_box.area)))
    return params.model_copy(update={"region": region, "min_size": max(params.min_size, floor)})


def validate_local(img: GrayImage, model: CascadeModel, params: DetectParams, est_box: BoundingBox,
                   validation: ValidationConfig = ValidationConfig()) -> LocalValidation:
    """Scan around the estimated box; Validated carries est_box itself, unchanged."""
    try:
        region = local_region(img, est_box, validation.expand_factor)
    except NoOverlap:
        return LocalValidation(False, None, None, 0, 0.0)
    report = scan(img, model, local_scan_params(params, region, est_box, validation.min_iou))
    best = max((bbox_iou(d.box, est_box) for d in report.detections), default=0.0)
    if best >= validation.min_iou:
        return LocalValidation(True, est_box, region, report.windows_evaluated, best)
    return LocalValidation(False, None, region, report.windows_evaluated, best)
