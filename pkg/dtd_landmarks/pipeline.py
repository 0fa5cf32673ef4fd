"""Detection-tracking-detection loop over a video, and the frame-by-frame baseline."""
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import pandas as pd

from .box_estimator import estimate_box, generate_grid_points
from .config import PipelineSettings
from .core import BoundingBox, GrayImage, LandmarkSet
from .errors import ContractError, DimensionMismatch, EmptySequence, ImageTooSmall, InsufficientSupport, NoValidPoints
from .face_detector import CascadeModel, detect_global, validate_local
from .landmark_net import LandmarkCascade
from .pyramid_flow import ImagePyramid, build_pyramid, median_filter, track_fb_arrays

logger = logging.getLogger(__name__)

STAGES: Tuple[str, ...] = ("track", "box_estimate", "local_detect", "global_detect", "landmark_net", "total")


class Mode(str, Enum):
    UNINITIALIZED = "Uninitialized"
    TRACKING = "Tracking"
    LOST = "Lost"


class FrameStatus(str, Enum):
    DETECTED_GLOBAL = "DetectedGlobal"
    TRACKED_VALIDATED = "TrackedValidated"
    RECOVERED_GLOBAL = "RecoveredGlobal"
    LOST = "Lost"


@dataclass
class PipelineState:
    frame_index: int = 0
    box: Optional[BoundingBox] = None
    landmarks: Optional[LandmarkSet] = None
    prev_image: Optional[GrayImage] = None
    mode: Mode = Mode.UNINITIALIZED
    lost_streak: int = 0
    prev_pyramid: Optional[ImagePyramid] = None

    def check(self) -> None:
        if self.mode == Mode.TRACKING:
            if self.box is None or self.landmarks is None or self.prev_image is None:
                raise ContractError("Tracking state without box, landmarks and previous frame")
            if self.lost_streak != 0:
                raise ContractError(f"Tracking state with lost_streak {self.lost_streak}")


@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    status: FrameStatus
    box: Optional[BoundingBox] = None
    landmarks: Optional[LandmarkSet] = None
    timings: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))
    points_kept: int = 0


class StageClock:
    """Accumulates wall-clock milliseconds per named stage."""

    def __init__(self):
        self.timings = dict.fromkeys(STAGES, 0.0)
        self._start = time.perf_counter()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] += (time.perf_counter() - t0) * 1000.0

    def finish(self) -> Dict[str, float]:
        self.timings["total"] = (time.perf_counter() - self._start) * 1000.0
        return dict(self.timings)


def _check_dims(first: Optional[Tuple[int, int]], img: GrayImage, index: int) -> Tuple[int, int]:
    if first is not None and img.shape != first:
        raise DimensionMismatch(f"Frame {index} is {img.width}x{img.height}, "
                                f"expected {first[1]}x{first[0]}")
    return img.shape


def timing_summary(results: List[FrameResult]) -> pd.DataFrame:
    """Mean, median and 95th percentile per stage, in milliseconds."""
    if not results:
        return pd.DataFrame(0.0, index=list(STAGES), columns=["mean", "median", "p95"])
    df = pd.DataFrame([r.timings for r in results], columns=list(STAGES))
    return pd.DataFrame({"mean": df.mean(), "median": df.median(), "p95": df.quantile(0.95)})


@dataclass
class RunReport:
    results: List[FrameResult]
    summary: pd.DataFrame

    def status_counts(self) -> Dict[str, int]:
        counts = dict.fromkeys((s.value for s in FrameStatus), 0)
        for r in self.results:
            counts[r.status.value] += 1
        return counts


class _Detector:
    """Global detection followed by landmark prediction; shared by both methods."""

    def __init__(self, face_model: CascadeModel, landmarks: LandmarkCascade, settings: PipelineSettings):
        self.face_model = face_model
        self.landmarks = landmarks
        self.settings = settings

    def detect_and_predict(self, img: GrayImage, clock: StageClock) -> Tuple[Optional[BoundingBox],
                                                                              Optional[LandmarkSet]]:
        with clock.stage("global_detect"):
            box = detect_global(img, self.face_model, self.settings.detect)
        if box is None:
            return None, None
        with clock.stage("landmark_net"):
            lm = self.landmarks.predict(img, box)
        return box, lm


class DTDPipeline(_Detector):
    """One video stream: detect once, then track, validate locally and re-detect landmarks."""

    def __init__(self, face_model: CascadeModel, landmarks: LandmarkCascade,
                 settings: Optional[PipelineSettings] = None):
        super().__init__(face_model, landmarks, settings or PipelineSettings())
        self.state = PipelineState()

    def reset(self) -> None:
        self.state = PipelineState()

    def _enter_tracking(self, img: GrayImage, box: BoundingBox, lm: LandmarkSet,
                        pyramid: Optional[ImagePyramid]) -> None:
        s = self.state
        s.box, s.landmarks, s.prev_image, s.prev_pyramid = box, lm, img, pyramid
        s.mode = Mode.TRACKING
        s.lost_streak = 0

    def _mark_lost(self, img: GrayImage) -> None:
        s = self.state
        if s.mode == Mode.TRACKING:
            s.mode = Mode.LOST
        s.lost_streak += 1
        s.prev_image, s.prev_pyramid = img, None

    def _global_only(self, img: GrayImage, clock: StageClock, pyramid: Optional[ImagePyramid] = None) -> FrameResult:
        index = self.state.frame_index
        fresh = self.state.mode == Mode.UNINITIALIZED
        box, lm = self.detect_and_predict(img, clock)
        if box is None:
            self._mark_lost(img)
            return FrameResult(index, FrameStatus.LOST, timings=clock.finish())
        status = FrameStatus.DETECTED_GLOBAL if fresh else FrameStatus.RECOVERED_GLOBAL
        if not fresh:
            logger.info("Frame %d: face recovered by global detection", index)
        self._enter_tracking(img, box, lm, pyramid)
        return FrameResult(index, status, box, lm, clock.finish())

    def process_first_frame(self, img: GrayImage) -> FrameResult:
        if self.state.mode != Mode.UNINITIALIZED:
            raise ContractError(f"process_first_frame called in mode {self.state.mode.value}")
        clock = StageClock()
        result = self._global_only(img, clock)
        if result.status == FrameStatus.DETECTED_GLOBAL:
            logger.info("Frame %d: face detected at %s", result.frame_index, result.box.as_tuple())
        self.state.frame_index += 1
        self.state.check()
        return result

    def _track(self, img: GrayImage, clock: StageClock) -> Tuple[Optional[BoundingBox], int, Optional[ImagePyramid]]:
        """Steps 1-4: grid points, forward-backward flow, median filter, box estimate."""
        s = self.state
        cfg = self.settings
        try:
            with clock.stage("track"):
                if s.prev_pyramid is None:
                    s.prev_pyramid = build_pyramid(s.prev_image, cfg.flow)
                pyramid = build_pyramid(img, cfg.flow)
                cloud = generate_grid_points(s.landmarks, s.box, cfg.tracking.grid_fraction)
                fb = track_fb_arrays(s.prev_pyramid, pyramid, cloud.points, cfg.flow)
            with clock.stage("box_estimate"):
                kept, _ = median_filter(fb.fb_error, fb.ok)
                est = estimate_box(s.box, fb.original[kept], fb.forward[kept], cfg.tracking.min_support)
        except (NoValidPoints, InsufficientSupport, ImageTooSmall) as e:
            logger.debug("Frame %d: tracking failed: %s", s.frame_index, e)
            return None, 0, None
        return est.box, len(kept), pyramid

    def process_next_frame(self, img: GrayImage) -> FrameResult:
        s = self.state
        index = s.frame_index
        clock = StageClock()
        if s.mode != Mode.TRACKING:
            result = self._global_only(img, clock)
            s.frame_index += 1
            s.check()
            return result

        est_box, kept, pyramid = self._track(img, clock)
        if est_box is not None:
            # 5. local validation around the estimated box
            with clock.stage("local_detect"):
                check = validate_local(img, self.face_model, self.settings.detect, est_box, self.settings.validation)
            if check.validated:
                # 6. landmarks re-detected on the validated box seed the next frame
                with clock.stage("landmark_net"):
                    lm = self.landmarks.predict(img, check.box)
                self._enter_tracking(img, check.box, lm, pyramid)
                s.frame_index += 1
                return FrameResult(index, FrameStatus.TRACKED_VALIDATED, check.box, lm, clock.finish(), kept)
            logger.debug("Frame %d: local validation failed (best IoU %.2f)", index, check.best_iou)

        logger.info("Frame %d: tracking lost, falling back to global detection", index)
        result = self._global_only(img, clock, pyramid)
        if result.status == FrameStatus.LOST:
            logger.info("Frame %d: no face found (lost for %d frames)", index, s.lost_streak)
        s.frame_index += 1
        s.check()
        return result

    def run(self, frames: Iterable[GrayImage]) -> RunReport:
        results: List[FrameResult] = []
        dims = None
        for img in frames:
            dims = _check_dims(dims, img, len(results))
            if not results:
                results.append(self.process_first_frame(img))
            else:
                results.append(self.process_next_frame(img))
            logger.debug("Frame %d timings %s", results[-1].frame_index, results[-1].timings)
        if not results:
            raise EmptySequence("No frames to process")
        return RunReport(results, timing_summary(results))


class FrameByFrameBaseline(_Detector):
    """Global detection and landmark prediction on every frame, no tracking state."""

    def __init__(self, face_model: CascadeModel, landmarks: LandmarkCascade,
                 settings: Optional[PipelineSettings] = None):
        super().__init__(face_model, landmarks, settings or PipelineSettings())

    def process_frame(self, img: GrayImage, index: int) -> FrameResult:
        clock = StageClock()
        box, lm = self.detect_and_predict(img, clock)
        if box is None:
            return FrameResult(index, FrameStatus.LOST, timings=clock.finish())
        return FrameResult(index, FrameStatus.DETECTED_GLOBAL, box, lm, clock.finish())

    def run(self, frames: Iterable[GrayImage]) -> RunReport:
        results: List[FrameResult] = []
        dims = None
        for img in frames:
            dims = _check_dims(dims, img, len(results))
            results.append(self.process_frame(img, len(results)))
        if not results:
            raise EmptySequence("No frames to process")
        return RunReport(results, timing_summary(results))


def run_dtd(frames: Iterable[GrayImage], face_model: CascadeModel, landmarks: LandmarkCascade,
            settings: Optional[PipelineSettings] = None) -> RunReport:
    return DTDPipeline(face_model, landmarks, settings).run(frames)


def run_baseline_frame_by_frame(frames: Iterable[GrayImage], face_model: CascadeModel,
                                landmarks: LandmarkCascade,
                                settings: Optional[PipelineSettings] = None) -> RunReport:
    return FrameByFrameBaseline(face_model, landmarks, settings).run(frames)
