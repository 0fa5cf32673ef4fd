"""JSON-lines result and ground-truth files, and landmark error evaluation.

A results file holds one FrameRecord per line followed by a single summary
line of the form {"summary": {"frames": ..., "status_counts": {...},
"timings": {stage: {"mean": ..., "median": ..., "p95": ...}}}}.
Keys are sorted so identical runs write identical bytes.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError, field_validator

from ..core import NUM_LANDMARKS, BoundingBox, LandmarkSet
from ..errors import IoError, UnreadableFile
from ..pipeline import STAGES, FrameResult, FrameStatus, RunReport, timing_summary
from .synthetic import GroundTruthFrame

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Box4 = Tuple[float, float, float, float]


def _check_landmarks(v):
    if v is not None and (len(v) != NUM_LANDMARKS or any(len(p) != 2 for p in v)):
        raise ValueError(f"landmarks must be {NUM_LANDMARKS} [x, y] pairs")
    return v


class FrameRecord(BaseModel):
    frame_index: int
    status: FrameStatus
    box: Optional[Box4] = None
    landmarks: Optional[List[Tuple[float, float]]] = None
    points_kept: int = 0
    timings: Dict[str, float]

    @field_validator("landmarks")
    @classmethod
    def _five_points(cls, v):
        return _check_landmarks(v)

    @classmethod
    def from_result(cls, result: FrameResult, timings: bool = True) -> "FrameRecord":
        return cls(
            frame_index=result.frame_index,
            status=result.status,
            box=result.box.as_tuple() if result.box is not None else None,
            landmarks=[tuple(map(float, p)) for p in result.landmarks.as_array()]
            if result.landmarks is not None else None,
            points_kept=result.points_kept,
            timings={k: (float(result.timings[k]) if timings else 0.0) for k in STAGES},
        )

    def to_result(self) -> FrameResult:
        return FrameResult(
            frame_index=self.frame_index,
            status=self.status,
            box=BoundingBox(*self.box) if self.box is not None else None,
            landmarks=LandmarkSet.from_array(self.landmarks) if self.landmarks is not None else None,
            timings=dict(self.timings),
            points_kept=self.points_kept,
        )


class TruthRecord(BaseModel):
    frame_index: int
    box: Optional[Box4] = None
    landmarks: Optional[List[Tuple[float, float]]] = None
    visible: bool = True

    @field_validator("landmarks")
    @classmethod
    def _five_points(cls, v):
        return _check_landmarks(v)

    @classmethod
    def from_truth(cls, gt: GroundTruthFrame) -> "TruthRecord":
        return cls(frame_index=gt.frame_index, box=gt.box.as_tuple(),
                   landmarks=[tuple(map(float, p)) for p in gt.landmarks.as_array()], visible=gt.visible)


def _dumps(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True)


def summary_record(records: Sequence[FrameRecord]) -> Dict[str, Any]:
    counts = dict.fromkeys((s.value for s in FrameStatus), 0)
    for r in records:
        counts[r.status.value] += 1
    table = timing_summary([r.to_result() for r in records])
    return {
        "frames": len(records),
        "status_counts": counts,
        "timings": {stage: {col: float(table.loc[stage, col]) for col in table.columns} for stage in STAGES},
    }


def _write_lines(path: PathLike, lines: List[str]) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
    except OSError as e:
        raise IoError(path, e.strerror or str(e)) from e


def write_results(results: Union[RunReport, Sequence[FrameResult]], path: PathLike, timings: bool = True) -> None:
    """Write one record per frame and the trailing summary line.

    With timings=False every timing is written as 0 so that two runs of the
    same input produce byte-identical files.
    """
    frames = results.results if isinstance(results, RunReport) else list(results)
    records = [FrameRecord.from_result(r, timings) for r in frames]
    lines = [_dumps(r.model_dump(mode="json")) for r in records]
    lines.append(_dumps({"summary": summary_record(records)}))
    _write_lines(path, lines)
    logger.info("Wrote %d frame records to %s", len(records), path)


def _read_lines(path: PathLike) -> List[Dict[str, Any]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UnreadableFile(path, e.strerror or str(e)) from e
    rows = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise UnreadableFile(path, f"line {n}: {e.msg}") from e
    return rows


def read_results(path: PathLike) -> Tuple[List[FrameRecord], Optional[Dict[str, Any]]]:
    records, summary = [], None
    for n, row in enumerate(_read_lines(path), start=1):
        if "summary" in row:
            summary = row["summary"]
            continue
        try:
            records.append(FrameRecord.model_validate(row))
        except ValidationError as e:
            raise UnreadableFile(path, f"record {n}: {e.errors()[0]['msg']}") from e
    return records, summary


def write_ground_truth(truth: Sequence[GroundTruthFrame], path: PathLike) -> None:
    _write_lines(path, [_dumps(TruthRecord.from_truth(gt).model_dump(mode="json")) for gt in truth])


def read_ground_truth(path: PathLike) -> List[TruthRecord]:
    out = []
    for n, row in enumerate(_read_lines(path), start=1):
        try:
            out.append(TruthRecord.model_validate(row))
        except ValidationError as e:
            raise UnreadableFile(path, f"record {n}: {e.errors()[0]['msg']}") from e
    return out


@dataclass
class EvalReport:
    per_frame: pd.DataFrame
    mean_error: float
    rms_error: float
    mean_normalized: float
    frames_evaluated: int
    frames_missed: int


def evaluate(records: Sequence[FrameRecord], truth: Sequence[TruthRecord]) -> EvalReport:
    """Landmark error of results against ground truth.

    Only frames with visible ground truth count. Frames where the method
    reported no landmarks are counted as missed and excluded from the
    error statistics. RMS is taken over all evaluated landmark distances.
    """
    by_index = {r.frame_index: r for r in records}
    rows = []
    dists = []
    missed = 0
    for gt in truth:
        if not gt.visible or gt.landmarks is None:
            continue
        rec = by_index.get(gt.frame_index)
        if rec is None or rec.landmarks is None:
            missed += 1
            continue
        d = np.linalg.norm(np.asarray(rec.landmarks) - np.asarray(gt.landmarks), axis=1)
        short = min(gt.box[2], gt.box[3]) if gt.box is not None else float("nan")
        dists.append(d)
        rows.append({"frame_index": gt.frame_index, "status": rec.status.value, "mean_error": float(d.mean()),
                     "max_error": float(d.max()), "normalized": float(d.mean() / short)})
    per_frame = pd.DataFrame(rows, columns=["frame_index", "status", "mean_error", "max_error", "normalized"])
    if not dists:
        return EvalReport(per_frame, float("nan"), float("nan"), float("nan"), 0, missed)
    all_d = np.concatenate(dists)
    return EvalReport(
        per_frame=per_frame,
        mean_error=float(all_d.mean()),
        rms_error=float(np.sqrt(np.mean(all_d ** 2))),
        mean_normalized=float(per_frame["normalized"].mean()),
        frames_evaluated=len(rows),
        frames_missed=missed,
    )


def compare_table(dtd: pd.DataFrame, baseline: pd.DataFrame) -> pd.DataFrame:
    """Per-stage medians and means of both methods side by side."""
    return pd.DataFrame({
        "dtd_median": dtd["median"], "baseline_median": baseline["median"],
        "dtd_mean": dtd["mean"], "baseline_mean": baseline["mean"],
    }).loc[list(STAGES)]


def speedup(dtd: pd.DataFrame, baseline: pd.DataFrame) -> float:
    """Ratio of median per-frame total times, baseline over DTD."""
    ours = float(dtd.loc["total", "median"])
    return float(baseline.loc["total", "median"]) / ours if ours > 0 else float("inf")
