"""Command-line entry point: run, baseline, compare, synth, eval and train."""
import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..config import PipelineSettings, load_settings
from ..core import BoundingBox, GrayImage
from ..errors import ConfigError, DTDError
from ..face_detector import CascadeModel, load_cascade, save_cascade
from ..landmark_net import LandmarkCascade, TrainingHyper, load_architecture, load_weights, save_architecture, \
    save_weights, train_cascade
from ..pipeline import FrameByFrameBaseline, RunReport, run_baseline_frame_by_frame, run_dtd
from .fixtures import default_cascade_spec, layout_prior_weights, synthetic_face_cascade, toy_cascade_spec
from .frames_io import annotate, load_frames, save_frames, write_pgm
from .plotting import plot_stage_timings
from .results import compare_table, evaluate, read_ground_truth, read_results, speedup, write_ground_truth, \
    write_results
from .synthetic import face_box, generate_synthetic_video, occluder_over, scene_spec, synthetic_training_samples

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# flag -> (settings section, field, type)
OVERRIDES = {
    "lk_window_radius": ("flow", "window_radius", int),
    "lk_levels": ("flow", "pyramid_levels", int),
    "lk_max_iter": ("flow", "max_iterations", int),
    "lk_epsilon": ("flow", "epsilon", float),
    "lk_min_eigen": ("flow", "min_eigen_threshold", float),
    "min_face": ("detect", "min_size", int),
    "scale_factor": ("detect", "scale_factor", float),
    "step_fraction": ("detect", "step_fraction", float),
    "min_neighbors": ("detect", "group_min_neighbors", int),
    "group_iou": ("detect", "group_iou", float),
    "grid_fraction": ("tracking", "grid_fraction", float),
    "min_support": ("tracking", "min_support", int),
    "expand_factor": ("validation", "expand_factor", float),
    "validate_iou": ("validation", "min_iou", float),
}

SYNTH_FILES = {
    "frames": "frames",
    "truth": "truth.jsonl",
    "cascade": "cascade.json",
    "weights": "weights.dtdw",
    "net_config": "net.json",
}


class UsageError(Exception):
    """Bad flag combination; reported like an argparse error."""


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env-file", help="read DTD_* settings from this .env file")
    p.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: DTD_LOG_LEVEL or INFO)")


def _add_models(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cascade", help="face cascade model (JSON); default: the built-in synthetic-face cascade")
    p.add_argument("--weights", help="landmark network weights (DTDW); default: layout-prior weights")
    p.add_argument("--net-config", help="landmark cascade architecture (JSON)")
    g = p.add_argument_group("tracking and detection overrides")
    for flag, (_, _, kind) in OVERRIDES.items():
        g.add_argument("--" + flag.replace("_", "-"), type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtd-landmarks",
                                     description="Facial landmark tracking with detection-tracking-detection")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "track landmarks through a frame directory"),
                            ("baseline", "detect faces and landmarks on every frame independently")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--frames", nargs="+", required=True, help="frame directory (several with --parallel-videos)")
        p.add_argument("--out", required=True, help="results file, or a directory when several --frames are given")
        p.add_argument("--no-timings", action="store_true", help="write zero timings for byte-stable output")
        p.add_argument("--dump-annotated", help="write annotated PGM copies of the frames here")
        p.add_argument("--parallel-videos", type=int, default=1, metavar="N",
                       help="process up to N frame directories concurrently")
        _add_models(p)
        _add_common(p)

    p = sub.add_parser("compare", help="time both methods on the same frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", help="directory for both results files")
    p.add_argument("--plot", help="save a per-stage timing chart (PNG)")
    _add_models(p)
    _add_common(p)

    p = sub.add_parser("synth", help="write a synthetic sequence with ground truth and ready-made models")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-frames", type=int, default=100)
    p.add_argument("--width", type=int, default=1280)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--face-size", type=float, default=160.0)
    p.add_argument("--max-step", type=float, default=5.0, help="largest per-frame motion in pixels")
    p.add_argument("--occlude", type=int, nargs=2, metavar=("START", "END"),
                   help="hide the face for frames START..END-1")
    _add_common(p)

    p = sub.add_parser("eval", help="landmark error of a results file against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--truth", required=True)
    _add_common(p)

    p = sub.add_parser("train", help="train a small landmark cascade on synthetic faces")
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--net-config", help="architecture to train (default: a small cascade); "
                                        "written next to the weights when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--no-augment", action="store_true")
    _add_common(p)
    return parser


def setup_logging(level: Optional[str], settings_level: str = "INFO") -> None:
    name = (level or settings_level).upper()
    if not isinstance(logging.getLevelName(name), int):
        raise UsageError(f"--log-level: unknown level {level!r}")
    logging.basicConfig(level=name, format=LOG_FORMAT, stream=sys.stderr, force=True)


def settings_from_args(args: argparse.Namespace) -> PipelineSettings:
    overrides: Dict[str, Dict] = {}
    for flag, (section, field, _) in OVERRIDES.items():
        overrides.setdefault(section, {})[field] = getattr(args, flag, None)
    return load_settings(getattr(args, "env_file", None), overrides)


def load_models(args: argparse.Namespace) -> tuple:
    face_model: CascadeModel = load_cascade(args.cascade) if args.cascade else synthetic_face_cascade()
    spec = load_architecture(args.net_config) if args.net_config else default_cascade_spec()
    if args.weights:
        weights = load_weights(args.weights)
    else:
        logger.info("No --weights given; using layout-prior weights")
        weights = layout_prior_weights(spec)
    return face_model, LandmarkCascade(spec, weights)


def _dump_annotated(frames: Sequence[GrayImage], report: RunReport, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(report.results))))
    for img, r in zip(frames, report.results):
        write_pgm(directory / f"frame_{r.frame_index:0{width}d}.pgm", annotate(img, r.box, r.landmarks))


def _process(frames_dir: str, out: Path, args: argparse.Namespace, settings: PipelineSettings,
             models: tuple) -> RunReport:
    frames = load_frames(frames_dir)
    face_model, landmarks = models
    if args.command == "run":
        report = run_dtd(frames, face_model, landmarks, settings)
    else:
        report = run_baseline_frame_by_frame(frames, face_model, landmarks, settings)
    write_results(report, out, timings=not args.no_timings)
    if args.dump_annotated:
        target = Path(args.dump_annotated)
        if len(args.frames) > 1:
            target = target / Path(frames_dir).name
        _dump_annotated(frames, report, target)
    return report


def cmd_run(args: argparse.Namespace, settings: PipelineSettings) -> int:
    if args.parallel_videos < 1:
        raise UsageError("--parallel-videos: must be at least 1")
    models = load_models(args)
    if len(args.frames) == 1:
        jobs = [(args.frames[0], Path(args.out))]
    else:
        out_dir = Path(args.out)
        names = [Path(d).name for d in args.frames]
        if len(set(names)) != len(names):
            raise UsageError("--frames: directory names must be distinct when several are given")
        jobs = [(d, out_dir / f"{n}.jsonl") for d, n in zip(args.frames, names)]

    if args.parallel_videos > 1 and len(jobs) > 1:
        # independent pipeline instances; the models are only read
        with ThreadPoolExecutor(max_workers=args.parallel_videos) as pool:
            reports = list(pool.map(lambda job: _process(job[0], job[1], args, settings, models), jobs))
    else:
        reports = [_process(d, out, args, settings, models) for d, out in jobs]

    for (d, out), report in zip(jobs, reports):
        counts = ", ".join(f"{k} {v}" for k, v in report.status_counts().items())
        print(f"{d}: {len(report.results)} frames ({counts}) -> {out}")
    return 0


def cmd_compare(args: argparse.Namespace, settings: PipelineSettings) -> int:
    face_model, landmarks = load_models(args)
    # decode once so both methods time only their own work
    frames = list(load_frames(args.frames))
    dtd = run_dtd(frames, face_model, landmarks, settings)
    baseline = FrameByFrameBaseline(face_model, landmarks, settings).run(frames)

    table = compare_table(dtd.summary, baseline.summary)
    print(f"speedup: {speedup(dtd.summary, baseline.summary):.2f}x")
    print()
    print("per-stage time (ms)")
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    print()
    for name, report in (("dtd", dtd), ("baseline", baseline)):
        counts = report.status_counts()
        with_landmarks = sum(1 for r in report.results if r.landmarks is not None)
        print(f"{name}: {with_landmarks}/{len(report.results)} frames with landmarks; "
              + ", ".join(f"{k} {v}" for k, v in counts.items()))

    if args.out:
        out = Path(args.out)
        write_results(dtd, out / "dtd.jsonl")
        write_results(baseline, out / "baseline.jsonl")
    if args.plot:
        plot_stage_timings(table, args.plot)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    base = scene_spec(args.num_frames, args.seed, (args.width, args.height), args.face_size, args.max_step)
    spec = base
    if args.occlude:
        start, end = args.occlude
        if not 0 <= start < end <= args.num_frames:
            raise UsageError(f"--occlude: need 0 <= START < END <= {args.num_frames}")
        # one occluder covering the face over the whole window
        boxes = [face_box(base, base.trajectory[t]) for t in range(start, end)]
        x0 = min(b.x for b in boxes)
        y0 = min(b.y for b in boxes)
        x1 = max(b.x2 for b in boxes)
        y1 = max(b.y2 for b in boxes)
        spec = base.model_copy(update={"occlusions": [occluder_over(BoundingBox(x0, y0, x1 - x0, y1 - y0),
                                                                    start, end, pad=0.1)]})

    frames, truth = generate_synthetic_video(spec)
    save_frames(frames, out / SYNTH_FILES["frames"])
    write_ground_truth(truth, out / SYNTH_FILES["truth"])
    save_cascade(synthetic_face_cascade(), out / SYNTH_FILES["cascade"])
    net = default_cascade_spec()
    save_architecture(net, out / SYNTH_FILES["net_config"])
    save_weights(layout_prior_weights(net), out / SYNTH_FILES["weights"])
    print(f"wrote {len(frames)} frames, ground truth and models to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    records, _ = read_results(args.results)
    truth = read_ground_truth(args.truth)
    report = evaluate(records, truth)
    print(f"frames evaluated: {report.frames_evaluated}")
    print(f"frames missed: {report.frames_missed}")
    print(f"mean error: {report.mean_error:.6f} px")
    print(f"rms error: {report.rms_error:.6f} px")
    print(f"mean error / face short side: {report.mean_normalized:.6f}")
    if not report.per_frame.empty:
        print()
        print(report.per_frame[["mean_error", "max_error", "normalized"]].describe().to_string())
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    if args.samples < 1:
        raise UsageError("--samples: must be at least 1")
    try:
        hyper = TrainingHyper(batch_size=args.batch_size, learning_rate=args.learning_rate,
                              epochs=args.epochs, seed=args.seed)
    except ValueError as e:
        raise UsageError(f"training hyperparameters: {e}") from e
    out = Path(args.out)
    if args.net_config:
        spec = load_architecture(args.net_config)
    else:
        spec = toy_cascade_spec()
        save_architecture(spec, out.with_suffix(".json"))
    samples = synthetic_training_samples(args.samples, seed=args.seed)
    result = train_cascade(samples, spec, hyper, augment=not args.no_augment)
    save_weights(result.weights, out)
    for key, history in result.histories.items():
        print(f"{key}: loss {history[0]:.6f} -> {history[-1]:.6f}")
    print(f"weights written to {out}")
    return 0


def cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = settings_from_args(args) if args.command in ("run", "baseline", "compare") \
            else load_settings(args.env_file)
        setup_logging(args.log_level, settings.log_level)
        if args.command in ("run", "baseline"):
            return cmd_run(args, settings)
        if args.command == "compare":
            return cmd_compare(args, settings)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_train(args)
    except (UsageError, ConfigError) as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2
    except DTDError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception:
        logger.exception("Unexpected failure")
        return 1


def main() -> None:
    sys.exit(cli())
