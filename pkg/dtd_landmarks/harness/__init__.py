from .frames_io import load_frames, read_pgm, write_pgm
from .results import FrameRecord, evaluate, read_results, write_results
from .synthetic import SyntheticSceneSpec, generate_synthetic_video

__all__ = [
    "load_frames", "read_pgm", "write_pgm",
    "FrameRecord", "evaluate", "read_results", "write_results",
    "SyntheticSceneSpec", "generate_synthetic_video",
]
