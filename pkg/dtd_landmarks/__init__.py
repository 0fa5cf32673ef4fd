from .config import PipelineSettings, load_settings
from .core import BoundingBox, GrayImage, LandmarkSet
from .face_detector import CascadeModel, detect_faces
from .landmark_net import LandmarkCascade
from .pipeline import DTDPipeline, FrameByFrameBaseline, FrameResult, FrameStatus

__all__ = [
    "DTDPipeline", "FrameByFrameBaseline", "FrameResult", "FrameStatus",
    "PipelineSettings", "load_settings",
    "BoundingBox", "GrayImage", "LandmarkSet",
    "CascadeModel", "detect_faces", "LandmarkCascade",
]
