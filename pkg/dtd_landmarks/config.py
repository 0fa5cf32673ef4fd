"""Runtime settings.

Defaults live on the pydantic models; `load_settings` layers values from the
environment (a `.env` file is honoured) and then explicit overrides on top.
"""
import logging
import os
from typing import Any, Callable, Dict, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import BoundingBox
from .errors import ConfigError

logger = logging.getLogger(__name__)


class FlowConfig(BaseModel):
    """Pyramidal Lucas-Kanade parameters."""

    model_config = ConfigDict(frozen=True)

    window_radius: int = Field(4, gt=0)
    pyramid_levels: int = Field(3, gt=0)
    max_iterations: int = Field(20, gt=0)
    epsilon: float = Field(0.01, gt=0)
    min_eigen_threshold: float = Field(1e-4, gt=0)

    @property
    def window_size(self) -> int:
        return 2 * self.window_radius + 1


class DetectParams(BaseModel):
    """Sliding-window scan parameters for the cascade detector."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    min_size: int = Field(24, gt=0)
    scale_factor: float = Field(1.1, gt=1.0)
    step_fraction: float = Field(0.05, gt=0.0, le=1.0)
    group_min_neighbors: int = Field(3, ge=1)
    group_iou: float = Field(0.3, gt=0.0, le=1.0)
    region: Optional[BoundingBox] = None

    def with_region(self, region: Optional[BoundingBox]) -> "DetectParams":
        return self.model_copy(update={"region": region})


class TrackingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid_fraction: float = Field(0.05, gt=0.0)
    min_support: int = Field(8, ge=1)


class ValidationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    expand_factor: float = Field(2.0, ge=1.0)
    min_iou: float = Field(0.5, gt=0.0, le=1.0)


class PipelineSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    flow: FlowConfig = FlowConfig()
    detect: DetectParams = DetectParams()
    tracking: TrackingConfig = TrackingConfig()
    validation: ValidationConfig = ValidationConfig()
    log_level: str = "INFO"

    @model_validator(mode="after")
    def _check_log_level(self):
        if logging.getLevelName(self.log_level.upper()) == f"Level {self.log_level.upper()}":
            raise ValueError(f"unknown log level {self.log_level!r}")
        return self


# environment variable -> (section, field, parser)
ENV_VARS: Dict[str, Tuple[Optional[str], str, Callable[[str], Any]]] = {
    "DTD_LK_WINDOW_RADIUS": ("flow", "window_radius", int),
    "DTD_LK_LEVELS": ("flow", "pyramid_levels", int),
    "DTD_LK_MAX_ITER": ("flow", "max_iterations", int),
    "DTD_LK_EPSILON": ("flow", "epsilon", float),
    "DTD_LK_MIN_EIGEN": ("flow", "min_eigen_threshold", float),
    "DTD_MIN_FACE": ("detect", "min_size", int),
    "DTD_SCALE_FACTOR": ("detect", "scale_factor", float),
    "DTD_STEP_FRACTION": ("detect", "step_fraction", float),
    "DTD_MIN_NEIGHBORS": ("detect", "group_min_neighbors", int),
    "DTD_GROUP_IOU": ("detect", "group_iou", float),
    "DTD_GRID_FRACTION": ("tracking", "grid_fraction", float),
    "DTD_MIN_SUPPORT": ("tracking", "min_support", int),
    "DTD_EXPAND_FACTOR": ("validation", "expand_factor", float),
    "DTD_VALIDATE_IOU": ("validation", "min_iou", float),
    "DTD_LOG_LEVEL": (None, "log_level", str),
}


def load_settings(env_file: Optional[str] = None,
                  overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> PipelineSettings:
    """Build PipelineSettings from defaults, DTD_* variables and overrides.

    `overrides` maps a section name ("flow", "detect", "tracking",
    "validation") to field values; None values are ignored so argparse
    namespaces can be passed through unfiltered.
    """
    if env_file:
        load_dotenv(env_file)
    else:
        load_dotenv()

    sections: Dict[str, Dict[str, Any]] = {"flow": {}, "detect": {}, "tracking": {}, "validation": {}}
    top: Dict[str, Any] = {}
    for var, (section, field, parse) in ENV_VARS.items():
        raw = os.getenv(var)
        if raw is None or raw == "":
            continue
        try:
            value = parse(raw)
        except ValueError:
            raise ConfigError(f"{var}={raw!r} is not a valid {parse.__name__}")
        if section is None:
            top[field] = value
        else:
            sections[section][field] = value
        logger.debug("Setting %s.%s from %s", section or "settings", field, var)

    for section, values in (overrides or {}).items():
        for field, value in values.items():
            if value is not None:
                if section in sections:
                    sections[section][field] = value
                else:
                    top[field] = value

    try:
        return PipelineSettings(
            flow=FlowConfig(**sections["flow"]),
            detect=DetectParams(**sections["detect"]),
            tracking=TrackingConfig(**sections["tracking"]),
            validation=ValidationConfig(**sections["validation"]),
            **top,
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid settings: {e}") from e
