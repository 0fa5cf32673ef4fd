"""The three-level landmark cascade: crop rules, default architecture and prediction.

Level 1 regresses landmarks from large face crops (F1 whole face, EN1 top,
NM1 bottom) and averages every network that predicts a landmark. Levels 2
and 3 refine each landmark from a shrinking square patch centred on the
current estimate, averaging two networks per landmark.

Weights are addressed by network key: "F1", "EN1", "NM1" for level 1 and
"<name>.<instance>" for refinement, e.g. "LE1.0", "LE1.1" (level 2) and
"LE2.0", "LE2.1" (level 3).
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core import LANDMARK_NAMES, NUM_LANDMARKS, BoundingBox, GrayImage, LandmarkSet
from ..errors import ShapeMismatch
from .network import (ConvLayer, FCLayer, NetworkSpec, NetworkWeights, PoolLayer, ReluLayer,
                      check_weights, net_forward)
from .patches import extract_patch, square_patch

logger = logging.getLogger(__name__)

NETS_PER_LANDMARK = 2


class Level1Net(BaseModel):
    """A level-1 network and the horizontal band of the face box it sees."""

    model_config = ConfigDict(frozen=True)

    spec: NetworkSpec
    crop_top: float = Field(0.0, ge=0.0, lt=1.0)
    crop_bottom: float = Field(1.0, gt=0.0, le=1.0)
    landmarks: List[int]

    @model_validator(mode="after")
    def _check(self):
        if self.crop_bottom <= self.crop_top:
            raise ValueError(f"{self.spec.name}: empty crop band {self.crop_top}..{self.crop_bottom}")
        if self.spec.output_dim != 2 * len(self.landmarks):
            raise ValueError(f"{self.spec.name}: output_dim {self.spec.output_dim} "
                             f"does not match {len(self.landmarks)} landmarks")
        return self

    def crop(self, face_box: BoundingBox) -> BoundingBox:
        return face_box.sub_box(self.crop_top, self.crop_bottom)


class RefineLevel(BaseModel):
    """Per-landmark network pairs operating on square patches of the given half-size."""

    model_config = ConfigDict(frozen=True)

    half_size: float = Field(gt=0.0)
    networks: Dict[str, NetworkSpec]

    @model_validator(mode="after")
    def _check(self):
        for lm in range(NUM_LANDMARKS):
            if len(self.keys_for(lm)) != NETS_PER_LANDMARK:
                raise ValueError(f"{LANDMARK_NAMES[lm]} needs exactly {NETS_PER_LANDMARK} refinement networks")
        for key, spec in self.networks.items():
            if spec.output_dim != 2:
                raise ValueError(f"{key}: refinement networks predict one point")
        return self

    def keys_for(self, landmark: int) -> List[str]:
        name = LANDMARK_NAMES[landmark]
        return sorted(k for k in self.networks if k.split(".")[0].rstrip("0123456789") == name)


class CascadeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    level1: Dict[str, Level1Net]
    refine: List[RefineLevel] = []

    @model_validator(mode="after")
    def _check_coverage(self):
        for lm in range(NUM_LANDMARKS):
            n = sum(lm in net.landmarks for net in self.level1.values())
            if n < 2:
                raise ValueError(f"{LANDMARK_NAMES[lm]} is predicted by {n} level-1 networks, need 2")
        return self

    def network_keys(self) -> List[str]:
        keys = list(self.level1)
        for level in self.refine:
            keys.extend(level.networks)
        return keys

    def spec_for(self, key: str) -> NetworkSpec:
        if key in self.level1:
            return self.level1[key].spec
        for level in self.refine:
            if key in level.networks:
                return level.networks[key]
        raise KeyError(key)


def level1_layers(channels: Sequence[int], hidden: int, outputs: int) -> list:
    c1, c2, c3, c4 = channels
    return [
        ConvLayer(out_channels=c1, kernel_h=4, kernel_w=4), ReluLayer(), PoolLayer(),
        ConvLayer(out_channels=c2, kernel_h=3, kernel_w=3), ReluLayer(), PoolLayer(),
        ConvLayer(out_channels=c3, kernel_h=3, kernel_w=3), ReluLayer(), PoolLayer(),
        ConvLayer(out_channels=c4, kernel_h=2, kernel_w=2), ReluLayer(),
        FCLayer(out_units=hidden), ReluLayer(),
        FCLayer(out_units=outputs),
    ]


def refine_layers(channels: Sequence[int]) -> list:
    c1, c2, c3 = channels
    return [
        ConvLayer(out_channels=c1, kernel_h=4, kernel_w=4), ReluLayer(), PoolLayer(),
        ConvLayer(out_channels=c2, kernel_h=3, kernel_w=3), ReluLayer(), PoolLayer(),
        ConvLayer(out_channels=c3, kernel_h=2, kernel_w=2), ReluLayer(),
        FCLayer(out_units=2),
    ]


def build_cascade_spec(level1_channels: Sequence[int] = (20, 40, 60, 80),
                       level1_hidden: int = 120,
                       face_input: Tuple[int, int] = (39, 39),
                       band_input: Tuple[int, int] = (31, 39),
                       refine_channels: Sequence[int] = (20, 40, 60),
                       refine_input: Tuple[int, int] = (15, 15),
                       half_sizes: Sequence[float] = (0.16, 0.09),
                       band_fraction: float = 0.6) -> CascadeSpec:
    """Cascade architecture; the defaults are the shipped configuration."""
    def l1(name: str, size: Tuple[int, int], landmarks: List[int], top: float, bottom: float) -> Level1Net:
        spec = NetworkSpec(name=name, input_size=size, output_dim=2 * len(landmarks),
                           layers=level1_layers(level1_channels, level1_hidden, 2 * len(landmarks)))
        return Level1Net(spec=spec, crop_top=top, crop_bottom=bottom, landmarks=landmarks)

    level1 = {
        "F1": l1("F1", face_input, [0, 1, 2, 3, 4], 0.0, 1.0),
        "EN1": l1("EN1", band_input, [0, 1, 2], 0.0, band_fraction),
        "NM1": l1("NM1", band_input, [2, 3, 4], 1.0 - band_fraction, 1.0),
    }
    refine = []
    for depth, half in enumerate(half_sizes, start=1):
        nets = {}
        for lm_name in LANDMARK_NAMES:
            for instance in range(NETS_PER_LANDMARK):
                nets[f"{lm_name}{depth}.{instance}"] = NetworkSpec(
                    name=f"{lm_name}{depth}", input_size=refine_input, output_dim=2,
                    layers=refine_layers(refine_channels))
        refine.append(RefineLevel(half_size=half, networks=nets))
    return CascadeSpec(level1=level1, refine=refine)


@dataclass(frozen=True)
class CascadePrediction:
    """Landmarks after each level; `levels[-1]` is the cascade output."""

    levels: Tuple[LandmarkSet, ...]

    @property
    def final(self) -> LandmarkSet:
        return self.levels[-1]


def _clamp_to_frame(coords: np.ndarray, img: GrayImage) -> np.ndarray:
    out = coords.copy()
    out[:, 0] = np.clip(out[:, 0], 0.0, img.width - 1)
    out[:, 1] = np.clip(out[:, 1], 0.0, img.height - 1)
    return out


def _level1(img: GrayImage, face_box: BoundingBox, cascade: CascadeSpec,
            weights: Mapping[str, NetworkWeights]) -> np.ndarray:
    sums = np.zeros((NUM_LANDMARKS, 2))
    counts = np.zeros(NUM_LANDMARKS)
    for key, net in cascade.level1.items():
        crop = net.crop(face_box)
        h, w = net.spec.input_size
        out = net_forward(net.spec, weights[key], extract_patch(img, crop, h, w)).reshape(-1, 2)
        pts = np.column_stack([crop.x + out[:, 0] * crop.w, crop.y + out[:, 1] * crop.h])
        for row, lm in enumerate(net.landmarks):
            sums[lm] += pts[row]
            counts[lm] += 1
    return sums / counts[:, None]


def _refine(img: GrayImage, coords: np.ndarray, half: float, level: RefineLevel,
            weights: Mapping[str, NetworkWeights]) -> np.ndarray:
    out = coords.copy()
    for lm in range(NUM_LANDMARKS):
        patch_box = square_patch(coords[lm, 0], coords[lm, 1], half)
        keys = level.keys_for(lm)
        h, w = level.networks[keys[0]].input_size
        patch = extract_patch(img, patch_box, h, w)
        pred = np.mean([net_forward(level.networks[k], weights[k], patch) for k in keys], axis=0)
        out[lm] = (patch_box.x + pred[0] * patch_box.w, patch_box.y + pred[1] * patch_box.h)
    return out


def cascade_predict_levels(img: GrayImage, face_box: BoundingBox, cascade: CascadeSpec,
                           weights: Mapping[str, NetworkWeights]) -> CascadePrediction:
    missing = [k for k in cascade.network_keys() if k not in weights]
    if missing:
        raise ShapeMismatch(f"No weights for networks {missing}")
    coords = _clamp_to_frame(_level1(img, face_box, cascade, weights), img)
    levels = [LandmarkSet.from_array(coords)]
    for level in cascade.refine:
        coords = _clamp_to_frame(_refine(img, coords, level.half_size * face_box.short_side, level, weights), img)
        levels.append(LandmarkSet.from_array(coords))
    return CascadePrediction(tuple(levels))


def cascade_predict(img: GrayImage, face_box: BoundingBox, cascade: CascadeSpec,
                    weights: Mapping[str, NetworkWeights]) -> LandmarkSet:
    return cascade_predict_levels(img, face_box, cascade, weights).final


class LandmarkCascade:
    """Cascade spec bound to a full set of network weights."""

    def __init__(self, spec: CascadeSpec, weights: Mapping[str, NetworkWeights]):
        self.spec = spec
        self.weights = dict(weights)
        for key in spec.network_keys():
            if key not in self.weights:
                raise ShapeMismatch(f"No weights for network {key}")
            check_weights(spec.spec_for(key), self.weights[key])

    def predict(self, img: GrayImage, face_box: BoundingBox) -> LandmarkSet:
        return cascade_predict(img, face_box, self.spec, self.weights)

    def predict_levels(self, img: GrayImage, face_box: BoundingBox) -> CascadePrediction:
        return cascade_predict_levels(img, face_box, self.spec, self.weights)
