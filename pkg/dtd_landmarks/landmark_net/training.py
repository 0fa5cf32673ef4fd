"""Mini-batch SGD with momentum, training-set construction and whole-cascade training."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core import NUM_LANDMARKS, BoundingBox
from ..errors import EmptyDataset, ShapeMismatch
from .augment import TrainingSample, expand_dataset
from .cascade import CascadeSpec, Level1Net
from .network import NetworkSpec, NetworkWeights, backward, init_weights, net_forward
from .patches import extract_patch, square_patch

logger = logging.getLogger(__name__)

EVAL_CHUNK = 256


class TrainingHyper(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(32, gt=0)
    learning_rate: float = Field(0.01, ge=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    epochs: int = Field(20, gt=0)
    seed: int = Field(0, ge=0)


@dataclass
class TrainResult:
    weights: NetworkWeights
    # loss over the whole set before training, then after every epoch
    history: List[float] = field(default_factory=list)


def dataset_loss(spec: NetworkSpec, weights: NetworkWeights, inputs: np.ndarray, targets: np.ndarray) -> float:
    total = 0.0
    for start in range(0, len(inputs), EVAL_CHUNK):
        pred = net_forward(spec, weights, inputs[start:start + EVAL_CHUNK])
        total += float(np.sum((pred - targets[start:start + EVAL_CHUNK]) ** 2))
    return total / targets.size


def sgd_train(spec: NetworkSpec, weights: NetworkWeights, inputs: np.ndarray, targets: np.ndarray,
              hyper: TrainingHyper) -> TrainResult:
    """Train a copy of `weights`; shuffling is seeded so runs are reproducible."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise EmptyDataset(f"No training samples for {spec.name}")
    if inputs.ndim == 3:
        inputs = inputs[:, None]
    if len(inputs) != len(targets) or targets.shape[1:] != (spec.output_dim,):
        raise ShapeMismatch(f"{len(inputs)} inputs vs targets of shape {targets.shape} for {spec.name}")

    rng = np.random.default_rng(hyper.seed)
    params = weights.copy()
    velocity = {k: np.zeros_like(v) for k, v in params.params.items()}
    history = [dataset_loss(spec, params, inputs, targets)]

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(inputs))
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            _, grads = backward(spec, params, inputs[batch], targets[batch])
            for key, g in grads.items():
                velocity[key] = hyper.momentum * velocity[key] - hyper.learning_rate * g
                params.params[key] += velocity[key]
        history.append(dataset_loss(spec, params, inputs, targets))
        logger.debug("%s epoch %d loss %.6f", spec.name, epoch + 1, history[-1])

    return TrainResult(params, history)


def _jitter_box(box: BoundingBox, jitter: float, rng: np.random.Generator) -> BoundingBox:
    if jitter <= 0:
        return box
    dx, dy, ds = rng.uniform(-jitter, jitter, size=3)
    cx, cy = box.center
    return BoundingBox.from_center(cx + dx * box.w, cy + dy * box.h, box.w * (1 + ds), box.h * (1 + ds))


def level1_dataset(samples: Sequence[TrainingSample], net: Level1Net, rng: np.random.Generator,
                   box_jitter: float = 0.05) -> Tuple[np.ndarray, np.ndarray]:
    """Crops of (jittered) face boxes with landmark targets normalised to the crop."""
    if not samples:
        raise EmptyDataset(f"No samples for {net.spec.name}")
    h, w = net.spec.input_size
    xs, ys = [], []
    for s in samples:
        crop = net.crop(_jitter_box(s.box, box_jitter, rng))
        pts = s.landmarks.as_array()[net.landmarks]
        xs.append(extract_patch(s.image, crop, h, w))
        ys.append(np.column_stack([(pts[:, 0] - crop.x) / crop.w, (pts[:, 1] - crop.y) / crop.h]).ravel())
    return np.stack(xs)[:, None], np.stack(ys)


def refine_dataset(samples: Sequence[TrainingSample], landmark: int, half_size: float,
                   input_size: Tuple[int, int], rng: np.random.Generator,
                   shift_fraction: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Patches centred near the true landmark, shifted up to shift_fraction of the half-size."""
    if not samples:
        raise EmptyDataset(f"No samples for landmark {landmark}")
    h, w = input_size
    xs, ys = [], []
    for s in samples:
        half = half_size * s.box.short_side
        gx, gy = s.landmarks.as_array()[landmark]
        dx, dy = rng.uniform(-shift_fraction, shift_fraction, size=2) * half
        patch = square_patch(gx + dx, gy + dy, half)
        xs.append(extract_patch(s.image, patch, h, w))
        ys.append([(gx - patch.x) / patch.w, (gy - patch.y) / patch.h])
    return np.stack(xs)[:, None], np.asarray(ys, dtype=np.float64)


@dataclass
class CascadeTraining:
    weights: Dict[str, NetworkWeights]
    histories: Dict[str, List[float]]


def train_cascade(samples: Sequence[TrainingSample], cascade: CascadeSpec, hyper: TrainingHyper,
                  augment: bool = True, box_jitter: float = 0.05, shift_fraction: float = 0.5,
                  init: Optional[Dict[str, NetworkWeights]] = None) -> CascadeTraining:
    """Train every network of the cascade independently on its own crops."""
    if not samples:
        raise EmptyDataset("No training samples")
    data = expand_dataset(samples) if augment else list(samples)
    logger.info("Training %d networks on %d samples", len(cascade.network_keys()), len(data))

    weights: Dict[str, NetworkWeights] = {}
    histories: Dict[str, List[float]] = {}
    for index, key in enumerate(cascade.network_keys()):
        rng = np.random.default_rng([hyper.seed, index])
        spec = cascade.spec_for(key)
        if key in cascade.level1:
            inputs, targets = level1_dataset(data, cascade.level1[key], rng, box_jitter)
        else:
            level = next(lv for lv in cascade.refine if key in lv.networks)
            landmark = next(lm for lm in range(NUM_LANDMARKS) if key in level.keys_for(lm))
            inputs, targets = refine_dataset(data, landmark, level.half_size, spec.input_size, rng, shift_fraction)
        start = init[key] if init and key in init else init_weights(spec, rng)
        result = sgd_train(spec, start, inputs, targets, hyper.model_copy(update={"seed": hyper.seed + index}))
        weights[key] = result.weights
        histories[key] = result.history
        logger.info("%s: loss %.5f -> %.5f", key, result.history[0], result.history[-1])
    return CascadeTraining(weights, histories)
