"""Network architecture specs, parameter containers, forward inference and backprop."""
import logging
from dataclasses import dataclass, field
from typing import Annotated, Dict, List, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ShapeMismatch
from . import kernels

logger = logging.getLogger(__name__)


class ConvLayer(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["conv"] = "conv"
    out_channels: int = Field(gt=0)
    kernel_h: int = Field(gt=0)
    kernel_w: int = Field(gt=0)
    stride: int = Field(1, gt=0)


class ReluLayer(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["relu"] = "relu"


class PoolLayer(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["maxpool"] = "maxpool"
    size: int = Field(2, gt=0)
    stride: int = Field(2, gt=0)


class FCLayer(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["fc"] = "fc"
    out_units: int = Field(gt=0)


LayerSpec = Annotated[Union[ConvLayer, ReluLayer, PoolLayer, FCLayer], Field(discriminator="kind")]

# (channels, height, width); FC outputs are (units, 1, 1)
Shape = Tuple[int, int, int]


class NetworkSpec(BaseModel):
    """One regression network: input patch size, ordered layers, output length."""

    model_config = ConfigDict(frozen=True)

    name: str
    input_size: Tuple[int, int]
    layers: List[LayerSpec] = Field(min_length=1)
    output_dim: int = Field(gt=0)

    @model_validator(mode="after")
    def _check_shapes(self):
        last = self.layers[-1]
        if not isinstance(last, FCLayer) or last.out_units != self.output_dim:
            raise ValueError(f"{self.name}: final layer must be fc with {self.output_dim} units")
        self.layer_shapes()
        return self

    def layer_shapes(self) -> List[Shape]:
        """Input shape of every layer followed by the output shape."""
        shape: Shape = (1, self.input_size[0], self.input_size[1])
        shapes = [shape]
        for i, layer in enumerate(self.layers):
            c, h, w = shape
            if isinstance(layer, ConvLayer):
                shape = (layer.out_channels,
                         kernels.conv_output_size(h, layer.kernel_h, layer.stride),
                         kernels.conv_output_size(w, layer.kernel_w, layer.stride))
            elif isinstance(layer, PoolLayer):
                shape = (c, kernels.conv_output_size(h, layer.size, layer.stride),
                         kernels.conv_output_size(w, layer.size, layer.stride))
            elif isinstance(layer, FCLayer):
                shape = (layer.out_units, 1, 1)
            if min(shape) < 1:
                raise ShapeMismatch(f"{self.name}: layer {i} ({layer.kind}) reduces {shapes[-1]} to {shape}")
            shapes.append(shape)
        return shapes

    def count(self, kind: str) -> int:
        return sum(1 for layer in self.layers if layer.kind == kind)


@dataclass(eq=False)
class NetworkWeights:
    """Parameters keyed "L{index}.W" / "L{index}.b" in layer order."""

    params: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "NetworkWeights":
        return NetworkWeights({k: v.copy() for k, v in self.params.items()})

    def __getitem__(self, key: str) -> np.ndarray:
        return self.params[key]

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkWeights) or self.params.keys() != other.params.keys():
            return False
        return all(np.array_equal(v, other.params[k]) for k, v in self.params.items())


def param_shapes(spec: NetworkSpec) -> Dict[str, Tuple[int, ...]]:
    shapes = spec.layer_shapes()
    out: Dict[str, Tuple[int, ...]] = {}
    for i, layer in enumerate(spec.layers):
        c, h, w = shapes[i]
        if isinstance(layer, ConvLayer):
            out[f"L{i}.W"] = (layer.out_channels, c, layer.kernel_h, layer.kernel_w)
            out[f"L{i}.b"] = (layer.out_channels,)
        elif isinstance(layer, FCLayer):
            out[f"L{i}.W"] = (layer.out_units, c * h * w)
            out[f"L{i}.b"] = (layer.out_units,)
    return out


def init_weights(spec: NetworkSpec, rng: np.random.Generator) -> NetworkWeights:
    """He-normal weights, zero biases."""
    params = {}
    for key, shape in param_shapes(spec).items():
        if key.endswith(".b"):
            params[key] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[key] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return NetworkWeights(params)


def zero_weights(spec: NetworkSpec) -> NetworkWeights:
    return NetworkWeights({k: np.zeros(s) for k, s in param_shapes(spec).items()})


def check_weights(spec: NetworkSpec, weights: NetworkWeights) -> None:
    expected = param_shapes(spec)
    if expected.keys() != weights.params.keys():
        raise ShapeMismatch(f"{spec.name}: parameters {sorted(weights.params)} != {sorted(expected)}")
    for key, shape in expected.items():
        if weights.params[key].shape != shape:
            raise ShapeMismatch(f"{spec.name}: {key} has shape {weights.params[key].shape}, expected {shape}")


def _as_input_batch(spec: NetworkSpec, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    h, w = spec.input_size
    if x.shape == (h, w):
        return x[None, None], True
    if x.shape == (1, h, w):
        return x[None], True
    if x.ndim == 4 and x.shape[1:] == (1, h, w):
        return x, False
    raise ShapeMismatch(f"{spec.name} expects {h}x{w} patches, got shape {x.shape}")


def _forward(spec: NetworkSpec, weights: NetworkWeights, x: np.ndarray) -> Tuple[np.ndarray, list]:
    """Batched forward; the cache holds each layer's input (and pool argmax)."""
    cache = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayer):
            cache.append((x, None))
            x = kernels.conv_forward(x, weights[f"L{i}.W"], weights[f"L{i}.b"], layer.stride)
        elif isinstance(layer, ReluLayer):
            cache.append((x, None))
            x = kernels.relu(x)
        elif isinstance(layer, PoolLayer):
            out, argmax = kernels.maxpool_forward(x, layer.size, layer.stride)
            cache.append((x, argmax))
            x = out
        else:
            cache.append((x, None))
            x = kernels.fc_forward(x.reshape(x.shape[0], -1), weights[f"L{i}.W"], weights[f"L{i}.b"])
            x = x[:, :, None, None]
    return x.reshape(x.shape[0], -1), cache


def net_forward(spec: NetworkSpec, weights: NetworkWeights, patch: np.ndarray) -> np.ndarray:
    """Patch-relative coordinate predictions, (output_dim,) or (N, output_dim) for a batch."""
    x, single = _as_input_batch(spec, patch)
    out, _ = _forward(spec, weights, x)
    return out[0] if single else out


def backward(spec: NetworkSpec, weights: NetworkWeights, patches: np.ndarray,
             targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """MSE loss over the batch and its gradient for every parameter."""
    x, single = _as_input_batch(spec, patches)
    targets = np.asarray(targets, dtype=np.float64)
    if single:
        targets = targets.reshape(1, -1)
    pred, cache = _forward(spec, weights, x)
    loss, grad = kernels.mse_loss(pred, targets)

    grads: Dict[str, np.ndarray] = {}
    g = grad[:, :, None, None]
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        inp, extra = cache[i]
        if isinstance(layer, ConvLayer):
            g, grads[f"L{i}.W"], grads[f"L{i}.b"] = kernels.conv_backward(
                inp, weights[f"L{i}.W"], layer.stride, g)
        elif isinstance(layer, ReluLayer):
            g = kernels.relu_backward(inp, g)
        elif isinstance(layer, PoolLayer):
            g = kernels.maxpool_backward(inp.shape, layer.size, layer.stride, extra, g)
        else:
            flat = inp.reshape(inp.shape[0], -1)
            d_flat, grads[f"L{i}.W"], grads[f"L{i}.b"] = kernels.fc_backward(
                flat, weights[f"L{i}.W"], g.reshape(g.shape[0], -1))
            g = d_flat.reshape(inp.shape)
    return loss, grads
