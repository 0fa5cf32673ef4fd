"""Forward and backward kernels for convolution, ReLU, max-pooling and fully connected layers.

Tensors are batched as (N, C, H, W); the forward functions also accept a
single (C, H, W) tensor and return an unbatched result for it.
"""
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


def _as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatch(f"Expected a (C, H, W) or (N, C, H, W) tensor, got shape {x.shape}")


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def _conv_windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, Ho, Wo, kh, kw) view, no copy
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation: out[o, i, j] = b[o] + sum k[o, c, u, v] * x[c, i*s + u, j*s + v]."""
    xb, single = _as_batch(x)
    if stride < 1:
        raise ShapeMismatch(f"Stride must be >= 1, got {stride}")
    out_c, in_c, kh, kw = kernels.shape
    if xb.shape[1] != in_c:
        raise ShapeMismatch(f"Input has {xb.shape[1]} channels, kernels expect {in_c}")
    if xb.shape[2] < kh or xb.shape[3] < kw:
        raise ShapeMismatch(f"Kernel {kh}x{kw} does not fit input {xb.shape[2]}x{xb.shape[3]}")
    windows = _conv_windows(xb, kh, kw, stride)
    out = np.tensordot(windows, kernels, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias.reshape(1, out_c, 1, 1)
    return out[0] if single else out


def conv_backward(x: np.ndarray, kernels: np.ndarray, stride: int,
                  grad_out: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_kernels, d_bias) of a batched convolution."""
    _, _, kh, kw = kernels.shape
    windows = _conv_windows(x, kh, kw, stride)
    d_bias = grad_out.sum(axis=(0, 2, 3))
    d_kernels = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))
    # (N, Ho, Wo, C, kh, kw): each output position's contribution to its input window
    spread = np.tensordot(grad_out, kernels, axes=([1], [0]))
    d_x = np.zeros_like(x)
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    for u in range(kh):
        for v in range(kw):
            d_x[:, :, u:u + stride * (ho - 1) + 1:stride, v:v + stride * (wo - 1) + 1:stride] += \
                spread[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return d_x, d_kernels, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def maxpool_forward(x: np.ndarray, size: int, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel window maximum; also returns the flat in-window argmax for backprop."""
    xb, single = _as_batch(x)
    if xb.shape[2] < size or xb.shape[3] < size:
        raise ShapeMismatch(f"Pool window {size} does not fit input {xb.shape[2]}x{xb.shape[3]}")
    windows = _conv_windows(xb, size, size, stride)
    flat = windows.reshape(windows.shape[:4] + (size * size,))
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    if single:
        return out[0], argmax[0]
    return out, argmax


def maxpool_backward(x_shape: Tuple[int, ...], size: int, stride: int,
                     argmax: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    d_x = np.zeros(x_shape)
    n, c, ho, wo = grad_out.shape
    nn, cc, ii, jj = np.meshgrid(np.arange(n), np.arange(c), np.arange(ho), np.arange(wo), indexing="ij")
    du, dv = np.divmod(argmax, size)
    np.add.at(d_x, (nn, cc, ii * stride + du, jj * stride + dv), grad_out)
    return d_x


def fc_forward(x: np.ndarray, matrix: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """out = matrix · flatten(x) + bias; a leading batch axis is kept when x.ndim is 2 or 4."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim in (2, 4)
    flat = x.reshape(x.shape[0], -1) if batched else x.reshape(1, -1)
    if flat.shape[1] != matrix.shape[1]:
        raise ShapeMismatch(f"Input of length {flat.shape[1]} does not match a {matrix.shape} matrix")
    out = flat @ matrix.T + bias
    return out if batched else out[0]


def fc_backward(x: np.ndarray, matrix: np.ndarray,
                grad_out: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    flat = x.reshape(x.shape[0], -1)
    d_matrix = grad_out.T @ flat
    d_bias = grad_out.sum(axis=0)
    d_x = (grad_out @ matrix).reshape(x.shape)
    return d_x, d_matrix, d_bias


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error over every element, and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"Prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
