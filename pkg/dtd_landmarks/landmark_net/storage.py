"""Weights container and architecture config files.

Weights file layout: an ASCII header, then every parameter as little-endian
float32 in header order.

    DTDW 1
    networks 23
    net F1 8
    param L0.W 4 20 1 4 4
    param L0.b 1 20
    ...
    end
    <binary payload>
"""
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..errors import ModelFormatError, UnreadableFile
from .cascade import CascadeSpec
from .network import NetworkWeights

logger = logging.getLogger(__name__)

MAGIC = "DTDW 1"
DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


def encode_weights(weights: Dict[str, NetworkWeights]) -> bytes:
    lines = [MAGIC, f"networks {len(weights)}"]
    chunks: List[bytes] = []
    for key, net in weights.items():
        if any(c.isspace() for c in key):
            raise ModelFormatError(f"Network key {key!r} contains whitespace")
        lines.append(f"net {key} {len(net.params)}")
        for name, arr in net.params.items():
            lines.append(f"param {name} {arr.ndim} " + " ".join(str(d) for d in arr.shape))
            chunks.append(np.ascontiguousarray(arr, dtype=DTYPE).tobytes())
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii") + b"".join(chunks)


def decode_weights(blob: bytes) -> Dict[str, NetworkWeights]:
    marker = b"\nend\n"
    cut = blob.find(marker)
    if cut < 0:
        raise ModelFormatError("Weights header is not terminated")
    header = blob[:cut].decode("ascii", errors="replace").split("\n")
    payload = memoryview(blob)[cut + len(marker):]
    if not header or header[0] != MAGIC:
        raise ModelFormatError(f"Bad magic {header[0]!r}, expected {MAGIC!r}")

    layout: List[Tuple[str, List[Tuple[str, Tuple[int, ...]]]]] = []
    try:
        count = int(header[1].split()[1])
        for line in header[2:]:
            parts = line.split()
            if parts[0] == "net":
                layout.append((parts[1], []))
            elif parts[0] == "param":
                ndim = int(parts[2])
                layout[-1][1].append((parts[1], tuple(int(d) for d in parts[3:3 + ndim])))
            else:
                raise ModelFormatError(f"Unexpected header line {line!r}")
    except (IndexError, ValueError) as e:
        raise ModelFormatError(f"Malformed weights header: {e}") from e
    if count != len(layout):
        raise ModelFormatError(f"Header declares {count} networks, found {len(layout)}")

    out: Dict[str, NetworkWeights] = {}
    offset = 0
    for key, params in layout:
        arrays = {}
        for name, shape in params:
            n = int(np.prod(shape)) if shape else 1
            end = offset + n * DTYPE.itemsize
            if end > len(payload):
                raise ModelFormatError(f"Payload ends inside {key}/{name}")
            arrays[name] = np.frombuffer(payload[offset:end], dtype=DTYPE).astype(np.float64).reshape(shape)
            offset = end
        out[key] = NetworkWeights(arrays)
    if offset != len(payload):
        raise ModelFormatError(f"{len(payload) - offset} trailing bytes after the last parameter")
    return out


def save_weights(weights: Dict[str, NetworkWeights], path: PathLike) -> None:
    Path(path).write_bytes(encode_weights(weights))
    logger.info("Saved %d networks to %s", len(weights), path)


def load_weights(path: PathLike) -> Dict[str, NetworkWeights]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise UnreadableFile(path, e.strerror or str(e)) from e
    return decode_weights(blob)


def save_architecture(spec: CascadeSpec, path: PathLike) -> None:
    Path(path).write_text(spec.model_dump_json(indent=2))


def load_architecture(path: PathLike) -> CascadeSpec:
    try:
        return CascadeSpec.model_validate_json(Path(path).read_text())
    except OSError as e:
        raise UnreadableFile(path, e.strerror or str(e)) from e
    except ValidationError as e:
        raise ModelFormatError(f"Invalid architecture config {path}: {e}") from e
