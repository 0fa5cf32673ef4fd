"""Frame directories: binary PGM (P5) read/write, grayscale PNG via Pillow, annotated dumps."""
import logging
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..core import BoundingBox, GrayImage, LandmarkSet
from ..errors import MixedDimensions, UnreadableFile

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = (".pgm", ".png")
PathLike = Union[str, Path]
HEADER_CHUNK = 512


def _pgm_header(data: bytes, path: PathLike) -> Optional[Tuple[int, int, int, int]]:
    """Returns (width, height, maxval, payload offset), or None if `data` ends inside the header."""
    if len(data) < 2 and b"P5".startswith(data):
        return None
    if data[:2] != b"P5":
        raise UnreadableFile(path, f"not a binary PGM (magic {data[:2]!r})")
    fields: List[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            return None
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                return None
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        # a field is only complete once the whitespace after it has been seen
        if pos >= len(data):
            return None
        token = data[start:pos]
        if not token.isdigit():
            raise UnreadableFile(path, f"bad header field {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise UnreadableFile(path, f"bad header values {width}x{height}, maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    return width, height, maxval, pos + 1


def read_pgm(path: PathLike) -> GrayImage:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise UnreadableFile(path, e.strerror or str(e)) from e
    header = _pgm_header(data, path)
    if header is None:
        raise UnreadableFile(path, "truncated header")
    width, height, maxval, offset = header
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    payload = data[offset:offset + expected]
    if len(payload) != expected:
        raise UnreadableFile(path, f"raster has {len(payload)} bytes, expected {expected}")
    pixels = np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(np.float64)
    return GrayImage(pixels / maxval)


def write_pgm(path: PathLike, img: Union[GrayImage, np.ndarray]) -> None:
    raster = img.to_uint8() if isinstance(img, GrayImage) else np.asarray(img, dtype=np.uint8)
    h, w = raster.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + raster.tobytes())


def read_png(path: PathLike) -> GrayImage:
    try:
        with Image.open(path) as im:
            raster = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as e:
        raise UnreadableFile(path, str(e)) from e
    return GrayImage(raster / 255.0)


def read_frame(path: PathLike) -> GrayImage:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return read_png(path)
    raise UnreadableFile(path, f"unsupported frame format {suffix!r}")


def frame_size(path: PathLike) -> Tuple[int, int]:
    """(width, height) from the file header only."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        head = b""
        try:
            with open(path, "rb") as fh:
                while True:
                    chunk = fh.read(HEADER_CHUNK)
                    head += chunk
                    header = _pgm_header(head, path)
                    if header is not None:
                        return header[0], header[1]
                    if not chunk:
                        raise UnreadableFile(path, "truncated header")
        except OSError as e:
            raise UnreadableFile(path, e.strerror or str(e)) from e
    try:
        with Image.open(path) as im:
            return im.size
    except (OSError, UnidentifiedImageError) as e:
        raise UnreadableFile(path, str(e)) from e


class FrameSequence(Sequence[GrayImage]):
    """Frames of a directory in sorted filename order, decoded on access."""

    def __init__(self, paths: Sequence[Path]):
        self.paths = list(paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return FrameSequence(self.paths[index])
        return read_frame(self.paths[index])

    def __iter__(self) -> Iterator[GrayImage]:
        for p in self.paths:
            yield read_frame(p)


def load_frames(directory: PathLike) -> FrameSequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise UnreadableFile(directory, "not a directory")
    paths = sorted((p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES), key=lambda p: p.name)
    first: Optional[Tuple[int, int]] = None
    for p in paths:
        size = frame_size(p)
        if first is None:
            first = size
        elif size != first:
            raise MixedDimensions(f"{p.name} is {size[0]}x{size[1]}, earlier frames are {first[0]}x{first[1]}")
    logger.info("Found %d frames in %s", len(paths), directory)
    return FrameSequence(paths)


def save_frames(frames: Sequence[GrayImage], directory: PathLike, prefix: str = "frame") -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(frames))))
    paths = []
    for i, img in enumerate(frames):
        p = directory / f"{prefix}_{i:0{width}d}.pgm"
        write_pgm(p, img)
        paths.append(p)
    return paths


def annotate(img: GrayImage, box: Optional[BoundingBox], landmarks: Optional[LandmarkSet],
             arm: int = 3) -> np.ndarray:
    """uint8 copy of the frame with a white box outline and white landmark crosses."""
    out = img.to_uint8().copy()
    h, w = out.shape
    if box is not None:
        x0, y0 = int(np.clip(round(box.x), 0, w - 1)), int(np.clip(round(box.y), 0, h - 1))
        x1, y1 = int(np.clip(round(box.x2), 0, w - 1)), int(np.clip(round(box.y2), 0, h - 1))
        out[y0, x0:x1 + 1] = out[y1, x0:x1 + 1] = 255
        out[y0:y1 + 1, x0] = out[y0:y1 + 1, x1] = 255
    if landmarks is not None:
        for x, y in np.round(landmarks.as_array()).astype(int):
            if 0 <= x < w and 0 <= y < h:
                out[y, max(x - arm, 0):x + arm + 1] = 255
                out[max(y - arm, 0):y + arm + 1, x] = 255
    return out
