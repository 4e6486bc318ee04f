"""Images, image stacks and their on-disk formats.

Images are stored as ``(height, width)`` float arrays.  Packing into a
vector is column ordered (lexicographic by column), so pixel ``(i, j)``
lands at position ``i + j * height``.

Two file formats are used:

* matrix files: a text header ``rows cols`` followed by ``rows * cols``
  decimal values in row-major order, written with ``repr`` so that a
  round trip is bit exact;
* greyscale images: binary PGM (``P5``) with maxval 65535.  Intensities
  are clipped to ``[0, 1]`` and quantized with round-half-up.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from crosslearn.errors import DimensionMismatchError, MalformedHeaderError

PGM_MAXVAL = 65535


@dataclass(frozen=True)
class Image:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.size == 0:
            raise DimensionMismatchError(f"image data must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image intensities must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class ColumnMean:
    mean: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class Stack:
    """``dim x count`` matrix whose columns are packed images."""

    columns: np.ndarray

    def __post_init__(self):
        # fixed C layout keeps reductions identical however the stack was built
        cols = np.array(self.columns, dtype=float, order="C")
        if cols.ndim == 1:
            cols = cols[:, None]
        if cols.ndim != 2 or cols.shape[0] == 0 or cols.shape[1] == 0:
            raise DimensionMismatchError(f"stack must be a non-empty dim x count matrix, got shape {cols.shape}")
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    @property
    def count(self) -> int:
        return self.columns.shape[1]

    def column(self, l: int) -> np.ndarray:
        return self.columns[:, l]

    @classmethod
    def from_images(cls, images) -> "Stack":
        return cls(np.column_stack([pack(img) for img in images]))

    def image(self, l: int, height: int, width: int | None = None) -> Image:
        return unpack(self.columns[:, l], height, width)


def pack(img: Image) -> np.ndarray:
    return np.asarray(img.data).ravel(order="F").copy()


def unpack(vec, height: int, width: int | None = None) -> Image:
    vec = np.asarray(vec, dtype=float).ravel()
    if width is None:
        width = vec.size // height
    if height * width != vec.size:
        raise DimensionMismatchError(f"cannot unpack {vec.size} values into {height}x{width}")
    return Image(vec.reshape((height, width), order="F"))


def center(stack: Stack) -> tuple[Stack, ColumnMean]:
    mean = stack.columns.mean(axis=1)
    return Stack(stack.columns - mean[:, None]), ColumnMean(mean)


def normalize_max(img: Image) -> Image:
    peak = img.data.max()
    if peak <= 0:
        return img
    return Image(img.data / peak)


# -- matrix files -----------------------------------------------------------


def save_matrix(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise DimensionMismatchError("only 1-D or 2-D arrays can be saved as matrix files")
    rows, cols = matrix.shape
    lines = [f"{rows} {cols}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in matrix)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        body = fh.read()
    parts = header.split()
    try:
        if len(parts) != 2:
            raise ValueError
        rows, cols = int(parts[0]), int(parts[1])
        if rows < 0 or cols < 0:
            raise ValueError
    except ValueError:
        raise MalformedHeaderError(f"{path}: expected header 'rows cols', got {header.strip()!r}") from None
    try:
        values = np.array([float(tok) for tok in body.split()], dtype=float)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: non-numeric value in body ({exc})") from None
    if values.size != rows * cols:
        raise DimensionMismatchError(f"{path}: header declares {rows}x{cols} = {rows * cols} values, found {values.size}")
    return values.reshape(rows, cols)


def save_stack(path, stack: Stack) -> None:
    save_matrix(path, stack.columns)


def load_stack(path) -> Stack:
    return Stack(load_matrix(path))


# -- 16-bit greyscale images ------------------------------------------------


def quantize(data) -> np.ndarray:
    """Map intensities in [0, 1] to 16-bit samples, rounding half up."""
    clipped = np.clip(np.asarray(data, dtype=float), 0.0, 1.0)
    return np.floor(clipped * PGM_MAXVAL + 0.5).astype(">u2")


def save_image(path, img: Image) -> None:
    samples = quantize(img.data)
    header = f"P5\n{img.width} {img.height}\n{PGM_MAXVAL}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(samples.tobytes())


def _pgm_tokens(raw: bytes, count: int):
    # Header tokens are separated by whitespace; '#' starts a comment line.
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeaderError("truncated PGM header")
        tokens.append(raw[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def load_image(path) -> Image:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        tokens, offset = _pgm_tokens(raw, 4)
        if tokens[0] != b"P5":
            raise ValueError
        width, height, maxval = (int(t) for t in tokens[1:])
    except (ValueError, MalformedHeaderError):
        raise MalformedHeaderError(f"{path}: not a binary PGM file") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= PGM_MAXVAL:
        raise MalformedHeaderError(f"{path}: invalid PGM dimensions or maxval")
    dtype = ">u2" if maxval > 255 else "u1"
    nbytes = width * height * np.dtype(dtype).itemsize
    payload = raw[offset : offset + nbytes]
    if len(payload) != nbytes:
        raise DimensionMismatchError(f"{path}: expected {nbytes} raster bytes, found {len(payload)}")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return Image(samples.astype(float) / maxval)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
