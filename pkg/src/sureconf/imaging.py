"""Image container, synthetic image generation and file I/O.

Two image formats are supported:

* binary PGM (``P5``), 8- or 16-bit, intensities mapped to [0, 1] by
  dividing by ``maxval``;
* the flat-float format: the magic ``b"IMGF64\\n"``, an ASCII line
  ``"width height\\n"``, then ``width * height`` little-endian float64
  values in row-major order. It round-trips bit-exactly.

Numeric tables are written as CSV with floats printed to 17 significant
digits.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from numbers import Integral, Real

import numpy as np

from .rng import Rng

__all__ = [
    "Image",
    "ImageFormatError",
    "generate_smooth_image",
    "center_crop",
    "read_image",
    "write_image",
    "read_pgm",
    "write_pgm",
    "write_table",
    "read_table",
    "format_value",
]

FLAT_MAGIC = b"IMGF64\n"


class ImageFormatError(ValueError):
    """Raised for malformed, truncated or unsupported image files."""


@dataclass(frozen=True, eq=False)
class Image:
    """Single-channel raster of real intensities.

    ``data`` is stored as a read-only float64 array of shape
    ``(height, width)``; nominal range is [0, 1] but it is not enforced.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "Image":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} values, got {values.size}")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Image(width={self.width}, height={self.height})"


def generate_smooth_image(width: int, height: int, correlation_length: float, seed: int,
                          stream: int = 0) -> Image:
    """Gaussian random field rescaled to span exactly [0, 1].

    White noise is filtered in the Fourier domain by the transfer function
    of a Gaussian kernel with standard deviation ``correlation_length``
    pixels (periodic boundary), then affinely mapped so that the minimum is
    0.0 and the maximum 1.0.
    """
    if width < 8 or height < 8:
        raise ValueError("width and height must be at least 8")
    if not correlation_length > 0:
        raise ValueError("correlation_length must be positive")
    noise = Rng(seed, stream).normal((height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    transfer = np.exp(-2.0 * np.pi**2 * correlation_length**2 * (fx**2 + fy**2))
    field = np.fft.ifft2(np.fft.fft2(noise) * transfer).real
    lo, hi = field.min(), field.max()
    if not hi > lo:
        raise ValueError("degenerate field; increase the image size or decrease correlation_length")
    return Image((field - lo) / (hi - lo))


def center_crop(image: Image, width: int, height: int) -> Image:
    """Central ``width x height`` window; the image must be at least that large."""
    if image.width < width or image.height < height:
        raise ValueError(
            f"image {image.width}x{image.height} is smaller than the requested {width}x{height}")
    top = (image.height - height) // 2
    left = (image.width - width) // 2
    return Image(image.data[top:top + height, left:left + width])


# -- PGM ---------------------------------------------------------------------

def _pgm_header(buf: bytes):
    """Parse the four header tokens; returns (tokens, payload offset)."""
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < 4:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise ImageFormatError("malformed PGM header: unexpected end of file")
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise ImageFormatError("malformed PGM header: missing separator after maxval")
    return tokens, pos + 1


def _parse_pgm(buf: bytes) -> Image:
    tokens, offset = _pgm_header(buf)
    magic = tokens[0]
    if magic == b"P2":
        raise ImageFormatError("unsupported PGM variant P2 (ASCII); only binary P5 is accepted")
    if magic != b"P5":
        raise ImageFormatError(f"unsupported PGM variant {magic!r}; only binary P5 is accepted")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header: non-integer field") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"malformed PGM header: {width}x{height}, maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    payload = buf[offset:offset + nbytes]
    if len(payload) < nbytes:
        raise ImageFormatError(f"truncated PGM payload: expected {nbytes} bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if np.any(values > maxval):
        raise ImageFormatError("PGM sample exceeds maxval")
    return Image.from_flat(width, height, values / maxval)


def read_pgm(path) -> Image:
    with open(path, "rb") as fh:
        return _parse_pgm(fh.read())


def write_pgm(path, image: Image, bits: int = 16) -> None:
    """Quantize to ``bits`` (8 or 16) after clipping to [0, 1]."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(image.data, 0.0, 1.0) * maxval)
    raster = q.astype(">u2" if bits == 16 else "u1").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii"))
        fh.write(raster)


# -- flat float ----------------------------------------------------------------

def _parse_flat(buf: bytes) -> Image:
    rest = buf[len(FLAT_MAGIC):]
    newline = rest.find(b"\n")
    if newline < 0:
        raise ImageFormatError("malformed IMGF64 header: missing dimension line")
    try:
        width, height = (int(t) for t in rest[:newline].decode("ascii").split())
    except ValueError as exc:
        raise ImageFormatError("malformed IMGF64 header: expected 'width height'") from exc
    if width < 1 or height < 1:
        raise ImageFormatError("malformed IMGF64 header: non-positive dimension")
    payload = rest[newline + 1:]
    nbytes = 8 * width * height
    if len(payload) < nbytes:
        raise ImageFormatError(f"truncated IMGF64 payload: expected {nbytes} bytes, got {len(payload)}")
    values = np.frombuffer(payload[:nbytes], dtype="<f8")
    return Image.from_flat(width, height, values)


def write_image(path, image: Image) -> None:
    """Write ``image``; ``.pgm`` paths get 16-bit PGM, anything else IMGF64."""
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, image)
        return
    with open(path, "wb") as fh:
        fh.write(FLAT_MAGIC)
        fh.write(f"{image.width} {image.height}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image.data).astype("<f8").tobytes())


def read_image(path) -> Image:
    """Read a PGM (P5) or IMGF64 file, dispatching on the magic bytes."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf.startswith(FLAT_MAGIC):
        return _parse_flat(buf)
    if buf[:1] == b"P":
        return _parse_pgm(buf)
    raise ImageFormatError(f"{os.fspath(path)}: unrecognized image format")


# -- tables ---------------------------------------------------------------------

def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, Integral):
        return str(int(value))
    if isinstance(value, Real):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def write_table(path, column_names, rows) -> None:
    """Write a CSV file: header row, then one line per row (CRLF line ends)."""
    column_names = list(column_names)
    rows = [list(r) for r in rows]
    for i, row in enumerate(rows):
        if len(row) != len(column_names):
            raise ValueError(
                f"row {i} has {len(row)} values, expected {len(column_names)}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(column_names)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Inverse of :func:`write_table`; values are returned as strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{os.fspath(path)}: empty table") from None
        return header, [row for row in reader]
