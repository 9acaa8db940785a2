"""Grayscale raster I/O and MSB bit-field access.

Images are plain ``numpy.uint8`` arrays of shape ``(height, width)``.
Bit 7 is the most significant bit; "the top ``n`` bits" of a pixel are
always read and written MSB-first.
"""
from __future__ import annotations

import os
import re

import numpy as np

MIN_SIDE = 8


class PGMError(ValueError):
    """Base class for PGM parse failures."""


class MalformedHeader(PGMError):
    pass


class UnsupportedDepth(PGMError):
    pass


class TruncatedData(PGMError):
    pass


def check_image(img, min_side: int = MIN_SIDE) -> np.ndarray:
    """Validate and return ``img`` as a 2-D uint8 array (no copy if already valid).

    File I/O passes ``min_side=1``; the embedding pipeline needs at least 8x8.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    h, w = arr.shape
    if h < min_side or w < min_side:
        raise ValueError(f"image must be at least {min_side}x{min_side}, got {w}x{h}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("pixel intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) PGM byte string."""
    if not data.startswith(b"P5"):
        raise MalformedHeader("not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise MalformedHeader("incomplete PGM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise MalformedHeader(f"non-numeric header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedDepth(f"only maxval 255 is supported, got {maxval}")
    n = width * height
    raster = data[pos : pos + n]
    if len(raster) < n:
        raise TruncatedData(f"expected {n} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def load_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def pgm_bytes(img) -> bytes:
    img = check_image(img, min_side=1)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def save_pgm(img, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(img))


def replace_msbs(pixel: int, nbits: int, databits: int) -> int:
    """Overwrite the top ``nbits`` of ``pixel`` with ``databits`` (MSB-first)."""
    if not 0 <= nbits <= 8:
        raise ValueError(f"nbits must be in 0..8, got {nbits}")
    if not 0 <= databits < (1 << nbits):
        raise ValueError(f"databits {databits} does not fit in {nbits} bits")
    low = 8 - nbits
    return (databits << low) | (pixel & ((1 << low) - 1))


def read_msbs(pixel: int, nbits: int) -> int:
    if not 0 <= nbits <= 8:
        raise ValueError(f"nbits must be in 0..8, got {nbits}")
    return (pixel & 0xFF) >> (8 - nbits)


def low_mask(nbits):
    """Mask keeping the ``8 - nbits`` low bits; works on scalars and arrays."""
    return (1 << (8 - np.asarray(nbits, dtype=np.int64))) - 1


def psnr(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)
