"""8-bit PGM/PPM input and output, mapped to and from ``[-1, 1]``."""

from __future__ import annotations

import re

import numpy as np

from .quantizer import round_half_away

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def parse_pnm(data: bytes) -> np.ndarray:
    """Binary P5/P6 bytes to a ``(C, H, W)`` uint8 array."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if not m:
            raise ValueError("truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM type {magic!r}; expected binary P5 or P6")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise ValueError("malformed PNM header") from None
    if maxval != 255:
        raise ValueError(f"only 8-bit PNM is supported (maxval {maxval})")
    channels = 1 if magic == b"P5" else 3
    pos += 1  # single whitespace byte after maxval
    n = width * height * channels
    pixels = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos) if len(data) - pos >= n else None
    if pixels is None:
        raise ValueError("truncated PNM raster")
    return pixels.reshape(height, width, channels).transpose(2, 0, 1).copy()


def format_pnm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = pixels[None]
    c, h, w = pixels.shape
    if c not in (1, 3):
        raise ValueError("PNM holds 1 or 3 channels")
    magic = "P5" if c == 1 else "P6"
    return f"{magic}\n{w} {h}\n255\n".encode() + pixels.transpose(1, 2, 0).tobytes()


def to_unit(pixels) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def to_uint8(image) -> np.ndarray:
    """``[-1, 1]`` floats to 8-bit, rounding half away from zero and clamping."""
    v = round_half_away((np.asarray(image, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def read_image(path) -> np.ndarray:
    with open(path, "rb") as f:
        return to_unit(parse_pnm(f.read()))


def write_image(path, image) -> None:
    with open(path, "wb") as f:
        f.write(format_pnm(to_uint8(image)))
