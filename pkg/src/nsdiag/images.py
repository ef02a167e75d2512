"""Grayscale image carrier and ASCII portable graymap (PGM "P2") I/O.

All image-like artifacts (X-ray stand-ins, saliency maps, segmentation
masks) are stored as P2 text with maxval 255; a stored pixel is
``round(value * 255)`` for values in [0, 1].
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError

PGM_MAXVAL = 255


@dataclass(frozen=True)
class GrayImage:
    """Row-major grayscale image with pixel values in [0, 1]."""

    width: int
    height: int
    pixels: tuple

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if len(self.pixels) != self.width * self.height:
            raise DataError(
                f"expected {self.width * self.height} pixels, got {len(self.pixels)}"
            )
        for p in self.pixels:
            if not (0.0 <= p <= 1.0):
                raise DataError(f"pixel value {p} outside [0, 1]")

    @property
    def size(self):
        return self.width * self.height

    def to_array(self):
        """Flat float64 array, row-major."""
        return np.asarray(self.pixels, dtype=np.float64)

    @classmethod
    def from_array(cls, arr, width=None, height=None):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            height, width = arr.shape
            arr = arr.reshape(-1)
        elif arr.ndim == 1:
            if width is None or height is None:
                raise DataError("width and height required for flat pixel arrays")
        else:
            raise DataError(f"expected 1-D or 2-D pixel array, got ndim={arr.ndim}")
        return cls(width=int(width), height=int(height), pixels=tuple(float(p) for p in arr))


def pgm_text(width, height, values):
    """Render a value grid in [0, 1] as ASCII P2 text, one image row per line."""
    vals = list(values)
    if len(vals) != width * height:
        raise DataError(f"expected {width * height} values, got {len(vals)}")
    lines = ["P2", f"{width} {height}", str(PGM_MAXVAL)]
    for r in range(height):
        row = vals[r * width : (r + 1) * width]
        lines.append(" ".join(str(int(round(v * PGM_MAXVAL))) for v in row))
    return "\n".join(lines) + "\n"


def write_pgm(path, width, height, values):
    with open(path, "w", encoding="ascii") as f:
        f.write(pgm_text(width, height, values))


def parse_pgm(text):
    """Parse P2 text into (width, height, values) with values in [0, 1]."""
    tokens = []
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ParseError("not an ASCII PGM (missing P2 magic)")
    if len(tokens) < 4:
        raise ParseError("truncated PGM header")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ParseError(f"bad PGM header: {exc}") from exc
    if width <= 0 or height <= 0 or maxval <= 0:
        raise ParseError("PGM header values must be positive")
    body = tokens[4:]
    if len(body) != width * height:
        raise ParseError(f"expected {width * height} pixels, got {len(body)}")
    try:
        raw = [int(t) for t in body]
    except ValueError as exc:
        raise ParseError(f"bad pixel token: {exc}") from exc
    for v in raw:
        if not (0 <= v <= maxval):
            raise ParseError(f"pixel {v} outside [0, {maxval}]")
    values = tuple(v / maxval for v in raw)
    return width, height, values


def read_pgm(path):
    with open(path, "r", encoding="ascii") as f:
        width, height, values = parse_pgm(f.read())
    return GrayImage(width=width, height=height, pixels=values)
