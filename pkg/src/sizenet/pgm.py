"""Plain-text portable graymap (P2) reading and writing."""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def write_pgm(path, pixels: np.ndarray, maxval: int = 255) -> None:
    """Write values in [0, 1] as an ASCII P2 graymap, rounding to ``maxval`` levels."""
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {pixels.shape}")
    levels = np.rint(np.clip(pixels, 0.0, 1.0) * maxval).astype(int)
    h, w = levels.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"P2\n{w} {h}\n{maxval}\n")
        for row in levels:
            fh.write(" ".join(str(v) for v in row))
            fh.write("\n")


def read_pgm(path) -> np.ndarray:
    """Read a P2 graymap and return values scaled to [0, 1]."""
    with open(path, encoding="ascii") as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0]
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise FormatError("not a P2 graymap", path, 1, tokens[0] if tokens else "")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        values = np.array([int(t) for t in tokens[4:]], dtype=float)
    except (IndexError, ValueError):
        raise FormatError("malformed graymap header or data", path) from None
    if values.size != w * h or maxval <= 0:
        raise FormatError(f"expected {w * h} samples, found {values.size}", path)
    return values.reshape(h, w) / maxval
