"""Fixed-width feature vectors for the student.

Features come either from an external embedding CSV (``article_id,v1,...,vD``)
or from synthetic images through a seeded Gaussian random projection, which
stands in for a pretrained image backbone.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, SizeNetError

DEFAULT_DIM = 128


@dataclass(frozen=True)
class ProjectionSpec:
    input_dim: int
    output_dim: int = DEFAULT_DIM
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise SizeNetError(f"projection dims must be >= 1, got {self.input_dim}x{self.output_dim}")


@functools.lru_cache(maxsize=8)
def projection_matrix(spec: ProjectionSpec) -> np.ndarray:
    """The ``output_dim x input_dim`` projection, already scaled by ``1/sqrt(output_dim)``.

    With that scaling ``E||R x||^2 = ||x||^2``. The returned array is read-only
    and shared between callers.
    """
    rng = np.random.default_rng(spec.seed)
    r = rng.standard_normal((spec.output_dim, spec.input_dim))
    r /= math.sqrt(spec.output_dim)
    r.setflags(write=False)
    return r


def featurize_batch(images: np.ndarray, spec: ProjectionSpec) -> np.ndarray:
    """Project a stack of images of shape ``(B, H, W)`` to ``(B, output_dim)``."""
    images = np.asarray(images, dtype=float)
    flat = images.reshape(images.shape[0], -1)
    if flat.shape[1] != spec.input_dim:
        raise SizeNetError(
            f"image has {flat.shape[1]} pixels but the projection expects {spec.input_dim}"
        )
    return flat @ projection_matrix(spec).T


def featurize_image(img, spec: ProjectionSpec) -> np.ndarray:
    pixels = getattr(img, "pixels", img)
    return featurize_batch(np.asarray(pixels, dtype=float)[None], spec)[0]


class Standardizer:
    """Per-feature z-scoring fitted on training features. Off by default in the pipeline."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        features = np.asarray(features, dtype=float)
        std = features.std(axis=0)
        return cls(features.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) / self.scale


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Read ``article_id,v1,...,vD`` rows; ``D`` is fixed by the first row."""
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            article, values = fields[0], fields[1:]
            if not article:
                raise FormatError("empty article id", path, line_no, line[:60])
            if dim is None:
                if not values:
                    raise FormatError("row has no feature values", path, line_no, line[:60])
                dim = len(values)
            elif len(values) != dim:
                raise FormatError(f"expected {dim} values, found {len(values)}", path, line_no, line[:60])
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise FormatError("non-numeric feature value", path, line_no, line[:60]) from None
            if not np.all(np.isfinite(vec)):
                raise FormatError("non-finite feature value", path, line_no, line[:60])
            if article in out:
                raise FormatError(f"duplicate article id {article!r}", path, line_no)
            out[article] = vec
    return out


def write_embeddings(path, features: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for article in sorted(features):
            fh.write(article + "," + ",".join(repr(float(v)) for v in features[article]) + "\n")
