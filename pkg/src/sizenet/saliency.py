"""RISE saliency: importance maps from randomly masked copies of an image.

Each mask is a coarse Bernoulli grid, bilinearly upsampled and randomly
shifted by up to one cell. The map is the mask average weighted by the
model's score on the masked image, ``S = sum_i f(I * M_i) M_i / (N p_keep)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from skimage.transform import resize

from .errors import SizeNetError
from .featurizer import featurize_batch
from .pgm import write_pgm
from .student import MLPModel, predict

ScoreFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MaskSet:
    masks: np.ndarray  # (N, H, W)
    grid: tuple[int, int]
    p_keep: float
    seed: int

    @property
    def n(self) -> int:
        return self.masks.shape[0]


def expand_grid(grid: np.ndarray, height: int, width: int, offset: tuple[int, int]) -> np.ndarray:
    """Bilinearly upsample a coarse grid to ``(h+1) x (w+1)`` cells and crop ``height x width`` at ``offset``."""
    gh, gw = grid.shape
    cell_h, cell_w = math.ceil(height / gh), math.ceil(width / gw)
    up = resize(
        grid.astype(float),
        ((gh + 1) * cell_h, (gw + 1) * cell_w),
        order=1,
        mode="reflect",
        anti_aliasing=False,
    )
    dy, dx = offset
    return np.clip(up[dy:dy + height, dx:dx + width], 0.0, 1.0)


def generate_masks(
    n: int,
    grid: tuple[int, int],
    p_keep: float,
    height: int,
    width: int,
    seed: int,
) -> MaskSet:
    gh, gw = grid
    if n < 1:
        raise SizeNetError("need at least one mask")
    if not (1 <= gh <= height and 1 <= gw <= width):
        raise SizeNetError(f"grid {grid} must fit inside a {height}x{width} image")
    if not 0 < p_keep < 1:
        raise SizeNetError(f"p_keep must lie in (0, 1), got {p_keep}")
    rng = np.random.default_rng(seed)
    cell_h, cell_w = math.ceil(height / gh), math.ceil(width / gw)
    cells = rng.random((n, gh, gw)) < p_keep
    dys = rng.integers(0, cell_h, size=n)
    dxs = rng.integers(0, cell_w, size=n)
    masks = np.empty((n, height, width))
    for i in range(n):
        masks[i] = expand_grid(cells[i], height, width, (int(dys[i]), int(dxs[i])))
    return MaskSet(masks, (gh, gw), float(p_keep), seed)


def apply_masks(image: np.ndarray, masks: MaskSet, fill: float = 0.0) -> np.ndarray:
    """Masked copies of ``image``; dropped pixels fade towards ``fill``."""
    image = np.asarray(image, dtype=float)
    return image[None] * masks.masks + fill * (1.0 - masks.masks)


def rise_map(score_fn: ScoreFn, image, masks: MaskSet, fill: float = 0.0, batch_size: int = 250) -> np.ndarray:
    """Saliency map of ``image`` under ``score_fn``.

    ``score_fn`` takes a stack of images ``(B, H, W)`` and returns ``B``
    scores. Scores are reduced against the masks in one fixed-order matrix
    product, so the map is bit-reproducible.
    """
    pixels = np.asarray(getattr(image, "pixels", image), dtype=float)
    if pixels.shape != masks.masks.shape[1:]:
        raise SizeNetError(f"image shape {pixels.shape} does not match masks {masks.masks.shape[1:]}")
    scores = np.empty(masks.n)
    for start in range(0, masks.n, batch_size):
        sub = MaskSet(masks.masks[start:start + batch_size], masks.grid, masks.p_keep, masks.seed)
        scores[start:start + batch_size] = np.asarray(score_fn(apply_masks(pixels, sub, fill)), dtype=float)
    flat = scores @ masks.masks.reshape(masks.n, -1)
    return (flat / (masks.n * masks.p_keep)).reshape(pixels.shape)


def model_score_fn(model: MLPModel) -> ScoreFn:
    """Student output composed with the model's stored image projection."""
    if model.projection is None:
        raise SizeNetError("model has no image projection; saliency needs an image-trained model")

    def score(images: np.ndarray) -> np.ndarray:
        return predict(model, featurize_batch(images, model.projection))

    return score


def localization_score(saliency: np.ndarray, region: tuple[int, int, int, int], q: float) -> float:
    """Share of the top-``q`` fraction of pixels (by saliency) that lie inside ``region``.

    Ties are broken by row-major pixel index. Chance level is the region's
    share of the image area.
    """
    saliency = np.asarray(saliency, dtype=float)
    h, w = saliency.shape
    r, c, rh, rw = region
    if r < 0 or c < 0 or r + rh > h or c + rw > w or rh < 1 or rw < 1:
        raise SizeNetError(f"region {region} lies outside a {h}x{w} map")
    if not 0 < q <= 1:
        raise SizeNetError(f"q must lie in (0, 1], got {q}")
    k = max(1, math.ceil(q * h * w - 1e-9))
    top = np.argsort(-saliency.ravel(), kind="stable")[:k]
    rows, cols = np.divmod(top, w)
    inside = (rows >= r) & (rows < r + rh) & (cols >= c) & (cols < c + rw)
    return float(inside.mean())


def chance_level(shape: tuple[int, int], region: tuple[int, int, int, int]) -> float:
    return region[2] * region[3] / (shape[0] * shape[1])


def write_saliency(path_pgm, saliency: np.ndarray) -> float:
    """Write the map as a P2 graymap scaled so its maximum is 255; returns the scale.

    A pixel value ``v`` in the file corresponds to saliency ``v * scale / 255``.
    The scale goes in a sidecar ``<name>.scale.txt``.
    """
    saliency = np.asarray(saliency, dtype=float)
    scale = float(saliency.max()) if saliency.size and saliency.max() > 0 else 1.0
    write_pgm(path_pgm, saliency / scale)
    Path(path_pgm).with_suffix(".scale.txt").write_text(f"scale = {scale!r}\n")
    return scale
