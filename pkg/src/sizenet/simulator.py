"""Synthetic marketplace with known size-issue propensities.

Every article gets a latent probability ``q`` that a sale comes back for a
size reason, drawn from a Beta distribution centred on its category's base
rate. Sales and returns are generated from ``q``, and each article also gets
a small grayscale image whose cue patch brightness grows with ``q``. Because
``q`` is known, teacher and student quality can be scored against the truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, SizeNetError
from .ingest import (
    CatalogEntry,
    ReturnEvent,
    ReturnReason,
    SaleEvent,
    write_catalog,
    write_returns,
    write_sales,
)
from .pgm import read_pgm, write_pgm
from .seeding import rng_for

RETURN_LAG_MEAN_DAYS = 14.0
CUE_FLOOR = 0.3
CUE_GAIN = 0.7


@dataclass(frozen=True)
class SimConfig:
    n_categories: int = 3
    articles_per_category: int = 600
    mean_sales_per_article: float = 200.0
    category_base_rate: tuple[float, ...] = (0.15, 0.25, 0.35)
    propensity_spread: float = 10.0
    coldstart_fraction: float = 0.3
    coldstart_max_sales: int = 5
    horizon_days: int = 180
    image_side: int = 32
    seed: int = 0
    other_return_rate: float = 0.1
    background_amplitude: float = 0.05
    cue_side: int | None = None

    def __post_init__(self):
        rates = self.category_base_rate
        if isinstance(rates, (int, float)):
            rates = (float(rates),) * self.n_categories
        object.__setattr__(self, "category_base_rate", tuple(float(r) for r in rates))
        self.validate()

    def validate(self) -> None:
        for name in ("n_categories", "articles_per_category", "horizon_days", "image_side"):
            if getattr(self, name) < 1:
                raise SizeNetError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.coldstart_max_sales < 0:
            raise SizeNetError("coldstart_max_sales must be >= 0")
        if not self.mean_sales_per_article > 0:
            raise SizeNetError("mean_sales_per_article must be positive")
        if not self.propensity_spread > 0:
            raise SizeNetError("propensity_spread must be positive")
        if len(self.category_base_rate) != self.n_categories:
            raise SizeNetError(
                f"category_base_rate has {len(self.category_base_rate)} entries "
                f"for {self.n_categories} categories"
            )
        if any(not 0 < r < 1 for r in self.category_base_rate):
            raise SizeNetError(f"category base rates must lie in (0, 1): {self.category_base_rate}")
        if not 0 <= self.coldstart_fraction <= 1:
            raise SizeNetError("coldstart_fraction must lie in [0, 1]")
        if not 0 <= self.other_return_rate < 1:
            raise SizeNetError("other_return_rate must lie in [0, 1)")
        if not 0 <= self.background_amplitude <= 0.2:
            raise SizeNetError("background_amplitude must lie in [0, 0.2]")
        cue = self.cue
        if cue < 1 or cue > self.image_side:
            raise SizeNetError(f"cue side {cue} does not fit a {self.image_side}px image")
        if self.n_categories > self.cue_cells_per_side**2:
            raise SizeNetError(
                f"{self.n_categories} categories need distinct cue cells but only "
                f"{self.cue_cells_per_side ** 2} fit in a {self.image_side}px image"
            )

    @property
    def cue(self) -> int:
        return self.cue_side if self.cue_side is not None else max(1, self.image_side // 4)

    @property
    def cue_cells_per_side(self) -> int:
        return self.image_side // self.cue

    @property
    def n_articles(self) -> int:
        return self.n_categories * self.articles_per_category


@dataclass(frozen=True, slots=True)
class GroundTruth:
    article: str
    q: float
    true_label: int


@dataclass(frozen=True)
class SyntheticImage:
    pixels: np.ndarray
    cue_region: tuple[int, int, int, int]  # row, col, height, width


@dataclass
class Simulation:
    sales: list[SaleEvent]
    returns: list[ReturnEvent]
    truths: list[GroundTruth]
    images: dict[str, SyntheticImage]
    catalog: list[CatalogEntry] = field(default_factory=list)


def article_id(index: int) -> str:
    return f"sku{index:05d}"


def category_name(index: int) -> str:
    return f"cat{index:02d}"


def cue_region(category_index: int, config: SimConfig) -> tuple[int, int, int, int]:
    """Cue rectangle for a category: one cell of a grid of cue-sized cells.

    Categories are spread with a stride coprime to the cell count so that the
    first few categories do not all sit in the top row.
    """
    g = config.cue_cells_per_side
    cells = g * g
    stride = next(s for s in range(cells // 2 + 1, 0, -1) if math.gcd(s, cells) == 1) if cells > 1 else 1
    cell = (category_index * stride) % cells
    row, col = divmod(cell, g)
    c = config.cue
    return row * c, col * c, c, c


def cue_intensity(q: float) -> float:
    return CUE_FLOOR + CUE_GAIN * q


def render_image(article: str, truth: GroundTruth, category_index: int, config: SimConfig) -> SyntheticImage:
    if truth.article != article:
        raise SizeNetError(f"ground truth for {truth.article} passed for article {article}")
    side = config.image_side
    rng = rng_for(config.seed, "image", article)
    pixels = rng.uniform(0.0, config.background_amplitude, size=(side, side))
    r, c, h, w = cue_region(category_index, config)
    pixels[r:r + h, c:c + w] = cue_intensity(truth.q)
    return SyntheticImage(pixels, (r, c, h, w))


def simulate(config: SimConfig) -> Simulation:
    config.validate()
    n_articles = config.n_articles
    n_cold = round(config.coldstart_fraction * n_articles)
    cold = np.zeros(n_articles, dtype=bool)
    cold[rng_for(config.seed, "coldstart").permutation(n_articles)[:n_cold]] = True

    q = np.empty(n_articles)
    sales: list[tuple[int, str, str]] = []
    returns: list[tuple[int, str, ReturnReason]] = []
    catalog = []
    lag_p = 1.0 / RETURN_LAG_MEAN_DAYS
    last_day = config.horizon_days - 1

    for i in range(n_articles):
        cat_idx = i // config.articles_per_category
        art, cat = article_id(i), category_name(cat_idx)
        rng = rng_for(config.seed, "article", i)
        mu = config.category_base_rate[cat_idx]
        q[i] = rng.beta(mu * config.propensity_spread, (1 - mu) * config.propensity_spread)
        activation = int(rng.integers(0, config.horizon_days // 2 + 1))
        catalog.append(CatalogEntry(art, cat, activation))
        if cold[i]:
            n = int(rng.integers(0, config.coldstart_max_sales + 1))
        else:
            n = int(rng.poisson(config.mean_sales_per_article))
        days = np.sort(rng.integers(activation, config.horizon_days, size=n))
        u = rng.random(n)
        size_ret = u < q[i]
        other_ret = ~size_ret & (u < q[i] + (1 - q[i]) * config.other_return_rate)
        lags = rng.geometric(lag_p, size=n)
        ret_days = np.minimum(days + lags, last_day)
        for d in days:
            sales.append((int(d), art, cat))
        for d, s, o in zip(ret_days, size_ret, other_ret):
            if s:
                returns.append((int(d), art, ReturnReason.SIZE_ISSUE))
            elif o:
                returns.append((int(d), art, ReturnReason.OTHER))

    truths = []
    images = {}
    for cat_idx in range(config.n_categories):
        lo = cat_idx * config.articles_per_category
        hi = lo + config.articles_per_category
        cat_mean = float(q[lo:hi].mean())
        for i in range(lo, hi):
            truth = GroundTruth(article_id(i), float(q[i]), int(q[i] > cat_mean))
            truths.append(truth)
            images[truth.article] = render_image(truth.article, truth, cat_idx, config)

    sales.sort()
    returns.sort(key=lambda r: (r[0], r[1], r[2].value))
    return Simulation(
        sales=[SaleEvent(a, c, d) for d, a, c in sales],
        returns=[ReturnEvent(a, d, reason) for d, a, reason in returns],
        truths=truths,
        images=images,
        catalog=catalog,
    )


def write_truth(path, truths: Sequence[GroundTruth]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("article_id,q,true_label\n")
        for t in truths:
            fh.write(f"{t.article},{t.q!r},{t.true_label}\n")


def load_truth(path) -> dict[str, GroundTruth]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "article_id,q,true_label":
            raise FormatError("bad ground-truth header", path, 1, header)
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                out[fields[0]] = GroundTruth(fields[0], float(fields[1]), int(fields[2]))
            except (IndexError, ValueError):
                raise FormatError("expected article_id,q,true_label", path, line_no, line) from None
    return out


def write_simulation(sim: Simulation, out_dir) -> dict[str, Path]:
    """Write the event streams, catalog, ground truth and images under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "sales": out / "sales.csv",
        "returns": out / "returns.csv",
        "truth": out / "truth.csv",
        "catalog": out / "articles.csv",
        "images": out / "images",
    }
    write_sales(paths["sales"], sim.sales)
    write_returns(paths["returns"], sim.returns)
    write_truth(paths["truth"], sim.truths)
    write_catalog(paths["catalog"], sim.catalog)
    paths["images"].mkdir(exist_ok=True)
    with open(out / "cue_regions.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("article_id,row,col,height,width\n")
        for art in sorted(sim.images):
            img = sim.images[art]
            write_pgm(paths["images"] / f"{art}.pgm", img.pixels)
            fh.write(f"{art},{','.join(str(v) for v in img.cue_region)}\n")
    paths["cue_regions"] = out / "cue_regions.csv"
    return paths


def load_images(image_dir, articles: Sequence[str]) -> np.ndarray:
    """Stack ``<article>.pgm`` files from ``image_dir`` in the given order."""
    image_dir = Path(image_dir)
    stack = []
    for art in articles:
        path = image_dir / f"{art}.pgm"
        if not path.exists():
            raise SizeNetError(f"missing image for article {art}: {path}")
        stack.append(read_pgm(path))
    return np.stack(stack) if stack else np.empty((0, 0, 0))


def load_cue_regions(path) -> dict[str, tuple[int, int, int, int]]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                out[fields[0]] = tuple(int(v) for v in fields[1:5])
            except (IndexError, ValueError):
                raise FormatError("expected article_id,row,col,height,width", path, line_no, line) from None
    return out
