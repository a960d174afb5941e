"""Statistical teacher: binomial confidence scores and weak labels.

An article with ``n`` purchases and ``k`` size-related returns is compared with
its category's size-return rate ``p``. The label says whether the article
returns for size more often than its category; the score ``s = -ln L`` with
``L = C(n, k) p^k (1 - p)^(n - k)`` says how sure we are, and ``w = ln(1 + s)``
is the per-example training weight handed to the student.

All logarithms are natural, so scores are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import FormatError, SizeNetError
from .ingest import ArticleLedger, CategoryRate


@dataclass(frozen=True, slots=True)
class WeakLabel:
    article: str
    y: int
    s: float
    w: float


def _check(n: int, k: int, p: float) -> None:
    if n < 0 or k < 0:
        raise SizeNetError(f"counts must be non-negative (n={n}, k={k})")
    if k > n:
        raise SizeNetError(f"k={k} exceeds n={n}")
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise SizeNetError(f"rate p={p} outside [0, 1]")


def _xlogy(x: int, log_y: float) -> float:
    # 0 * ln(0) = 0
    return 0.0 if x == 0 else x * log_y


def log_likelihood(n: int, k: int, p: float) -> float:
    """Natural log of the binomial probability of ``k`` successes in ``n`` draws."""
    _check(n, k, p)
    log_comb = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    log_p = math.log(p) if p > 0 else -math.inf
    log_q = math.log1p(-p) if p < 1 else -math.inf
    return log_comb + _xlogy(k, log_p) + _xlogy(n - k, log_q)


def confidence_score(n: int, k: int, p: float) -> float:
    s = -log_likelihood(n, k, p)
    # lgamma rounding can leave a -0.0 or a tiny negative when L == 1
    return s if s > 0.0 else 0.0


def assign_label(n: int, k: int, p: float) -> int:
    """1 if the article's size-return rate strictly exceeds ``p``, else 0.

    Ties and articles without sales are class 0. ``k / n`` is compared against
    ``p`` rather than ``k`` against ``n * p``: when ``p`` is itself a ratio of
    counts both sides are correctly rounded quotients, so exact ties survive.
    """
    _check(n, k, p)
    return int(n > 0 and k / n > p)


def sample_weight(s: float) -> float:
    if s < 0 or math.isnan(s):
        raise SizeNetError(f"confidence score must be >= 0, got {s}")
    return math.log1p(s)


def kl_asymptote(n: int, k: int, p: float) -> float:
    """``n * KL(k/n || p)`` for Bernoulli distributions, in nats.

    The large-``n`` limit of :func:`confidence_score`. Undefined on the
    boundary (``k`` in ``{0, n}`` or ``p`` in ``{0, 1}``).
    """
    _check(n, k, p)
    if not 0 < k < n:
        raise SizeNetError(f"kl_asymptote needs 0 < k < n (n={n}, k={k})")
    if not 0 < p < 1:
        raise SizeNetError(f"kl_asymptote needs 0 < p < 1 (p={p})")
    r = k / n
    return n * (r * math.log(r / p) + (1 - r) * math.log((1 - r) / (1 - p)))


def score_bounds(n: int, p: float) -> tuple[float, float]:
    """Largest scores attainable for ``n`` sales at category rate ``p``.

    Returns ``(-n ln p, -n ln(1 - p))``: the score when every sale came back
    for size, and when none did.
    """
    if n < 1:
        raise SizeNetError(f"score_bounds needs n >= 1 (n={n})")
    if not 0 < p < 1:
        raise SizeNetError(f"score_bounds needs 0 < p < 1 (p={p})")
    return -n * math.log(p), -n * math.log1p(-p)


def weak_label(article: str, n: int, k: int, p: float) -> WeakLabel:
    s = confidence_score(n, k, p)
    return WeakLabel(article, assign_label(n, k, p), s, sample_weight(s))


def label_dataset(
    ledgers: Sequence[ArticleLedger], rates: Mapping[str, CategoryRate]
) -> list[WeakLabel]:
    labels = []
    for led in ledgers:
        rate = rates.get(led.category)
        if rate is None:
            raise SizeNetError(f"no category rate for category {led.category!r} (article {led.article})")
        labels.append(weak_label(led.article, led.n, led.k, rate.p))
    labels.sort(key=lambda lab: lab.article)
    return labels


def write_labels(path, labels: Sequence[WeakLabel]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("article_id,y,s,w\n")
        for lab in labels:
            fh.write(f"{lab.article},{lab.y},{lab.s:.9g},{lab.w:.9g}\n")


def load_labels(path) -> list[WeakLabel]:
    labels = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "article_id,y,s,w":
            raise FormatError("bad labels header", path, 1, header)
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 4:
                raise FormatError("expected article_id,y,s,w", path, line_no, line)
            try:
                y, s, w = int(fields[1]), float(fields[2]), float(fields[3])
            except ValueError:
                raise FormatError("non-numeric label field", path, line_no, line) from None
            if y not in (0, 1) or s < 0 or w < 0:
                raise FormatError("label out of range", path, line_no, line)
            if fields[0] in seen:
                raise FormatError("duplicate article id", path, line_no, line)
            seen.add(fields[0])
            labels.append(WeakLabel(fields[0], y, s, w))
    return labels
