"""Event-level data model and per-article ledgers.

Sales and returns arrive as plain CSV event streams (no header)::

    sales.csv    article_id,category,day
    returns.csv  article_id,day,reason        reason in {size_issue, other}

An optional article catalog (``article_id,category,activation_day``) lists
articles that may have no sales at all, so that zero-history articles still
receive a ledger.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FormatError, SizeNetError

Window = tuple[int, int]


class ReturnReason(str, enum.Enum):
    SIZE_ISSUE = "size_issue"
    OTHER = "other"


@dataclass(frozen=True, slots=True)
class SaleEvent:
    article: str
    category: str
    day: int

    def __post_init__(self):
        if not self.article:
            raise SizeNetError("sale event with empty article id")
        if not self.category:
            raise SizeNetError(f"sale event for {self.article} has empty category")
        if self.day < 0:
            raise SizeNetError(f"sale event for {self.article} has negative day {self.day}")


@dataclass(frozen=True, slots=True)
class ReturnEvent:
    article: str
    day: int
    reason: ReturnReason

    def __post_init__(self):
        if not self.article:
            raise SizeNetError("return event with empty article id")
        if self.day < 0:
            raise SizeNetError(f"return event for {self.article} has negative day {self.day}")


@dataclass(frozen=True, slots=True)
class CatalogEntry:
    article: str
    category: str
    activation_day: int


@dataclass(frozen=True, slots=True)
class ArticleLedger:
    article: str
    category: str
    activation_day: int
    n: int
    k: int
    window: Window

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise SizeNetError(
                f"ledger for {self.article} violates 0 <= k <= n (n={self.n}, k={self.k})"
            )
        if self.window[0] > self.window[1]:
            raise SizeNetError(f"invalid window {self.window}")


@dataclass(frozen=True, slots=True)
class CategoryRate:
    category: str
    window: Window
    p: float
    total_n: int
    total_k: int


def _parse_day(field: str, path, line_no, line) -> int:
    try:
        day = int(field)
    except ValueError:
        raise FormatError("day is not an integer", path, line_no, line) from None
    if day < 0:
        raise FormatError("day must be >= 0", path, line_no, line)
    return day


def load_events(path, kind: str) -> list[SaleEvent] | list[ReturnEvent]:
    """Read a sales or returns file, preserving file order.

    Blank lines are skipped; any malformed line raises :class:`FormatError`
    carrying the 1-based line number and the offending text.
    """
    if kind not in ("sales", "returns"):
        raise SizeNetError(f"unknown event kind {kind!r}; expected 'sales' or 'returns'")
    events = []
    with open(path, encoding="utf-8", newline="") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != 3:
                raise FormatError(f"expected 3 fields, found {len(fields)}", path, line_no, line)
            if not fields[0]:
                raise FormatError("empty article id", path, line_no, line)
            if kind == "sales":
                if not fields[1]:
                    raise FormatError("empty category", path, line_no, line)
                day = _parse_day(fields[2], path, line_no, line)
                events.append(SaleEvent(fields[0], fields[1], day))
            else:
                day = _parse_day(fields[1], path, line_no, line)
                try:
                    reason = ReturnReason(fields[2])
                except ValueError:
                    raise FormatError("unknown return reason", path, line_no, line) from None
                events.append(ReturnEvent(fields[0], day, reason))
    return events


def write_sales(path, sales: Iterable[SaleEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in sales:
            fh.write(f"{ev.article},{ev.category},{ev.day}\n")


def write_returns(path, returns: Iterable[ReturnEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in returns:
            fh.write(f"{ev.article},{ev.day},{ev.reason.value}\n")


def load_catalog(path) -> list[CatalogEntry]:
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != 3 or not fields[0] or not fields[1]:
                raise FormatError("expected article_id,category,activation_day", path, line_no, line)
            if fields[0] in seen:
                raise FormatError("duplicate article id", path, line_no, line)
            seen.add(fields[0])
            entries.append(CatalogEntry(fields[0], fields[1], _parse_day(fields[2], path, line_no, line)))
    return entries


def write_catalog(path, entries: Iterable[CatalogEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(f"{e.article},{e.category},{e.activation_day}\n")


def build_ledgers(
    sales: Sequence[SaleEvent],
    returns: Sequence[ReturnEvent],
    window: Window,
    catalog: Sequence[CatalogEntry] | None = None,
    min_age: int | None = None,
) -> list[ArticleLedger]:
    """Aggregate events into one ledger per article, sorted by article id.

    ``n`` counts in-window sales and ``k`` in-window returns whose reason is
    ``size_issue``; other returns are ignored. The window is inclusive on
    both ends. Articles listed in ``catalog`` but without in-window sales get
    an ``n = k = 0`` ledger. ``min_age`` drops articles activated fewer than
    that many days before the window end.
    """
    start, end = window
    if start > end:
        raise SizeNetError(f"invalid window {window}: start > end")

    n_by: dict[str, int] = defaultdict(int)
    category_of: dict[str, str] = {}
    activation: dict[str, int] = {}
    for ev in sales:
        known = category_of.setdefault(ev.article, ev.category)
        if known != ev.category:
            raise SizeNetError(
                f"article {ev.article} sold under two categories: {known!r} and {ev.category!r}"
            )
        # activation is the first observed sale, independent of the window
        if ev.article not in activation or ev.day < activation[ev.article]:
            activation[ev.article] = ev.day
        if start <= ev.day <= end:
            n_by[ev.article] += 1

    if catalog is not None:
        for entry in catalog:
            known = category_of.setdefault(entry.article, entry.category)
            if known != entry.category:
                raise SizeNetError(
                    f"article {entry.article}: catalog category {entry.category!r} "
                    f"disagrees with sales category {known!r}"
                )
            activation[entry.article] = entry.activation_day

    k_by: dict[str, int] = defaultdict(int)
    for ev in returns:
        if not start <= ev.day <= end:
            continue
        if n_by.get(ev.article, 0) == 0:
            raise SizeNetError(
                f"return for article {ev.article} on day {ev.day} but no sales in window {window}"
            )
        if ev.reason is ReturnReason.SIZE_ISSUE:
            k_by[ev.article] += 1

    articles = set(n_by)
    if catalog is not None:
        articles.update(e.article for e in catalog)

    ledgers = []
    for article in sorted(articles):
        act = activation[article]
        if min_age is not None and act > end - min_age:
            continue
        n = n_by.get(article, 0)
        k = k_by.get(article, 0)
        if k > n:
            raise SizeNetError(
                f"article {article}: {k} size returns but only {n} sales in window {window}; "
                "returns for sales made before the window start make the stream inconsistent"
            )
        ledgers.append(ArticleLedger(article, category_of[article], act, n, k, (start, end)))
    return ledgers


def category_rates(ledgers: Sequence[ArticleLedger]) -> dict[str, CategoryRate]:
    """Pool ledgers per category into a size-return rate ``p = sum(k) / sum(n)``.

    An article's own counts are part of its category totals. Categories with
    no sales get ``p = 0``.
    """
    windows = {led.window for led in ledgers}
    if len(windows) > 1:
        raise SizeNetError(f"ledgers span several windows: {sorted(windows)}")
    totals: dict[str, list[int]] = {}
    for led in ledgers:
        t = totals.setdefault(led.category, [0, 0])
        t[0] += led.n
        t[1] += led.k
    rates = {}
    for category in sorted(totals):
        total_n, total_k = totals[category]
        p = total_k / total_n if total_n > 0 else 0.0
        rates[category] = CategoryRate(category, next(iter(windows)), p, total_n, total_k)
    return rates
