"""Evaluation: ROC/AUC, precision-recall/AP, accuracy against teacher-weight
thresholds, teacher-student agreement quadrants and cold-start accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import SizeNetError

THRESHOLD = 0.5
MIN_RELIABLE_SUBSET = 30


def _sweep(scores, labels):
    """Cumulative (TP, FP) counts at each distinct score, highest score first."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise SizeNetError(f"scores and labels must be equal-length vectors ({scores.shape} vs {labels.shape})")
    if np.any((labels != 0) & (labels != 1)):
        raise SizeNetError("labels must be 0 or 1")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # last index of each run of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    return s[ends], tp.astype(np.int64), fp.astype(np.int64)


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC points from (0, 0) to (1, 1) and the trapezoidal area under them.

    Tied scores form one threshold. The area is accumulated on integer counts
    and divided once, so it equals the pairwise concordance with ties scored
    one half.
    """
    _, tp, fp = _sweep(scores, labels)
    pos, neg = int(tp[-1]), int(fp[-1])
    if pos == 0 or neg == 0:
        raise SizeNetError("ROC AUC needs both classes present")
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    points = [(int(f) / neg, int(t) / pos) for f, t in zip(fp, tp)]
    return points, twice_area / (2 * pos * neg)


def pr_ap(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """Precision-recall points (recall, precision) and step-wise average precision.

    ``AP = sum_i (R_i - R_{i-1}) * P_i`` over distinct thresholds, no interpolation.
    """
    _, tp, fp = _sweep(scores, labels)
    pos = int(tp[-1])
    if pos == 0:
        raise SizeNetError("average precision needs at least one positive")
    recall = tp / pos
    precision = tp / (tp + fp)
    prev = np.r_[0.0, recall[:-1]]
    ap = float(np.sum((recall - prev) * precision))
    return [(float(r), float(p)) for r, p in zip(recall, precision)], ap


@dataclass(frozen=True)
class TauPoint:
    tau: float
    subset_size: int
    accuracy: float | None
    high_variance: bool


def accuracy_vs_tau(predictions, labels, weights, taus) -> list[TauPoint]:
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=int)
    weights = np.asarray(weights, dtype=float)
    if not predictions.shape == labels.shape == weights.shape:
        raise SizeNetError("predictions, labels and weights must have equal lengths")
    taus = [float(t) for t in taus]
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise SizeNetError("taus must be ascending")
    correct = (predictions >= THRESHOLD) == (labels == 1)
    out = []
    for tau in taus:
        mask = weights >= tau
        size = int(mask.sum())
        acc = float(correct[mask].mean()) if size else None
        out.append(TauPoint(tau, size, acc, size < MIN_RELIABLE_SUBSET))
    return out


def weight_quantile_taus(weights, quantiles=None) -> list[float]:
    """Default tau grid: the 0, 0.1, ..., 0.9 quantiles of the weights.

    The 0-quantile is reported as tau = 0, which selects every example since
    weights are non-negative.
    """
    if quantiles is None:
        quantiles = np.arange(10) / 10
    w = np.asarray(weights, dtype=float)
    taus = [float(t) for t in np.quantile(w, quantiles, method="inverted_cdf")]
    return [0.0 if q == 0 else t for q, t in zip(quantiles, taus)]


@dataclass
class Quadrants:
    """Counts per true class over {prediction >= 0.5} x {weight > split}.

    ``counts[y][(pred_high, w_high)]``. The split is strict so that an
    all-zero weight vector (median 0) lands entirely on the low side. The
    lower-right region is where the teacher is confident and the student
    disagrees with it.
    """

    w_split: float
    counts: dict[int, dict[tuple[bool, bool], int]]
    scatter: list[tuple[float, float, int]] = field(repr=False)

    @property
    def lower_right(self) -> int:
        # class 1 predicted low, or class 0 predicted high, with a confident teacher
        return self.counts[1][(False, True)] + self.counts[0][(True, True)]

    @property
    def total(self) -> int:
        return sum(sum(c.values()) for c in self.counts.values())


def agreement_quadrants(predictions, weights, labels, w_split: float | None = None) -> Quadrants:
    predictions = np.asarray(predictions, dtype=float)
    weights = np.asarray(weights, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if not predictions.shape == labels.shape == weights.shape:
        raise SizeNetError("predictions, weights and labels must have equal lengths")
    if w_split is None:
        w_split = float(np.median(weights)) if weights.size else 0.0
    high_pred = predictions >= THRESHOLD
    high_w = weights > w_split
    counts = {}
    for y in (0, 1):
        sel = labels == y
        counts[y] = {
            (p, h): int(np.sum(sel & (high_pred == p) & (high_w == h)))
            for p in (False, True)
            for h in (False, True)
        }
    scatter = [(float(w), float(p), int(y)) for w, p, y in zip(weights, predictions, labels)]
    return Quadrants(float(w_split), counts, scatter)


def coldstart_slice(predictions: Mapping[str, float], ground_truth, ledgers, max_sales: int) -> float | None:
    """Accuracy against the true label on articles with at most ``max_sales`` sales.

    ``ground_truth`` maps article id to an object with ``true_label`` (or to
    the label itself); only articles present in ``predictions`` are scored.
    """
    correct = []
    for led in ledgers:
        if led.n > max_sales or led.article not in predictions:
            continue
        truth = ground_truth[led.article]
        label = getattr(truth, "true_label", truth)
        correct.append((predictions[led.article] >= THRESHOLD) == (label == 1))
    return float(np.mean(correct)) if correct else None


@dataclass
class EvalReport:
    roc: list[tuple[float, float]]
    auc: float
    pr: list[tuple[float, float]]
    ap: float
    tau_sweep: list[TauPoint]
    quadrants: Quadrants
    coldstart_accuracy: float | None = None
    n: int = 0

    def summary_lines(self) -> list[str]:
        lr = self.quadrants.lower_right
        lines = [
            f"test articles: {self.n}",
            f"auc: {self.auc:.4f}",
            f"ap: {self.ap:.4f}",
            f"accuracy (tau=0): {_fmt(self.tau_sweep[0].accuracy) if self.tau_sweep else 'none'}",
            f"w split: {self.quadrants.w_split:.6g}",
            f"lower-right disagreements: {lr} ({lr / max(self.n, 1):.2%})",
            f"cold-start accuracy: {_fmt(self.coldstart_accuracy)}",
        ]
        return lines


def _fmt(x) -> str:
    return "none" if x is None else f"{x:.4f}"


def evaluate(predictions, labels, weights, taus=None, w_split=None) -> EvalReport:
    predictions = np.asarray(predictions, dtype=float)
    roc, auc = roc_auc(predictions, labels)
    pr, ap = pr_ap(predictions, labels)
    if taus is None:
        taus = weight_quantile_taus(weights)
    return EvalReport(
        roc=roc,
        auc=auc,
        pr=pr,
        ap=ap,
        tau_sweep=accuracy_vs_tau(predictions, labels, weights, taus),
        quadrants=agreement_quadrants(predictions, weights, labels, w_split),
        n=int(predictions.size),
    )


def write_report(report: EvalReport, out_dir) -> dict[str, Path]:
    """Write roc.csv, pr.csv, tau.csv, scatter.csv, quadrants.csv and report.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("roc", "pr", "tau", "scatter", "quadrants")}
    with open(paths["roc"], "w", newline="\n") as fh:
        fh.write("fpr,tpr\n")
        fh.writelines(f"{f!r},{t!r}\n" for f, t in report.roc)
    with open(paths["pr"], "w", newline="\n") as fh:
        fh.write("recall,precision\n")
        fh.writelines(f"{r!r},{p!r}\n" for r, p in report.pr)
    with open(paths["tau"], "w", newline="\n") as fh:
        fh.write("tau,subset_size,accuracy,high_variance\n")
        for pt in report.tau_sweep:
            acc = "" if pt.accuracy is None else repr(pt.accuracy)
            fh.write(f"{pt.tau!r},{pt.subset_size},{acc},{int(pt.high_variance)}\n")
    with open(paths["scatter"], "w", newline="\n") as fh:
        fh.write("w,y_hat,y\n")
        fh.writelines(f"{w!r},{p!r},{y}\n" for w, p, y in report.quadrants.scatter)
    with open(paths["quadrants"], "w", newline="\n") as fh:
        fh.write("y,pred_high,w_high,count\n")
        for y in (0, 1):
            for (p, h), c in sorted(report.quadrants.counts[y].items()):
                fh.write(f"{y},{int(p)},{int(h)},{c}\n")
    paths["report"] = out / "report.txt"
    paths["report"].write_text("\n".join(report.summary_lines()) + "\n")
    return paths


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties; nan if either is constant."""
    def ranks(v):
        v = np.asarray(v, dtype=float)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(len(v), dtype=float)
        for val in np.unique(v):
            idx = v == val
            r[idx] = r[idx].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    if rx.std() == 0 or ry.std() == 0:
        return math.nan
    return float(np.corrcoef(rx, ry)[0, 1])
