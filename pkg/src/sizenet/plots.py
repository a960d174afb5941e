"""Report figures. CSVs are the contract; these SVGs are for people.

SVG output is pinned (fixed hash salt, no date stamp) so reruns write
identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402

RC = {
    "svg.hashsalt": "sizenet",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path


def plot_roc(report: EvalReport, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 4))
        fpr, tpr = zip(*report.roc)
        ax.plot(fpr, tpr, color="C0", label=f"student (AUC = {report.auc:.3f})")
        ax.plot([0, 1], [0, 1], color="0.7", linestyle="--", linewidth=0.8)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_pr(report: EvalReport, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 4))
        recall, precision = zip(*report.pr)
        ax.step(recall, precision, where="post", color="C1", label=f"student (AP = {report.ap:.3f})")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower left", frameon=False)
        return _save(fig, path)


def plot_tau(sweeps: dict[str, list], path):
    """Accuracy against the teacher-weight threshold, one line per named sweep."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for i, (name, sweep) in enumerate(sweeps.items()):
            pts = [(p.tau, p.accuracy) for p in sweep if p.accuracy is not None]
            if not pts:
                continue
            taus, accs = zip(*pts)
            ax.plot(taus, accs, marker="o", markersize=3, color=f"C{i}", label=name)
            noisy = [(p.tau, p.accuracy) for p in sweep if p.accuracy is not None and p.high_variance]
            if noisy:
                ax.scatter(*zip(*noisy), facecolors="none", edgecolors="0.4", s=30, zorder=3)
        ax.set_xlabel(r"weight threshold $\tau$")
        ax.set_ylabel("accuracy on w >= tau")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_scatter(report: EvalReport, path):
    """Student output against teacher weight, one panel per teacher class."""
    q = report.quadrants
    data = np.array(q.scatter, dtype=float).reshape(-1, 3)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.2), sharey=True)
        for ax, cls, title in ((axes[0], 1, "class 1 (size issue)"), (axes[1], 0, "class 0 (no size issue)")):
            sel = data[:, 2] == cls
            ax.scatter(data[sel, 0], data[sel, 1], s=6, alpha=0.6, color="C3" if cls else "C2", linewidths=0)
            ax.axhline(0.5, color="0.6", linewidth=0.8)
            ax.axvline(q.w_split, color="0.6", linewidth=0.8, linestyle="--")
            ax.set_title(title)
            ax.set_xlabel("teacher weight w")
        axes[0].set_ylabel("student output")
        axes[0].set_ylim(-0.02, 1.02)
        return _save(fig, path)


def plot_score_profile(ratios, scores, categories, rates: dict[str, float], path):
    """Teacher confidence score against each article's size-return ratio."""
    ratios = np.asarray(ratios, dtype=float)
    scores = np.asarray(scores, dtype=float)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for i, cat in enumerate(sorted(rates)):
            sel = np.array([c == cat for c in categories], dtype=bool)
            ax.scatter(ratios[sel], scores[sel], s=5, color=f"C{i}", alpha=0.6, linewidths=0, label=cat)
            ax.axvline(rates[cat], color=f"C{i}", linestyle="--", linewidth=0.8)
        ax.set_xlabel("size returns / sales (k/n)")
        ax.set_ylabel("confidence score s")
        ax.legend(frameon=False, markerscale=3)
        return _save(fig, path)


def plot_saliency(image: np.ndarray, saliency: np.ndarray, region, title: str, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(2.6, 2.6))
        ax.imshow(image, cmap="gray", vmin=0, vmax=1)
        ax.imshow(saliency, cmap="jet", alpha=0.5)
        if region is not None:
            r, c, h, w = region
            ax.add_patch(matplotlib.patches.Rectangle((c - 0.5, r - 0.5), w, h, fill=False, edgecolor="w", linewidth=1))
        ax.set_title(title)
        ax.set_axis_off()
        return _save(fig, path)
