"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists a
PASS/FAIL line per criterion.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import exact_binomial_log, hand_average_precision, pairwise_concordance
from sizenet.ingest import build_ledgers, category_rates
from sizenet.metrics import pr_ap, roc_auc, spearman
from sizenet.pipeline import load_split
from sizenet.saliency import chance_level, generate_masks, localization_score, model_score_fn, rise_map
from sizenet.simulator import SimConfig, load_cue_regions, load_images, simulate
from sizenet.student import LabeledExample, batch_loss, gradients, init_model, load_model
from sizenet.teacher import confidence_score, kl_asymptote, label_dataset

TREND_SEEDS = (1, 2, 3, 4, 5)


def test_c01_teacher_exactness(record):
    start = time.perf_counter()
    worst = 0.0
    checked = 0
    for step in range(1, 20):
        p = step / 20
        for n in range(51):
            for k in range(n + 1):
                expected = -exact_binomial_log(n, k, p)
                got = confidence_score(n, k, p)
                err = abs(got - expected) / abs(expected) if expected else abs(got)
                worst = max(worst, err)
                checked += 1
    elapsed = time.perf_counter() - start
    ok = record(1, worst <= 1e-9 and elapsed < 5, f"{checked} cases, max rel err {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_c02_kl_asymptote(record):
    n, k, p = 10**5, 40_000, 0.3
    ratio = confidence_score(n, k, p) / kl_asymptote(n, k, p)
    assert record(2, abs(ratio - 1) <= 0.01, f"s/(n KL) = {ratio:.6f}")


def test_c03_score_shape(record):
    start = time.perf_counter()
    p = 0.3
    problems = []
    for n in (10, 50, 100, 500):
        s = np.array([confidence_score(n, k, p) for k in range(n + 1)])
        k_min = int(np.argmin(s))
        d = np.diff(s)
        unimodal = np.all(d[:k_min] < 0) and np.all(d[k_min:] > 0)
        if not unimodal or abs(k_min - n * p) > 1:
            problems.append(f"n={n}: argmin {k_min}")
    at_ratio = [confidence_score(n, int(0.6 * n), p) for n in (10, 50, 100, 500)]
    if not all(b > a for a, b in zip(at_ratio, at_ratio[1:])):
        problems.append(f"not increasing at k/n=0.6: {at_ratio}")
    elapsed = time.perf_counter() - start
    detail = "unimodal, minimum at n*p, increasing in n" if not problems else "; ".join(problems)
    assert record(3, not problems and elapsed < 1, f"{detail}, {elapsed:.3f}s")


def test_c04_gradient_check(record):
    start = time.perf_counter()
    step = 1e-5
    worst = 0.0
    for point in range(10):
        rng = np.random.default_rng(1000 + point)
        model = init_model(8, seed=point)
        x = rng.normal(size=(16, 8))
        batch = [LabeledExample(x[i], int(rng.integers(0, 2)), float(rng.random() * 3)) for i in range(16)]
        gw, gb = gradients(model, batch, rng=None)
        for param, grad in zip(model.parameters(), [g for pair in zip(gw, gb) for g in pair]):
            flat, gflat = param.reshape(-1), grad.reshape(-1)
            for i in rng.choice(flat.size, size=min(flat.size, 20), replace=False):
                orig = flat[i]
                flat[i] = orig + step
                up = batch_loss(model, batch)
                flat[i] = orig - step
                down = batch_loss(model, batch)
                flat[i] = orig
                numeric = (up - down) / (2 * step)
                worst = max(worst, abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-7))
    elapsed = time.perf_counter() - start
    assert record(4, worst <= 1e-4 and elapsed < 10, f"10 points, max rel err {worst:.2e}, {elapsed:.2f}s")


def test_c05_teacher_recovers_truth(record):
    start = time.perf_counter()
    # every article drawn from Poisson(300): no cold-start cap in this setup
    cfg = SimConfig(articles_per_category=300, mean_sales_per_article=300.0, coldstart_fraction=0.0, seed=21)
    sim = simulate(cfg)
    ledgers = build_ledgers(sim.sales, sim.returns, (0, cfg.horizon_days - 1))
    labels = {lab.article: lab.y for lab in label_dataset(ledgers, category_rates(ledgers))}
    truths = sim.truths
    hits = []
    for c in range(cfg.n_categories):
        group = truths[c * 300:(c + 1) * 300]
        mean_q = np.mean([t.q for t in group])
        hits += [labels[t.article] == t.true_label for t in group if abs(t.q - mean_q) >= 0.03 and t.article in labels]
    acc = float(np.mean(hits))
    elapsed = time.perf_counter() - start
    assert record(5, acc >= 0.95 and elapsed < 30, f"accuracy {acc:.4f} on {len(hits)} articles, {elapsed:.1f}s")


@pytest.mark.slow
def test_c06_weights_help(record, pipeline_runs):
    start = time.perf_counter()
    weighted, unweighted = [], []
    for seed in TREND_SEEDS:
        weighted.append(pipeline_runs.get(seed, True)[1].tau_sweep[0].accuracy)
        unweighted.append(pipeline_runs.get(seed, False)[1].tau_sweep[0].accuracy)
    wins = sum(w > u for w, u in zip(weighted, unweighted))
    elapsed = time.perf_counter() - start
    ok = np.mean(weighted) >= np.mean(unweighted) and wins >= 3 and elapsed < 300
    detail = (f"mean acc weighted {np.mean(weighted):.4f} vs unweighted {np.mean(unweighted):.4f}, "
              f"strict wins {wins}/5, {elapsed:.0f}s")
    assert record(6, ok, detail)


@pytest.mark.slow
def test_c07_accuracy_rises_with_tau(record, pipeline_runs):
    rhos = []
    for seed in TREND_SEEDS[:3]:
        sweep = pipeline_runs.get(seed)[1].tau_sweep
        rhos.append(spearman([p.tau for p in sweep], [p.accuracy for p in sweep]))
    mean_rho = float(np.mean(rhos))
    assert record(7, mean_rho >= 0.5, f"mean Spearman {mean_rho:.3f} ({', '.join(f'{r:.2f}' for r in rhos)})")


@pytest.mark.slow
def test_c08_coldstart_accuracy(record, pipeline_runs):
    accs = [pipeline_runs.get(seed)[1].coldstart_accuracy for seed in TREND_SEEDS[:3]]
    mean_acc = float(np.mean(accs))
    assert record(8, mean_acc >= 0.7, f"mean cold-start accuracy {mean_acc:.3f} ({', '.join(f'{a:.2f}' for a in accs)})")


@pytest.mark.slow
def test_c09_lower_right_quadrant_small(record, pipeline_runs):
    shares = []
    for seed in TREND_SEEDS:
        report = pipeline_runs.get(seed)[1]
        shares.append(report.quadrants.lower_right / report.n)
    worst = max(shares)
    assert record(9, worst <= 0.05, f"max lower-right share {worst:.2%} over {len(shares)} seeds")


def test_c10_metrics_oracle(record):
    rng = np.random.default_rng(10)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 21))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = rng.integers(0, 6, n) / 5  # coarse grid forces ties
        if roc_auc(scores, labels)[1] != float(pairwise_concordance(scores.tolist(), labels.tolist())):
            mismatches += 1
    ap = pr_ap([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])[1]
    hand = hand_average_precision([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
    ok = mismatches == 0 and abs(ap - 0.8333333333333333) <= 1e-12 and abs(ap - hand) <= 1e-12
    assert record(10, ok, f"AUC mismatches {mismatches}/1000, AP {ap:.12f}")


def _test_images(cfg, count=50):
    split = load_split(cfg.out / "split.csv")
    arts = sorted(a for a, s in split.items() if s == "test")[:count]
    return arts, load_images(cfg.out / "images", arts), load_cue_regions(cfg.out / "cue_regions.csv")


@pytest.mark.slow
def test_c11_rise(record, pipeline_runs):
    cfg, _ = pipeline_runs.get(TREND_SEEDS[0])
    masks = generate_masks(1000, (8, 8), 0.5, 32, 32, seed=cfg.sub_seed("explain"))
    image = np.random.default_rng(0).random((32, 32))

    const = rise_map(lambda b: np.full(len(b), 0.7), image, masks)
    const_err = np.max(np.abs(const - 0.7 * masks.masks.mean(axis=0) / masks.p_keep))

    def f(b):
        return b[:, 8:16, 8:16].mean(axis=(1, 2))

    def g(b):
        return np.tanh(b.sum(axis=(1, 2)) / 100)

    lin_err = np.max(np.abs(rise_map(lambda b: 2 * f(b) - 3 * g(b), image, masks)
                            - (2 * rise_map(f, image, masks) - 3 * rise_map(g, image, masks))))

    score_fn = model_score_fn(load_model(cfg.out / "model.bin"))
    arts, images, regions = _test_images(cfg)
    good = 0
    for art, img in zip(arts, images):
        sal = rise_map(score_fn, img, masks)
        region = regions[art]
        good += localization_score(sal, region, 0.1) >= 2 * chance_level(sal.shape, region)
    share = good / len(arts)
    ok = const_err <= 1e-12 and lin_err <= 1e-12 and share >= 0.8
    detail = f"constant err {const_err:.1e}, linearity err {lin_err:.1e}, localized {good}/{len(arts)} ({share:.0%})"
    assert record(11, ok, detail)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="inside/outside mean saliency ratio cannot reach 2 at p_keep = 0.5; see README")
def test_rise_inside_outside_ratio(pipeline_runs):
    cfg, _ = pipeline_runs.get(TREND_SEEDS[0])
    score_fn = model_score_fn(load_model(cfg.out / "model.bin"))
    masks = generate_masks(1000, (8, 8), 0.5, 32, 32, seed=cfg.sub_seed("explain"))
    arts, images, regions = _test_images(cfg)
    good = 0
    for art, img in zip(arts, images):
        sal = rise_map(score_fn, img, masks)
        r, c, h, w = regions[art]
        inside = np.zeros(sal.shape, bool)
        inside[r:r + h, c:c + w] = True
        good += sal[inside].mean() >= 2 * sal[~inside].mean()
    assert good / len(arts) >= 0.8


@pytest.mark.slow
def test_c12_determinism(record, tmp_path):
    outputs = []
    durations = []
    for name in ("a", "b"):
        out = tmp_path / name
        start = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "sizenet.cli", "pipeline", "--seed", "7", "--out", str(out)],
            capture_output=True, text=True,
        )
        durations.append(time.perf_counter() - start)
        assert proc.returncode == 0, proc.stderr
        outputs.append(out)
    files = ["model.bin", "labels.csv", "split.csv", "history.csv"] + [
        f"eval/{n}.csv" for n in ("roc", "pr", "tau", "scatter", "quadrants", "predictions")
    ] + ["eval/report.txt", "explain/explain.csv"]
    differing = [f for f in files if (outputs[0] / f).read_bytes() != (outputs[1] / f).read_bytes()]
    ok = not differing and max(durations) < 300
    detail = f"{len(files)} files compared, {len(differing)} differ; slowest run {max(durations):.1f}s"
    assert record(12, ok, detail)
