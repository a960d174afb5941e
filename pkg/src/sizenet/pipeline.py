"""Pipeline stages behind the CLI subcommands.

Each stage reads its inputs from, and writes its artifacts to, the configured
output directory. Stages return a small dict summary that the CLI prints.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from . import plots
from .config import PipelineConfig
from .errors import FormatError, SizeNetError
from .featurizer import ProjectionSpec, Standardizer, featurize_batch, load_embeddings
from .ingest import ArticleLedger, build_ledgers, category_rates, load_catalog, load_events
from .metrics import coldstart_slice, evaluate, write_report
from .saliency import chance_level, generate_masks, localization_score, model_score_fn, rise_map, write_saliency
from .simulator import load_cue_regions, load_images, load_truth, simulate, write_simulation
from .student import LabeledExample, batch_loss, load_model, predict, save_model, train
from .teacher import label_dataset, load_labels, write_labels

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")


# --- simulate -------------------------------------------------------------


def run_simulate(cfg: PipelineConfig) -> dict:
    sim = simulate(cfg.simulate)
    try:
        write_simulation(sim, cfg.out)
    except OSError as exc:
        raise SizeNetError(f"cannot write simulation output to {cfg.out}: {exc.strerror or exc}") from None
    sales_per = {}
    for ev in sim.sales:
        sales_per[ev.article] = sales_per.get(ev.article, 0) + 1
    cold = sum(1 for t in sim.truths if sales_per.get(t.article, 0) <= cfg.simulate.coldstart_max_sales)
    return {
        "articles": len(sim.truths),
        "sales": len(sim.sales),
        "returns": len(sim.returns),
        "size_returns": sum(1 for r in sim.returns if r.reason.value == "size_issue"),
        "coldstart_articles": cold,
    }


# --- label ----------------------------------------------------------------


def write_ledgers(path, ledgers: Sequence[ArticleLedger]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("article_id,category,activation_day,n,k\n")
        for led in ledgers:
            fh.write(f"{led.article},{led.category},{led.activation_day},{led.n},{led.k}\n")


def load_ledger_counts(path) -> list[ArticleLedger]:
    out = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            f = line.split(",")
            try:
                out.append(ArticleLedger(f[0], f[1], int(f[2]), int(f[3]), int(f[4]), (0, 0)))
            except (IndexError, ValueError):
                raise FormatError("expected article_id,category,activation_day,n,k", path, line_no, line) from None
    return out


def run_label(cfg: PipelineConfig) -> dict:
    sales = load_events(cfg.path("sales", "sales.csv"), "sales")
    returns = load_events(cfg.path("returns", "returns.csv"), "returns")
    catalog_path = cfg.path("catalog", "articles.csv")
    catalog = load_catalog(catalog_path) if catalog_path.exists() else None
    end = cfg.label.window_end
    if end is None:
        days = [ev.day for ev in sales] + [ev.day for ev in returns]
        end = max(days, default=cfg.label.window_start)
    window = (cfg.label.window_start, end)
    ledgers = build_ledgers(sales, returns, window, catalog=catalog, min_age=cfg.label.min_age)
    rates = category_rates(ledgers)
    labels = label_dataset(ledgers, rates)

    cfg.out.mkdir(parents=True, exist_ok=True)
    write_labels(cfg.out / "labels.csv", labels)
    write_ledgers(cfg.out / "ledgers.csv", ledgers)
    with open(cfg.out / "category_rates.csv", "w", newline="\n") as fh:
        fh.write("category,window_start,window_end,p,total_n,total_k\n")
        for r in rates.values():
            fh.write(f"{r.category},{r.window[0]},{r.window[1]},{r.p!r},{r.total_n},{r.total_k}\n")
    with_sales = [(led, lab) for led, lab in zip(ledgers, labels) if led.n > 0]
    if with_sales:
        plots.plot_score_profile(
            [led.k / led.n for led, _ in with_sales],
            [lab.s for _, lab in with_sales],
            [led.category for led, _ in with_sales],
            {c: r.p for c, r in rates.items()},
            cfg.out / "teacher_scores.svg",
        )
    n_pos = sum(lab.y for lab in labels)
    return {"size_issue": n_pos, "no_size_issue": len(labels) - n_pos, "window": window, "labels": labels}


# --- features and splits --------------------------------------------------


def split_articles(articles: Sequence[str], cfg: PipelineConfig) -> dict[str, str]:
    """Seeded article-level split; sizes are rounded train and validation shares, rest test."""
    ids = sorted(articles)
    n = len(ids)
    perm = np.random.default_rng(cfg.split.seed).permutation(n)
    n_train = round(cfg.split.train * n)
    n_val = round(cfg.split.validation * n)
    assignment = {}
    for rank, idx in enumerate(perm):
        name = "train" if rank < n_train else "validation" if rank < n_train + n_val else "test"
        assignment[ids[idx]] = name
    return assignment


def write_split(path, assignment: dict[str, str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("article_id,split\n")
        for art in sorted(assignment):
            fh.write(f"{art},{assignment[art]}\n")


def load_split(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line_no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            f = line.split(",")
            if len(f) != 2 or f[1] not in SPLITS:
                raise FormatError("expected article_id,split", path, line_no, line)
            out[f[0]] = f[1]
    return out


def projection_for(cfg: PipelineConfig) -> ProjectionSpec:
    side = cfg.simulate.image_side
    return ProjectionSpec(side * side, cfg.featurize.dim, cfg.sub_seed("projection"))


def features_for(cfg: PipelineConfig, articles: Sequence[str], projection: ProjectionSpec | None) -> np.ndarray:
    """Feature rows for ``articles``: from the embedding file if configured, else projected images."""
    if projection is None:
        if not cfg.paths.embeddings:
            raise SizeNetError("model has no image projection and no [paths] embeddings file is configured")
        table = load_embeddings(cfg.paths.embeddings)
        missing = [a for a in articles if a not in table]
        if missing:
            raise SizeNetError(f"{len(missing)} articles have no embedding, e.g. {missing[:3]}")
        return np.stack([table[a] for a in articles])
    images = load_images(cfg.path("images", "images"), articles)
    return featurize_batch(images, projection)


# --- train ----------------------------------------------------------------


def run_train(cfg: PipelineConfig) -> dict:
    labels = load_labels(cfg.out / "labels.csv")
    if not labels:
        raise SizeNetError("labels.csv is empty; nothing to train on")
    assignment = split_articles([lab.article for lab in labels], cfg)
    write_split(cfg.out / "split.csv", assignment)

    projection = None if cfg.paths.embeddings else projection_for(cfg)
    articles = [lab.article for lab in labels]
    x = features_for(cfg, articles, projection)
    scaler = None
    train_rows = [i for i, a in enumerate(articles) if assignment[a] == "train"]
    if cfg.featurize.standardize:
        scaler = Standardizer.fit(x[train_rows])
        x = scaler.transform(x)

    def examples(split):
        return [
            LabeledExample(x[i], lab.y, lab.w, lab.article)
            for i, lab in enumerate(labels)
            if assignment[lab.article] == split
        ]

    train_set, val_set = examples("train"), examples("validation")
    rows = []

    def on_epoch(epoch, stage, model, loss):
        val = batch_loss(model, val_set, cfg.train.use_weights) if val_set else float("nan")
        rows.append((epoch, stage, loss, val))

    model, _ = train(train_set, cfg.train, on_epoch=on_epoch)
    model.projection = projection
    model.scaler = scaler
    save_model(model, cfg.out / "model.bin")
    with open(cfg.out / "history.csv", "w", newline="\n") as fh:
        fh.write("epoch,stage,train_loss,val_loss\n")
        fh.writelines(f"{e},{s},{tl!r},{vl!r}\n" for e, s, tl, vl in rows)
    counts = {s: sum(1 for v in assignment.values() if v == s) for s in SPLITS}
    return {
        **counts,
        "epochs": len(rows),
        "final_train_loss": rows[-1][2],
        "final_val_loss": rows[-1][3],
        "use_weights": cfg.train.use_weights,
    }


# --- evaluate -------------------------------------------------------------


def split_predictions(cfg: PipelineConfig, model=None):
    """(labels, predictions) for the test split, both in article order."""
    model = model or load_model(cfg.out / "model.bin")
    assignment = load_split(cfg.out / "split.csv")
    labels = [lab for lab in load_labels(cfg.out / "labels.csv") if assignment.get(lab.article) == "test"]
    if not labels:
        raise SizeNetError("test split is empty")
    x = features_for(cfg, [lab.article for lab in labels], model.projection)
    return labels, predict(model, x)


def run_evaluate(cfg: PipelineConfig) -> dict:
    labels, preds = split_predictions(cfg)
    y = np.array([lab.y for lab in labels])
    w = np.array([lab.w for lab in labels])
    report = evaluate(preds, y, w, w_split=cfg.evaluate.w_split)

    truth_path = cfg.path("truth", "truth.csv")
    ledger_path = cfg.out / "ledgers.csv"
    if truth_path.exists() and ledger_path.exists():
        truth = load_truth(truth_path)
        by_article = {lab.article: float(p) for lab, p in zip(labels, preds)}
        report.coldstart_accuracy = coldstart_slice(
            by_article, truth, load_ledger_counts(ledger_path), cfg.evaluate.coldstart_max_sales
        )

    eval_dir = cfg.out / "eval"
    paths = write_report(report, eval_dir)
    with open(eval_dir / "predictions.csv", "w", newline="\n") as fh:
        fh.write("article_id,y_hat\n")
        fh.writelines(f"{lab.article},{float(p)!r}\n" for lab, p in zip(labels, preds))
    if cfg.evaluate.plots:
        plots.plot_roc(report, eval_dir / "roc.svg")
        plots.plot_pr(report, eval_dir / "pr.svg")
        plots.plot_tau({"weighted" if cfg.train.use_weights else "unweighted": report.tau_sweep}, eval_dir / "tau.svg")
        plots.plot_scatter(report, eval_dir / "scatter.svg")
    return {"report": report, "paths": paths}


# --- explain --------------------------------------------------------------


def select_top(labels, preds, k: int, want_label: int) -> list[str]:
    """Highest-scoring predicted positives whose teacher label is ``want_label``.

    ``want_label=1`` gives the top true positives, ``0`` the top false positives.
    """
    pool = [(-float(p), lab.article) for lab, p in zip(labels, preds) if lab.y == want_label and p >= 0.5]
    return [art for _, art in sorted(pool)[:k]]


def run_explain(cfg: PipelineConfig, ids: Sequence[str] | None = None, top_tp: int | None = None) -> dict:
    model = load_model(cfg.out / "model.bin")
    if model.projection is None:
        raise SizeNetError("explain needs a model trained on images (no projection stored in model file)")
    image_dir = cfg.path("images", "images")
    available = sorted(p.stem for p in Path(image_dir).glob("*.pgm"))
    kinds: dict[str, str] = {}
    if ids:
        unknown = [a for a in ids if a not in set(available)]
        if unknown:
            shown = ", ".join(available[:10]) + (f", ... ({len(available)} total)" if len(available) > 10 else "")
            raise SizeNetError(f"unknown article id(s) {', '.join(unknown)}; available: {shown or 'none'}")
        kinds = {a: "requested" for a in ids}
    else:
        labels, preds = split_predictions(cfg, model)
        k = cfg.explain.top_tp if top_tp is None else top_tp
        kinds = {a: "top_true_positive" for a in select_top(labels, preds, k, 1)}
        for a in select_top(labels, preds, cfg.explain.top_fp, 0):
            kinds.setdefault(a, "top_false_positive")
    chosen = list(kinds)

    regions_path = cfg.out / "cue_regions.csv"
    regions = load_cue_regions(regions_path) if regions_path.exists() else {}
    images = load_images(image_dir, chosen) if chosen else np.empty((0, 1, 1))
    h, w = (images.shape[1], images.shape[2]) if chosen else (0, 0)
    ex = cfg.explain
    masks = generate_masks(ex.n_masks, (ex.grid, ex.grid), ex.p_keep, h, w, cfg.sub_seed("explain")) if chosen else None
    score_fn = model_score_fn(model)

    out_dir = cfg.out / "explain"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for art, img in zip(chosen, images):
        fill = float(img.mean()) if ex.fill == "background-mean" else 0.0
        sal = rise_map(score_fn, img, masks, fill=fill)
        write_saliency(out_dir / f"{art}.pgm", sal)
        y_hat = float(score_fn(img[None])[0])
        region = regions.get(art)
        loc = localization_score(sal, region, ex.quantile) if region else None
        chance = chance_level(sal.shape, region) if region else None
        if cfg.evaluate.plots:
            plots.plot_saliency(img, sal, region, f"{art}  y_hat={y_hat:.2f}", out_dir / f"{art}.svg")
        rows.append((art, kinds[art], y_hat, loc, chance))
    with open(out_dir / "explain.csv", "a", newline="\n") as fh:
        if fh.tell() == 0:
            fh.write("article_id,kind,y_hat,localization,chance\n")
        for art, kind, y_hat, loc, chance in rows:
            fh.write(f"{art},{kind},{y_hat!r},{'' if loc is None else repr(loc)},{'' if chance is None else repr(chance)}\n")
    return {"explained": rows}
