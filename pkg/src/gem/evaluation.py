"""Metrics, the signed-rank test, the four-way ablation runner, and the
gender-presence cosine-similarity analysis.

compute_metrics and wilcoxon_signed_rank are pure and dependency-light; the
runners at the bottom drive models through the training pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import knowledge, text
from .corpus import GENDERS, SYMPTOMS
from .errors import ConfigurationError, ValidationError

ABLATION_CONFIGS = ("full", "-attention", "-entity_masking", "-task_adaptation")


# ---- confusion matrix and per-class metrics --------------------------------


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    precision_defined: bool = True
    recall_defined: bool = True


@dataclass
class MetricsReport:
    classes: tuple
    confusion: np.ndarray            # rows = gold, columns = predicted
    per_class: dict
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    accuracy: float
    n_items: int


def compute_metrics(predictions, golds, classes):
    """Per-class precision/recall/F1 plus macro, weighted and micro averages.

    Undefined ratios (no predictions for a class, or zero support) are
    reported as 0.0 with the matching *_defined flag cleared; macro averaging
    counts them as 0, which is stated wherever reports are rendered.
    """
    predictions = list(predictions)
    golds = list(golds)
    if not predictions:
        raise ValidationError("cannot compute metrics over zero items")
    if len(predictions) != len(golds):
        raise ValidationError("predictions and golds differ in length")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    for label in predictions + golds:
        if label not in index:
            raise ValidationError(f"label {label!r} outside class set {classes}")
    c = len(classes)
    confusion = np.zeros((c, c), dtype=np.int64)
    for p, g in zip(predictions, golds):
        confusion[index[g], index[p]] += 1
    per_class = {}
    for name in classes:
        i = index[name]
        tp = int(confusion[i, i])
        fp = int(confusion[:, i].sum() - tp)
        fn = int(confusion[i, :].sum() - tp)
        support = tp + fn
        p_def = (tp + fp) > 0
        r_def = support > 0
        precision = tp / (tp + fp) if p_def else 0.0
        recall = tp / support if r_def else 0.0
        f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) else 0.0
        per_class[name] = ClassMetrics(precision, recall, f1, support, p_def, r_def)
    n = len(predictions)
    supports = np.array([per_class[c_].support for c_ in classes], dtype=float)
    P = np.array([per_class[c_].precision for c_ in classes])
    R = np.array([per_class[c_].recall for c_ in classes])
    F = np.array([per_class[c_].f1 for c_ in classes])
    tp_total = int(np.trace(confusion))
    micro = tp_total / n
    return MetricsReport(
        classes=classes,
        confusion=confusion,
        per_class=per_class,
        macro_precision=float(P.mean()),
        macro_recall=float(R.mean()),
        macro_f1=float(F.mean()),
        weighted_precision=float((P * supports).sum() / n),
        weighted_recall=float((R * supports).sum() / n),
        weighted_f1=float((F * supports).sum() / n),
        micro_precision=micro,
        micro_recall=micro,
        micro_f1=micro,
        accuracy=micro,
        n_items=n,
    )


def format_metrics_report(report, title=""):
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'class':<14}{'precision':>11}{'recall':>9}{'f1':>9}{'support':>9}")
    for name in report.classes:
        m = report.per_class[name]
        flag = "" if (m.precision_defined and m.recall_defined) else "  (undefined->0)"
        lines.append(
            f"{name:<14}{m.precision:>11.4f}{m.recall:>9.4f}{m.f1:>9.4f}{m.support:>9d}{flag}"
        )
    lines.append(
        f"{'macro':<14}{report.macro_precision:>11.4f}{report.macro_recall:>9.4f}"
        f"{report.macro_f1:>9.4f}{report.n_items:>9d}"
    )
    lines.append(
        f"{'weighted':<14}{report.weighted_precision:>11.4f}{report.weighted_recall:>9.4f}"
        f"{report.weighted_f1:>9.4f}{report.n_items:>9d}"
    )
    lines.append(f"{'accuracy':<14}{report.accuracy:>11.4f}")
    return "\n".join(lines)


def metrics_report_records(report, **extra):
    records = []
    for name in report.classes:
        m = report.per_class[name]
        records.append(
            dict(extra, row=name, precision=m.precision, recall=m.recall,
                 f1=m.f1, support=m.support)
        )
    records.append(
        dict(extra, row="macro", precision=report.macro_precision,
             recall=report.macro_recall, f1=report.macro_f1, support=report.n_items)
    )
    return records


# ---- Wilcoxon signed-rank test ----------------------------------------------

ALTERNATIVES = ("two_sided", "less", "greater")


@dataclass
class SignificanceReport:
    statistic: float
    n: int
    p_value: float
    method: str               # exact | normal_approximation
    alternative: str
    w_plus: float
    w_minus: float


def _average_ranks(values):
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_wplus_distribution(doubled_ranks):
    """Counts of each achievable doubled W+ value over all 2^n sign patterns."""
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        for s in range(total, r - 1, -1):
            if counts[s - r]:
                counts[s] += counts[s - r]
    return counts


def _norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def wilcoxon_signed_rank(x, y, alternative="two_sided"):
    """Paired signed-rank test of x against y.

    Zero differences are dropped; ties get average ranks. With n <= 25 the
    p-value is exact over all 2^n sign assignments (computed by counting,
    identical to full enumeration); larger n uses the normal approximation
    with tie and continuity corrections. All differences zero is reported as
    p = 1.0 with n = 0. The statistic is min(W+, W-) for the two-sided test
    and W+ for one-sided ones.
    """
    if alternative not in ALTERNATIVES:
        raise ConfigurationError(f"alternative must be one of {ALTERNATIVES}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 1:
        raise ValidationError("x and y must be equal-length 1-d sequences")
    d = x - y
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        return SignificanceReport(0.0, 0, 1.0, "exact", alternative, 0.0, 0.0)
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    total = w_plus + w_minus
    if alternative == "two_sided":
        statistic = min(w_plus, w_minus)
    else:
        statistic = w_plus

    if n <= 25:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_wplus_distribution(doubled)
        denom = 2**n
        s2 = sum(doubled)
        wp2 = int(round(2 * w_plus))
        if alternative == "greater":
            num = sum(counts[wp2:])
        elif alternative == "less":
            num = sum(counts[: wp2 + 1])
        else:
            m2 = min(wp2, s2 - wp2)
            lo = sum(counts[: m2 + 1])
            hi = sum(counts[s2 - m2 :]) if s2 - m2 > m2 else denom - lo
            num = min(lo + hi, denom)
        return SignificanceReport(
            statistic, n, num / denom, "exact", alternative, w_plus, w_minus
        )

    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum()) / 48.0)
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    if alternative == "greater":
        z = (w_plus - mu - 0.5) / sigma
        p = 1.0 - _norm_cdf(z)
    elif alternative == "less":
        z = (w_plus - mu + 0.5) / sigma
        p = _norm_cdf(z)
    else:
        w = min(w_plus, w_minus)
        z = (w - mu + 0.5) / sigma
        p = min(1.0, 2.0 * _norm_cdf(z))
    return SignificanceReport(
        statistic, n, p, "normal_approximation", alternative, w_plus, w_minus
    )


# ---- model-driven reports ---------------------------------------------------


def predict_items(model, items, vocab, slex, glex, batch_size=64):
    """Evaluation-mode label predictions for a list of items."""
    from . import train as train_mod

    ds = text.make_pair_dataset(
        items, vocab, slex, glex, max_len=model.config.max_len, require_labels=False
    )
    sy, gd = train_mod.predict_dataset(model, ds, batch_size=batch_size)
    sy_labels = None if sy is None else [SYMPTOMS[i] for i in sy]
    gd_labels = None if gd is None else [GENDERS[i] for i in gd]
    return sy_labels, gd_labels


def classwise_report(model, items, vocab, slex, glex, batch_size=64):
    """Per-class reports for each task, overall and split by item kind."""
    items = list(items)
    if not items:
        raise ValidationError("cannot report on zero items")
    sy_pred, gd_pred = predict_items(model, items, vocab, slex, glex, batch_size)
    out = {}
    groups = {
        "all": list(range(len(items))),
        "posts": [i for i, it in enumerate(items) if it.item.kind == "post"],
        "comments": [i for i, it in enumerate(items) if it.item.kind == "comment"],
    }
    for name, idx in groups.items():
        section = {"symptom": None, "gender": None, "n_items": len(idx)}
        if idx:
            if sy_pred is not None and all(items[i].symptom for i in idx):
                section["symptom"] = compute_metrics(
                    [sy_pred[i] for i in idx], [items[i].symptom for i in idx], SYMPTOMS
                )
            if gd_pred is not None and all(items[i].gender for i in idx):
                section["gender"] = compute_metrics(
                    [gd_pred[i] for i in idx], [items[i].gender for i in idx], GENDERS
                )
        out[name] = section
    return out


def format_classwise(report):
    lines = []
    for group in ("posts", "comments", "all"):
        section = report[group]
        lines.append(f"== {group} ({section['n_items']} items) ==")
        if section["symptom"] is None and section["gender"] is None:
            lines.append("(no labeled items)")
            continue
        for task in ("symptom", "gender"):
            rep = section[task]
            if rep is not None:
                lines.append(format_metrics_report(rep, title=f"[{task}]"))
        lines.append("")
    return "\n".join(lines).rstrip()


# ---- ablation ---------------------------------------------------------------


@dataclass
class AblationReport:
    configs: tuple
    seeds: tuple
    cells: dict          # cells[config][task][metric] -> {"median", "per_seed"}
    split_id_hash: str
    failures: dict = field(default_factory=dict)


def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else None


def run_ablation(split, model_config, train_config, pretrain_config, seeds,
                 slex=None, glex=None, vocab=None):
    """Train and evaluate the four configurations per seed on one split.

    full: masking + fusion + adaptive pretraining; -attention swaps fusion for
    concatenated [CLS] heads; -entity_masking feeds raw text to both encoders;
    -task_adaptation skips the pretraining phase. Medians are reported per
    cell with the per-seed values retained.
    """
    from . import train as train_mod

    seeds = tuple(seeds)
    if len(seeds) < 3:
        raise ConfigurationError("run_ablation needs at least 3 seeds")
    slex = slex or knowledge.load_bundled_lexicon("symptom")
    glex = glex or knowledge.load_bundled_lexicon("gender")
    if vocab is None:
        vocab = text.build_vocab([it.item.text for it in split.train])
    split_hash = train_mod.split_id_hash(split)

    cells = {
        name: {task: {m: {"median": None, "per_seed": []} for m in ("precision", "recall", "f1")}
               for task in ("symptom", "gender", "combined")}
        for name in ABLATION_CONFIGS
    }
    failures = {}
    for seed in seeds:
        for name in ABLATION_CONFIGS:
            assert train_mod.split_id_hash(split) == split_hash
            use_masking = name != "-entity_masking"
            run_slex = slex if use_masking else None
            run_glex = glex if use_masking else None
            cfg = _patch_config(model_config,
                                   variant="concat_ablation" if name == "-attention" else "gem")
            model = _build(cfg, vocab, seed)
            try:
                if name != "-task_adaptation":
                    train_mod.task_adaptive_pretrain(
                        model, split.train, vocab, pretrain_config,
                        slex=run_slex, glex=run_glex,
                    )
                tc = train_mod.TrainConfig(**{**train_config.__dict__, "seed": seed})
                train_mod.mtl_finetune(
                    model, split, run_slex, run_glex, vocab, tc
                )
                result = evaluate_tasks(model, split.test, vocab, run_slex, run_glex)
            except Exception as exc:  # NaN aborts mark the cell and move on
                failures[(name, seed)] = str(exc)
                for task in ("symptom", "gender", "combined"):
                    for m in ("precision", "recall", "f1"):
                        cells[name][task][m]["per_seed"].append(None)
                continue
            for task in ("symptom", "gender", "combined"):
                for m in ("precision", "recall", "f1"):
                    cells[name][task][m]["per_seed"].append(result[task][m])
    for name in ABLATION_CONFIGS:
        for task in cells[name]:
            for m in cells[name][task]:
                cells[name][task][m]["median"] = _median(cells[name][task][m]["per_seed"])
    return AblationReport(
        configs=ABLATION_CONFIGS, seeds=seeds, cells=cells,
        split_id_hash=split_hash, failures=failures,
    )


def _patch_config(config, **overrides):
    from .model import ModelConfig

    d = config.to_dict()
    d.update(overrides)
    return ModelConfig.from_dict(d)


def _build(config, vocab, seed):
    from .model import build_variant

    if config.vocab_size != len(vocab):
        config = _patch_config(config, vocab_size=len(vocab))
    return build_variant(config, seed=seed)


def evaluate_tasks(model, items, vocab, slex, glex, batch_size=64):
    """Macro P/R/F1 per task plus their unweighted combination."""
    sy_pred, gd_pred = predict_items(model, items, vocab, slex, glex, batch_size)
    result = {}
    sy_rep = compute_metrics(sy_pred, [it.symptom for it in items], SYMPTOMS)
    gd_rep = compute_metrics(gd_pred, [it.gender for it in items], GENDERS)
    result["symptom"] = {
        "precision": sy_rep.macro_precision,
        "recall": sy_rep.macro_recall,
        "f1": sy_rep.macro_f1,
    }
    result["gender"] = {
        "precision": gd_rep.macro_precision,
        "recall": gd_rep.macro_recall,
        "f1": gd_rep.macro_f1,
    }
    result["combined"] = {
        m: (result["symptom"][m] + result["gender"][m]) / 2.0
        for m in ("precision", "recall", "f1")
    }
    return result


def format_ablation(report):
    lines = [
        f"ablation over seeds {list(report.seeds)} "
        f"(median of macro metrics; combined = mean of the two tasks)",
        f"{'config':<18}{'task':<10}{'precision':>11}{'recall':>9}{'f1':>9}",
    ]
    for name in report.configs:
        for task in ("symptom", "gender", "combined"):
            cell = report.cells[name][task]
            vals = [cell[m]["median"] for m in ("precision", "recall", "f1")]
            rendered = [("   nan" if v is None else f"{v:.4f}") for v in vals]
            lines.append(
                f"{name:<18}{task:<10}{rendered[0]:>11}{rendered[1]:>9}{rendered[2]:>9}"
            )
    if report.failures:
        lines.append("failed runs:")
        for (name, seed), msg in report.failures.items():
            lines.append(f"  {name} seed={seed}: {msg}")
    return "\n".join(lines)


# ---- gender-presence similarity ---------------------------------------------


def cosine(u, v):
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine of a zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


def similarity_significance(vectors, classes, present_flags, lengths,
                            alternative="two_sided"):
    """Core of the gender-presence analysis over precomputed vectors.

    Computes per-class centroids over all vectors, the cosine of each vector
    to its class centroid, pairs gender-present with gender-absent items of
    the same class by nearest length, and runs the signed-rank test on the
    paired similarity sequences.
    """
    vectors = np.asarray(vectors, dtype=float)
    present_flags = np.asarray(present_flags, dtype=bool)
    lengths = np.asarray(lengths)
    if not present_flags.any():
        raise ValidationError("partition 'gender-present' is empty")
    if present_flags.all():
        raise ValidationError("partition 'gender-absent' is empty")
    classes = np.asarray(classes)
    sims = np.empty(len(vectors))
    for cls in np.unique(classes):
        idx = np.where(classes == cls)[0]
        centroid = vectors[idx].mean(axis=0)
        for i in idx:
            sims[i] = cosine(vectors[i], centroid)
    pres_sims, abs_sims, pairs = [], [], []
    for cls in np.unique(classes):
        pres = [i for i in np.where((classes == cls) & present_flags)[0]]
        absent = [i for i in np.where((classes == cls) & ~present_flags)[0]]
        pres.sort(key=lambda i: lengths[i])
        absent = sorted(absent, key=lambda i: lengths[i])
        used = set()
        for i in pres:
            best, best_gap = None, None
            for j in absent:
                if j in used:
                    continue
                gap = abs(int(lengths[i]) - int(lengths[j]))
                if best_gap is None or gap < best_gap:
                    best, best_gap = j, gap
            if best is None:
                break
            used.add(best)
            pres_sims.append(sims[i])
            abs_sims.append(sims[best])
            pairs.append((i, best))
    if not pairs:
        raise ValidationError("no matchable pairs between partitions")
    report = wilcoxon_signed_rank(pres_sims, abs_sims, alternative=alternative)
    summary = {
        "n_pairs": len(pairs),
        "mean_similarity_present": float(np.mean(pres_sims)),
        "mean_similarity_absent": float(np.mean(abs_sims)),
    }
    return report, summary


def gender_presence_similarity(model, items, vocab, slex, glex,
                               alternative="two_sided", batch_size=64):
    """Partition items by whether gender masking finds any span, embed each
    item's symptom view with the symptom encoder, and test whether the
    [CLS]-to-class-centroid cosine differs between the partitions."""
    items = list(items)
    if any(it.symptom is None for it in items):
        raise ValidationError("all items need symptom labels for the pairing")
    flags = [len(knowledge.gender_spans(it.item.text, glex)) > 0 for it in items]
    ds = text.make_pair_dataset(
        items, vocab, slex, glex, max_len=model.config.max_len, require_labels=False
    )
    vectors = []
    for lo in range(0, len(items), batch_size):
        batch = ds.batch(range(lo, min(lo + batch_size, len(items))))
        vectors.append(model.encode_symptom_cls(batch))
    vectors = np.concatenate(vectors, axis=0)
    lengths = [len(it.item.text.split()) for it in items]
    return similarity_significance(
        vectors, [it.symptom for it in items], flags, lengths, alternative
    )
