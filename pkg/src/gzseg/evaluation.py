"""Metrics, ROC analysis, the end-to-end pipeline, and figure-data emission.

Accuracies are per-class top-1: each class contributes the fraction of its
own instances predicted correctly, and classes are averaged unweighted.
Seen and unseen accuracies are both computed against the full label space;
their harmonic mean is the headline number.  The pipeline runs in four
modes that toggle domain routing and seen-distance calibration, mirroring
an ablation grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import SoftmaxClassifier, train_classifier
from .data import Dataset
from .errors import ValidationError
from .evt import ClassEvtModel, fit_all_classes
from .embedding import (
    CalibrationConfig,
    EmbeddingNet,
    PrototypeSet,
    embed_classes,
    init_prototypes,
    predict_from_embeddings,
    train_alternating,
    train_embedding_simple,
)
from .segmentation import DomainLabel, segment_all
from .util import map_chunked

MODES = ("baseline", "baseline+CS", "baseline+DS", "baseline+DS+CS")


def harmonic_mean(acc_tr: float, acc_ts: float) -> float:
    """Harmonic mean of seen and unseen accuracy; zero if either is zero."""
    if acc_tr < 0 or acc_ts < 0:
        raise ValidationError("accuracies must be nonnegative")
    if acc_tr == 0.0 or acc_ts == 0.0:
        return 0.0
    return 2.0 * acc_tr * acc_ts / (acc_tr + acc_ts)


def per_class_breakdown(predictions, true_labels, class_set
                        ) -> tuple[dict[int, float], int]:
    """Accuracy per class plus the number of zero-instance classes excluded."""
    preds = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(true_labels, dtype=np.int64)
    classes = np.unique(np.asarray(list(class_set), dtype=np.int64))
    if classes.size == 0:
        raise ValidationError("class set must be nonempty")
    if not np.isin(labels, classes).all():
        raise ValidationError("every true label must belong to the class set")
    accs: dict[int, float] = {}
    excluded = 0
    for c in classes:
        mask = labels == c
        if not mask.any():
            excluded += 1
            continue
        accs[int(c)] = float((preds[mask] == c).mean())
    if not accs:
        raise ValidationError("no class in the set has instances in this split")
    return accs, excluded


def per_class_top1(predictions, true_labels, class_set) -> float:
    """Unweighted mean of per-class accuracies over ``class_set``."""
    accs, _ = per_class_breakdown(predictions, true_labels, class_set)
    return float(np.mean(list(accs.values())))


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(scores, is_positive) -> RocCurve:
    """ROC points at every distinct score threshold, with trapezoid AUC.

    Tied scores advance both rates at once, so the trapezoid area equals
    the pairwise ranking statistic with ties counted one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(is_positive, dtype=bool)
    if scores.shape != flags.shape or scores.ndim != 1:
        raise ValidationError("scores and flags must be 1-D and equally long")
    n_pos = int(flags.sum())
    n_neg = flags.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("both classes must be present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    f = flags[order]
    # last index of each group of tied scores
    ends = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([ends, [s.size - 1]])
    tp = np.cumsum(f)[ends]
    fp = np.cumsum(~f)[ends]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    thresholds = np.concatenate([[np.inf], s[ends]])
    return RocCurve(fpr, tpr, thresholds, auc)


@dataclass
class PipelineStages:
    """Everything trained once and shared by all evaluation modes."""

    classifier: SoftmaxClassifier
    evt_models: dict[int, ClassEvtModel]
    prototypes: PrototypeSet
    net: EmbeddingNet


@dataclass
class RunArtifacts:
    """Per-instance record of one evaluation pass, for histograms and audits."""

    indices: np.ndarray
    origins: list[str]
    true_labels: np.ndarray
    domains: list[DomainLabel]
    pred_labels: np.ndarray
    confidences: np.ndarray
    tail_probs: np.ndarray
    pred_distances: np.ndarray   # distance to the chosen class embedding


@dataclass
class GzslReport:
    """Headline metrics plus routing diagnostics for one pipeline run."""

    mode: str
    acc_tr: float
    acc_ts: float
    harmonic: float
    per_class_acc: dict[int, float] = field(repr=False)
    domain_counts: dict[tuple[str, str], int]
    excluded_classes: int = 0

    def misrouted_unseen_to_seen(self) -> int:
        return self.domain_counts[("unseen", DomainLabel.SEEN.value)]

    def misrouted_seen_to_unseen(self) -> int:
        return self.domain_counts[("seen", DomainLabel.UNSEEN.value)]


def fit_stages(ds: Dataset, cfg) -> PipelineStages:
    """Train classifier, tail models, prototypes, and the embedding network."""
    clf = train_classifier(ds, cfg.classifier)
    models = fit_all_classes(ds, cfg.tail_size, cfg.evt_normalize)
    if cfg.embedding_objective == "simple":
        protos = init_prototypes(ds)
        net = train_embedding_simple(ds, cfg.embedding)
    else:
        protos, net = train_alternating(ds, cfg.embedding)
    return PipelineStages(clf, models, protos, net)


def evaluate_mode(ds: Dataset, cfg, stages: PipelineStages, mode: str
                  ) -> tuple[GzslReport, RunArtifacts]:
    """Route (per the mode), predict, and score one pass over both test splits."""
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    use_routing = "DS" in mode
    gamma = cfg.gamma if "CS" in mode else 1.0

    seg = segment_all(ds, stages.classifier, stages.evt_models, cfg.thresholds,
                      cfg.evt_normalize, cfg.workers)
    domains = seg.domains if use_routing else [DomainLabel.UNCERTAIN] * seg.indices.size

    seen = ds.seen_classes
    unseen = ds.unseen_classes
    table = embed_classes(stages.net, ds.semantics)
    calib = CalibrationConfig(max(gamma, 1.0))
    feats = ds.features[seg.indices].astype(np.float64)

    def run(start, stop):
        out = []
        for i in range(start, stop):
            pred = predict_from_embeddings(feats[i], domains[i], table, calib,
                                           seen, unseen)
            out.append((pred, float(np.linalg.norm(feats[i] - table[pred]))))
        return out

    results = map_chunked(run, seg.indices.size, cfg.workers)
    preds = np.array([r[0] for r in results], dtype=np.int64)
    dists = np.array([r[1] for r in results])

    true_labels = ds.labels[seg.indices]
    n_seen_split = ds.split.test_seen_idx.size
    seen_accs, excl_seen = per_class_breakdown(
        preds[:n_seen_split], true_labels[:n_seen_split], seen
    )
    unseen_accs, excl_unseen = per_class_breakdown(
        preds[n_seen_split:], true_labels[n_seen_split:], unseen
    )
    acc_tr = float(np.mean(list(seen_accs.values())))
    acc_ts = float(np.mean(list(unseen_accs.values())))

    counts = {
        (origin, domain.value): 0
        for origin in ("seen", "unseen")
        for domain in DomainLabel
    }
    for origin, domain in zip(seg.origins, domains):
        counts[(origin, domain.value)] += 1

    report = GzslReport(
        mode=mode,
        acc_tr=acc_tr,
        acc_ts=acc_ts,
        harmonic=harmonic_mean(acc_tr, acc_ts),
        per_class_acc={**seen_accs, **unseen_accs},
        domain_counts=counts,
        excluded_classes=excl_seen + excl_unseen,
    )
    artifacts = RunArtifacts(
        indices=seg.indices,
        origins=seg.origins,
        true_labels=true_labels,
        domains=domains,
        pred_labels=preds,
        confidences=seg.confidences,
        tail_probs=seg.tail_probs,
        pred_distances=dists,
    )
    return report, artifacts


def run_pipeline(ds: Dataset, cfg, mode: str) -> GzslReport:
    """End-to-end run: train all stages, then evaluate under one mode."""
    report, _ = evaluate_mode(ds, cfg, fit_stages(ds, cfg), mode)
    return report


def run_pipeline_artifacts(ds: Dataset, cfg, mode: str
                           ) -> tuple[GzslReport, RunArtifacts]:
    return evaluate_mode(ds, cfg, fit_stages(ds, cfg), mode)


def run_ablation(ds: Dataset, cfg) -> dict[str, GzslReport]:
    """All four modes over one shared set of trained stages."""
    stages = fit_stages(ds, cfg)
    return {mode: evaluate_mode(ds, cfg, stages, mode)[0] for mode in MODES}


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def emit_histograms(artifacts: RunArtifacts, bins: int) -> dict[str, str]:
    """Binned confidence scores and prediction distances as CSV tables.

    Confidence counts are split by true origin over [0, 1].  Distance
    counts are split by (origin, predicted side); the unseen-predicted-as-
    seen column is the misrouting diagnostic.
    """
    if bins < 1:
        raise ValidationError("bins must be >= 1")
    origins = np.asarray(artifacts.origins)
    seen_mask = origins == "seen"

    edges = np.linspace(0.0, 1.0, bins + 1)
    conf_seen, _ = np.histogram(artifacts.confidences[seen_mask], bins=edges)
    conf_unseen, _ = np.histogram(artifacts.confidences[~seen_mask], bins=edges)
    conf_rows = [
        [float(edges[i]), float(edges[i + 1]), int(conf_seen[i]), int(conf_unseen[i])]
        for i in range(bins)
    ]
    conf_csv = _csv(["bin_lo", "bin_hi", "seen_count", "unseen_count"], conf_rows)

    pred_seen_side = np.isin(artifacts.pred_labels,
                             np.unique(artifacts.true_labels[seen_mask]))
    dmax = float(artifacts.pred_distances.max()) if artifacts.pred_distances.size else 1.0
    d_edges = np.linspace(0.0, max(dmax, 1e-12), bins + 1)
    groups = {
        "seen_pred_seen": seen_mask & pred_seen_side,
        "seen_pred_unseen": seen_mask & ~pred_seen_side,
        "unseen_pred_seen": ~seen_mask & pred_seen_side,
        "unseen_pred_unseen": ~seen_mask & ~pred_seen_side,
    }
    hists = {
        name: np.histogram(artifacts.pred_distances[mask], bins=d_edges)[0]
        for name, mask in groups.items()
    }
    dist_rows = [
        [float(d_edges[i]), float(d_edges[i + 1])] +
        [int(hists[name][i]) for name in groups]
        for i in range(bins)
    ]
    dist_csv = _csv(["bin_lo", "bin_hi", *groups], dist_rows)
    return {"confidence": conf_csv, "distance": dist_csv}


def report_kv_lines(report: GzslReport) -> list[str]:
    """Machine-readable key/value lines; stable order, '.' decimal separator."""
    lines = [
        f"mode = {report.mode}",
        f"acc_tr = {report.acc_tr!r}",
        f"acc_ts = {report.acc_ts!r}",
        f"h = {report.harmonic!r}",
        f"excluded_classes = {report.excluded_classes}",
    ]
    for (origin, domain), count in sorted(report.domain_counts.items()):
        lines.append(f"count_{origin}_{domain} = {count}")
    for class_id in sorted(report.per_class_acc):
        lines.append(f"acc_class_{class_id} = {report.per_class_acc[class_id]!r}")
    return lines


def report_table(report: GzslReport) -> str:
    """Human-readable summary of one run."""
    rows = [
        ("mode", report.mode),
        ("ACC_tr (seen)", f"{report.acc_tr:.4f}"),
        ("ACC_ts (unseen)", f"{report.acc_ts:.4f}"),
        ("H", f"{report.harmonic:.4f}"),
        ("unseen routed seen", str(report.misrouted_unseen_to_seen())),
        ("seen routed unseen", str(report.misrouted_seen_to_unseen())),
        ("excluded classes", str(report.excluded_classes)),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def ablation_table(reports: dict[str, GzslReport]) -> str:
    """Grid with one row per mode and columns ts, tr, H."""
    lines = [f"{'mode':<18} {'ts':>8} {'tr':>8} {'H':>8}"]
    for mode in MODES:
        r = reports[mode]
        lines.append(
            f"{mode:<18} {r.acc_ts:>8.4f} {r.acc_tr:>8.4f} {r.harmonic:>8.4f}"
        )
    return "\n".join(lines) + "\n"
