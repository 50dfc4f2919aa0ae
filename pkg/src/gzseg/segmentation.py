"""Three-way routing of test instances into Seen / Unseen / Uncertain domains.

An instance is routed Seen when the classifier is confident and the
top-ranked class's tail model agrees it is close; Unseen when the
classifier is unconfident and every top-ranked class's tail model places
it far outside; Uncertain otherwise.  ``beta_out <= beta_in`` makes the
first two arms mutually exclusive.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .classifier import SoftmaxClassifier, softmax_probs_batch
from .data import Dataset
from .errors import ValidationError
from .evt import ClassEvtModel, _normalized_rows, weibull_cdf
from .util import map_chunked


class DomainLabel(str, Enum):
    SEEN = "seen"
    UNSEEN = "unseen"
    UNCERTAIN = "uncertain"


@dataclass(frozen=True)
class DomainThresholds:
    """Confidence cutoffs (beta_*), tail-CDF cutoffs (alpha_*), and the rank depth."""

    beta_in: float = 0.9
    beta_out: float = 0.5
    alpha_out: float = 0.9
    alpha_in: float = 0.5
    top_k: int = 3

    def __post_init__(self):
        for name in ("beta_in", "beta_out", "alpha_out", "alpha_in"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1)")
        if self.beta_out > self.beta_in:
            raise ValidationError("beta_out must not exceed beta_in")
        if self.alpha_in > self.alpha_out:
            raise ValidationError("alpha_in must not exceed alpha_out")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")


@dataclass
class SegmentationResult:
    """Per-instance routing decisions over both test splits, plus cell counts."""

    indices: np.ndarray            # dataset row of each evaluated instance
    origins: list[str]             # "seen" | "unseen" true origin
    domains: list[DomainLabel]
    confidences: np.ndarray        # top-class softmax probability
    tail_probs: np.ndarray         # top-class Weibull CDF at its centroid distance
    counts: dict[tuple[str, DomainLabel], int]


def _route(x, probs, classes, models, th, normalize):
    """Decide one instance's domain from its precomputed class probabilities."""
    if th.top_k > classes.size:
        raise ValidationError(f"top_k must lie in [1, {classes.size}]")
    order = np.lexsort((classes, -probs))
    ranked = classes[order[:th.top_k]]
    h = float(probs[order[0]])

    if normalize:
        x = _normalized_rows(x.reshape(1, -1))[0]

    def tail_prob(class_id: int) -> float:
        model = models.get(int(class_id))
        if model is None:
            raise ValidationError(f"no tail model for ranked class {class_id}")
        return weibull_cdf(model, float(np.linalg.norm(x - model.centroid)))

    p_top = tail_prob(ranked[0])
    if h > th.beta_in and p_top < th.alpha_in:
        return DomainLabel.SEEN, h, p_top
    if h < th.beta_out:
        if p_top > th.alpha_out and all(
            tail_prob(c) > th.alpha_out for c in ranked[1:]
        ):
            return DomainLabel.UNSEEN, h, p_top
    return DomainLabel.UNCERTAIN, h, p_top


def segment(x, clf: SoftmaxClassifier, models: dict[int, ClassEvtModel],
            thresholds: DomainThresholds, normalize: bool = False) -> DomainLabel:
    """Route a single instance; see the module docstring for the decision rule."""
    x = np.asarray(x, dtype=np.float64)
    probs = softmax_probs_batch(clf, x.reshape(1, -1))[0]
    label, _, _ = _route(x, probs, clf.classes, models, thresholds, normalize)
    return label


def segment_all(ds: Dataset, clf: SoftmaxClassifier,
                models: dict[int, ClassEvtModel], thresholds: DomainThresholds,
                normalize: bool = False, workers: int = 1) -> SegmentationResult:
    """Route every test instance (test-seen then test-unseen) and tally the cells."""
    indices = np.concatenate([ds.split.test_seen_idx, ds.split.test_unseen_idx])
    origins = ["seen"] * ds.split.test_seen_idx.size + \
              ["unseen"] * ds.split.test_unseen_idx.size
    feats = ds.features[indices].astype(np.float64)
    probs = softmax_probs_batch(clf, feats)

    def run(start, stop):
        return [
            _route(feats[i], probs[i], clf.classes, models, thresholds, normalize)
            for i in range(start, stop)
        ]

    routed = map_chunked(run, indices.size, workers)
    domains = [r[0] for r in routed]
    counts = {
        (origin, domain): 0
        for origin in ("seen", "unseen")
        for domain in DomainLabel
    }
    for origin, domain in zip(origins, domains):
        counts[(origin, domain)] += 1
    return SegmentationResult(
        indices=indices,
        origins=origins,
        domains=domains,
        confidences=np.array([r[1] for r in routed]),
        tail_probs=np.array([r[2] for r in routed]),
        counts=counts,
    )
