"""Linear softmax classifier over the seen classes.

Training minimizes temperature-scaled cross-entropy with mini-batch
gradient descent plus momentum.  The temperature softens the training
distribution only; every scoring operation (confidence, rankings) uses the
plain softmax.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import FormatError, NumericalError, ValidationError

GZCL_MAGIC = b"GZCL"
GZCL_VERSION = 1

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


@dataclass
class ClassifierTrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 64
    temperature: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must lie in [0, 1)")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not self.temperature > 0:
            raise ValidationError("temperature must be positive")


@dataclass
class SoftmaxClassifier:
    """Linear scorer: logit of class ``classes[c]`` is ``weights[c] @ x + bias[c]``."""

    weights: np.ndarray      # (p, d)
    bias: np.ndarray         # (p,)
    classes: np.ndarray      # (p,) global class ids, ascending
    temperature: float = 1.0  # training-time temperature, kept for provenance

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_probs(clf: SoftmaxClassifier, x, temperature: float | None = None) -> np.ndarray:
    """Class probabilities for one instance; optional temperature divides the logits."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValidationError("input vector contains non-finite values")
    t = 1.0 if temperature is None else float(temperature)
    if not t > 0:
        raise ValidationError("temperature must be positive")
    logits = clf.weights @ x + clf.bias
    return _softmax_rows(logits / t)


def softmax_probs_batch(clf: SoftmaxClassifier, xs: np.ndarray,
                        temperature: float | None = None) -> np.ndarray:
    """Row-wise softmax_probs for a (N, d) matrix of instances."""
    xs = np.asarray(xs, dtype=np.float64)
    if not np.isfinite(xs).all():
        raise ValidationError("input matrix contains non-finite values")
    t = 1.0 if temperature is None else float(temperature)
    if not t > 0:
        raise ValidationError("temperature must be positive")
    logits = xs @ clf.weights.T + clf.bias
    return _softmax_rows(logits / t)


def confidence_score(clf: SoftmaxClassifier, x) -> float:
    """Maximum plain-softmax probability; the seen-ness score used for routing."""
    return float(softmax_probs(clf, x).max())


def top_classes(clf: SoftmaxClassifier, x, k: int) -> np.ndarray:
    """The k class ids with highest confidence, ties broken by ascending id."""
    if not 1 <= k <= clf.num_classes:
        raise ValidationError(f"k must lie in [1, {clf.num_classes}]")
    probs = softmax_probs(clf, x)
    order = np.lexsort((clf.classes, -probs))
    return clf.classes[order[:k]]


def cross_entropy_loss_and_grad(weights, bias, features, class_index, temperature):
    """Mean temperature-scaled cross-entropy over a batch and its gradients.

    Returns (loss, grad_weights, grad_bias).  ``class_index`` holds row
    indices into the weight matrix, not global class ids.
    """
    scaled = (features @ weights.T + bias) / temperature
    scaled -= scaled.max(axis=1, keepdims=True)
    log_probs = scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))
    n = features.shape[0]
    rows = np.arange(n)
    loss = -log_probs[rows, class_index].mean()
    delta = np.exp(log_probs)
    delta[rows, class_index] -= 1.0
    delta /= temperature * n
    return loss, delta.T @ features, delta.sum(axis=0)


def train_classifier(ds: Dataset, cfg: ClassifierTrainConfig) -> SoftmaxClassifier:
    """Fit the seen-class classifier on the training split.

    Deterministic for a fixed seed: initialization, shuffling, and update
    order all come from one seeded generator.  Raises NumericalError if the
    loss becomes non-finite, reporting the epoch.
    """
    classes = ds.seen_classes
    train_idx = ds.split.train_idx
    feats = ds.features[train_idx].astype(np.float64)
    class_index = np.searchsorted(classes, ds.labels[train_idx])

    rng = np.random.default_rng(cfg.seed)
    p, d = classes.size, ds.feature_dim
    weights = rng.normal(0.0, 0.01, (p, d))
    bias = np.zeros(p)
    vel_w = np.zeros_like(weights)
    vel_b = np.zeros_like(bias)

    n = feats.shape[0]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, gw, gb = cross_entropy_loss_and_grad(
                weights, bias, feats[sel], class_index[sel], cfg.temperature
            )
            if not np.isfinite(loss):
                raise NumericalError(f"training loss diverged at epoch {epoch + 1}")
            vel_w = cfg.momentum * vel_w - cfg.learning_rate * gw
            vel_b = cfg.momentum * vel_b - cfg.learning_rate * gb
            weights += vel_w
            bias += vel_b

    return SoftmaxClassifier(weights, bias, classes, cfg.temperature)


def save_classifier(clf: SoftmaxClassifier, path) -> None:
    """Write the GZCL checkpoint section: magic, version, p, d, weights, bias."""
    parts = [
        GZCL_MAGIC,
        struct.pack("<III", GZCL_VERSION, clf.num_classes, clf.feature_dim),
        np.ascontiguousarray(clf.weights, dtype=_F32).tobytes(),
        np.ascontiguousarray(clf.bias, dtype=_F32).tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_classifier(path, classes=None, temperature: float = 1.0) -> SoftmaxClassifier:
    """Read a GZCL checkpoint.

    The checkpoint stores only weights; the global class ids the rows refer
    to come from the caller (defaults to 0..p-1).
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != GZCL_MAGIC:
        raise FormatError(f"bad magic, expected {GZCL_MAGIC!r}")
    version, p, d = struct.unpack_from("<III", buf, 4)
    if version != GZCL_VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = 16 + 4 * p * d + 4 * p
    if len(buf) != expected:
        raise FormatError("classifier section has wrong length")
    weights = np.frombuffer(buf, dtype=_F32, count=p * d, offset=16)
    bias = np.frombuffer(buf, dtype=_F32, count=p, offset=16 + 4 * p * d)
    if classes is None:
        classes = np.arange(p, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    if classes.size != p:
        raise ValidationError("class id list does not match checkpoint width")
    return SoftmaxClassifier(
        weights.astype(np.float64).reshape(p, d),
        bias.astype(np.float64),
        classes,
        temperature,
    )
