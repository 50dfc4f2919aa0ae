"""Visual prototypes, the semantic-to-visual network, and routed prediction.

Prototypes start at the class centroids and are refined with a softmax
similarity loss over inner products.  A two-layer rectified network maps a
class's semantic vector into visual space; it is trained to hit the
prototypes (optionally each training feature directly).  Prediction picks
the class whose embedded semantic vector is nearest, restricted by the
routed domain, with seen-class distances inflated by a calibration factor
on the uncertain domain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset, class_centroid
from .errors import FormatError, NumericalError, ValidationError
from .segmentation import DomainLabel

GZPR_MAGIC = b"GZPR"
GZEM_MAGIC = b"GZEM"
CHECKPOINT_VERSION = 1

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class PrototypeSet:
    """One learned visual prototype per seen class, rows aligned with ``classes``."""

    classes: np.ndarray   # (p,) ascending class ids
    vectors: np.ndarray   # (p, d) float64


@dataclass(frozen=True)
class EmbeddingNet:
    """Two-layer rectified map from semantic space to visual space (no biases)."""

    w1: np.ndarray        # (hidden, a)
    w2: np.ndarray        # (d, hidden)
    reg_lambda: float

    def __post_init__(self):
        if self.reg_lambda < 0:
            raise ValidationError("reg_lambda must be >= 0")

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]


@dataclass(frozen=True)
class CalibrationConfig:
    """Multiplier applied to seen-class squared distances on the uncertain domain."""

    gamma: float = 1.5

    def __post_init__(self):
        if self.gamma < 1:
            raise ValidationError("gamma must be >= 1")


@dataclass
class EmbeddingTrainConfig:
    hidden_dim: int = 1600
    reg_lambda: float = 1e-4
    learning_rate: float = 1e-4
    proto_learning_rate: float = 1e-3
    rounds: int = 10
    proto_epochs: int = 5
    embed_epochs: int = 20
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be >= 1")
        if self.reg_lambda < 0:
            raise ValidationError("reg_lambda must be >= 0")
        if not self.learning_rate > 0 or not self.proto_learning_rate > 0:
            raise ValidationError("learning rates must be positive")
        if min(self.rounds, self.proto_epochs, self.embed_epochs) < 0:
            raise ValidationError("rounds and epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


def init_prototypes(ds: Dataset) -> PrototypeSet:
    """Prototypes initialized at the training centroid of each seen class."""
    classes = ds.seen_classes
    vectors = np.stack([class_centroid(ds, int(c)) for c in classes])
    return PrototypeSet(classes, vectors)


def prototype_loss_and_grad(vectors, feats, class_index):
    """Summed softmax similarity loss over inner products, and its prototype gradient.

    The gradient of the loss with respect to prototype j is
    sum_i (softmax_similarity[i, j] - indicator[i, j]) * x_i.
    """
    scores = feats @ vectors.T
    scores -= scores.max(axis=1, keepdims=True)
    log_probs = scores - np.log(np.exp(scores).sum(axis=1, keepdims=True))
    rows = np.arange(feats.shape[0])
    loss = -log_probs[rows, class_index].sum()
    delta = np.exp(log_probs)
    delta[rows, class_index] -= 1.0
    return loss, delta.T @ feats


def train_prototypes(ds: Dataset, protos: PrototypeSet, epochs: int, lr: float,
                     seed: int = 0) -> PrototypeSet:
    """Full-batch gradient descent on the prototype loss; features stay fixed."""
    train_idx = ds.split.train_idx
    feats = ds.features[train_idx].astype(np.float64)
    class_index = np.searchsorted(protos.classes, ds.labels[train_idx])
    vectors = protos.vectors.copy()
    for epoch in range(epochs):
        loss, grad = prototype_loss_and_grad(vectors, feats, class_index)
        if not np.isfinite(loss):
            raise NumericalError(f"prototype loss diverged at epoch {epoch + 1}")
        vectors -= lr * grad
    return PrototypeSet(protos.classes, vectors)


def embedding_loss_and_grad(w1, w2, inputs, targets, reg_lambda):
    """Summed squared reconstruction error plus L2 weight penalty, with gradients."""
    pre = inputs @ w1.T
    hidden = np.maximum(pre, 0.0)
    resid = hidden @ w2.T - targets
    loss = (resid * resid).sum() + reg_lambda * ((w1 * w1).sum() + (w2 * w2).sum())
    g_out = 2.0 * resid
    grad_w2 = g_out.T @ hidden + 2.0 * reg_lambda * w2
    g_hidden = np.where(pre > 0.0, g_out @ w2, 0.0)
    grad_w1 = g_hidden.T @ inputs + 2.0 * reg_lambda * w1
    return loss, grad_w1, grad_w2


def _init_net(rng, hidden_dim, sem_dim, feat_dim):
    w1 = rng.normal(0.0, np.sqrt(2.0 / sem_dim), (hidden_dim, sem_dim))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden_dim), (feat_dim, hidden_dim))
    return w1, w2


def _descend(w1, w2, inputs, targets, reg_lambda, lr, epochs, what):
    for epoch in range(epochs):
        loss, g1, g2 = embedding_loss_and_grad(w1, w2, inputs, targets, reg_lambda)
        if not np.isfinite(loss):
            raise NumericalError(f"{what} loss diverged at epoch {epoch + 1}")
        w1 -= lr * g1
        w2 -= lr * g2
    return w1, w2


def train_embedding(semantics, protos: PrototypeSet, cfg: EmbeddingTrainConfig,
                    epochs: int | None = None) -> EmbeddingNet:
    """Fit the network to map each seen class's semantic vector onto its prototype.

    ``semantics`` holds one row per seen class, aligned with the prototype
    rows.  Runs ``rounds * embed_epochs`` full-batch epochs unless ``epochs``
    is given.
    """
    semantics = np.asarray(semantics, dtype=np.float64)
    if semantics.shape[0] != protos.vectors.shape[0]:
        raise ValidationError("one semantic row per prototype is required")
    rng = np.random.default_rng(cfg.seed)
    w1, w2 = _init_net(rng, cfg.hidden_dim, semantics.shape[1], protos.vectors.shape[1])
    total = cfg.rounds * cfg.embed_epochs if epochs is None else epochs
    w1, w2 = _descend(w1, w2, semantics, protos.vectors, cfg.reg_lambda,
                      cfg.learning_rate, total, "embedding")
    return EmbeddingNet(w1, w2, cfg.reg_lambda)


def train_embedding_simple(ds: Dataset, cfg: EmbeddingTrainConfig,
                           epochs: int | None = None) -> EmbeddingNet:
    """Fit the network to map semantics onto each training feature directly.

    Same objective shape as train_embedding but with one term per training
    instance, optimized with seeded mini-batch gradient descent.
    """
    train_idx = ds.split.train_idx
    inputs = ds.semantics[ds.labels[train_idx]].astype(np.float64)
    targets = ds.features[train_idx].astype(np.float64)
    rng = np.random.default_rng(cfg.seed)
    w1, w2 = _init_net(rng, cfg.hidden_dim, inputs.shape[1], targets.shape[1])
    total = cfg.rounds * cfg.embed_epochs if epochs is None else epochs
    n = inputs.shape[0]
    for epoch in range(total):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, g1, g2 = embedding_loss_and_grad(
                w1, w2, inputs[sel], targets[sel], cfg.reg_lambda
            )
            if not np.isfinite(loss):
                raise NumericalError(f"embedding loss diverged at epoch {epoch + 1}")
            w1 -= cfg.learning_rate * g1
            w2 -= cfg.learning_rate * g2
    return EmbeddingNet(w1, w2, cfg.reg_lambda)


def train_alternating(ds: Dataset, cfg: EmbeddingTrainConfig
                      ) -> tuple[PrototypeSet, EmbeddingNet]:
    """Alternate blocks of prototype updates and embedding updates.

    With zero rounds this returns the centroid initialization and a freshly
    initialized, untrained network.
    """
    rng = np.random.default_rng(cfg.seed)
    protos = init_prototypes(ds)
    semantics = ds.semantics[protos.classes].astype(np.float64)
    w1, w2 = _init_net(rng, cfg.hidden_dim, semantics.shape[1], protos.vectors.shape[1])
    for _ in range(cfg.rounds):
        protos = train_prototypes(ds, protos, cfg.proto_epochs,
                                  cfg.proto_learning_rate)
        w1, w2 = _descend(w1, w2, semantics, protos.vectors, cfg.reg_lambda,
                          cfg.learning_rate, cfg.embed_epochs, "embedding")
    return protos, EmbeddingNet(w1, w2, cfg.reg_lambda)


def embed(net: EmbeddingNet, y) -> np.ndarray:
    """Map one semantic vector into visual space."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValidationError("semantic vector contains non-finite values")
    return net.w2 @ np.maximum(net.w1 @ y, 0.0)


def embed_classes(net: EmbeddingNet, semantics) -> np.ndarray:
    """Map every class's semantic vector; returns a (C, d) matrix."""
    s = np.asarray(semantics, dtype=np.float64)
    if not np.isfinite(s).all():
        raise ValidationError("semantics contain non-finite values")
    return np.maximum(s @ net.w1.T, 0.0) @ net.w2.T


def predict_from_embeddings(x, domain: DomainLabel, class_embeddings,
                            calib: CalibrationConfig, seen_labels,
                            unseen_labels) -> int:
    """Nearest embedded class by squared distance, restricted to the routed domain.

    On the uncertain domain the candidate set is the union of both label
    sets and each seen candidate's squared distance is multiplied by the
    calibration factor.  Ties go to the lowest class id.
    """
    seen = np.unique(np.asarray(seen_labels, dtype=np.int64))
    unseen = np.unique(np.asarray(unseen_labels, dtype=np.int64))
    if seen.size == 0 or unseen.size == 0:
        raise ValidationError("seen and unseen label sets must be nonempty")
    if np.intersect1d(seen, unseen).size:
        raise ValidationError("seen and unseen label sets must be disjoint")

    if domain == DomainLabel.SEEN:
        candidates, mult = seen, np.ones(seen.size)
    elif domain == DomainLabel.UNSEEN:
        candidates, mult = unseen, np.ones(unseen.size)
    else:
        candidates = np.union1d(seen, unseen)
        mult = np.where(np.isin(candidates, seen), calib.gamma, 1.0)

    x = np.asarray(x, dtype=np.float64)
    diff = class_embeddings[candidates] - x
    scores = (diff * diff).sum(axis=1) * mult
    return int(candidates[np.argmin(scores)])


def predict(x, domain: DomainLabel, net: EmbeddingNet, semantics,
            calib: CalibrationConfig, seen_labels, unseen_labels) -> int:
    """Classify one instance; see predict_from_embeddings for the decision rule."""
    table = embed_classes(net, semantics)
    return predict_from_embeddings(x, domain, table, calib, seen_labels, unseen_labels)


def save_prototypes(protos: PrototypeSet, path) -> None:
    p, d = protos.vectors.shape
    parts = [
        GZPR_MAGIC,
        struct.pack("<III", CHECKPOINT_VERSION, p, d),
        np.ascontiguousarray(protos.classes, dtype=_U32).tobytes(),
        np.ascontiguousarray(protos.vectors, dtype=_F32).tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_prototypes(path) -> PrototypeSet:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != GZPR_MAGIC:
        raise FormatError(f"bad magic, expected {GZPR_MAGIC!r}")
    version, p, d = struct.unpack_from("<III", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported version {version}")
    if len(buf) != 16 + 4 * p + 4 * p * d:
        raise FormatError("prototype section has wrong length")
    classes = np.frombuffer(buf, dtype=_U32, count=p, offset=16).astype(np.int64)
    vectors = np.frombuffer(buf, dtype=_F32, count=p * d, offset=16 + 4 * p)
    return PrototypeSet(classes, vectors.astype(np.float64).reshape(p, d))


def save_embedding(net: EmbeddingNet, path) -> None:
    h, a = net.w1.shape
    d = net.w2.shape[0]
    parts = [
        GZEM_MAGIC,
        struct.pack("<IIII", CHECKPOINT_VERSION, h, a, d),
        np.ascontiguousarray(net.w1, dtype=_F32).tobytes(),
        np.ascontiguousarray(net.w2, dtype=_F32).tobytes(),
        struct.pack("<d", net.reg_lambda),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_embedding(path) -> EmbeddingNet:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != GZEM_MAGIC:
        raise FormatError(f"bad magic, expected {GZEM_MAGIC!r}")
    version, h, a, d = struct.unpack_from("<IIII", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported version {version}")
    if len(buf) != 20 + 4 * h * a + 4 * d * h + 8:
        raise FormatError("embedding section has wrong length")
    w1 = np.frombuffer(buf, dtype=_F32, count=h * a, offset=20)
    w2 = np.frombuffer(buf, dtype=_F32, count=d * h, offset=20 + 4 * h * a)
    (reg_lambda,) = struct.unpack_from("<d", buf, 20 + 4 * h * a + 4 * d * h)
    return EmbeddingNet(
        w1.astype(np.float64).reshape(h, a),
        w2.astype(np.float64).reshape(d, h),
        reg_lambda,
    )
