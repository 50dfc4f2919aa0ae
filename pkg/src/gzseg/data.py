"""Dataset container, the GZB binary format, and synthetic data generation.

A dataset bundles visual feature vectors, per-instance class labels,
per-class semantic vectors, and a fixed train / test-seen / test-unseen
split.  Seen classes are the ones that occur in the training split; unseen
classes occur only in the test-unseen split.  All validation happens at
construction/load time so downstream code can rely on the invariants.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

GZB_MAGIC = b"GZSB"
GZB_VERSION = 1

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class SplitSpec:
    """Index lists into the feature matrix: train, test-seen, test-unseen."""

    train_idx: np.ndarray
    test_seen_idx: np.ndarray
    test_unseen_idx: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Immutable container for features, labels, semantics, and the split.

    features : (N, d) float32
    labels   : (N,) integer class ids in [0, C)
    semantics: (C, a) float32, one semantic vector per class
    """

    features: np.ndarray
    labels: np.ndarray
    semantics: np.ndarray
    split: SplitSpec

    @property
    def num_instances(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.semantics.shape[0]

    @property
    def semantic_dim(self) -> int:
        return self.semantics.shape[1]

    @property
    def seen_classes(self) -> np.ndarray:
        """Sorted ids of classes with training instances."""
        return np.unique(self.labels[self.split.train_idx])

    @property
    def unseen_classes(self) -> np.ndarray:
        """Sorted ids of classes appearing only in the test-unseen split."""
        return np.unique(self.labels[self.split.test_unseen_idx])


def _freeze(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr.flags.writeable = False
    return arr


def validate_dataset(ds: Dataset) -> Dataset:
    """Check every dataset invariant, raising ValidationError on the first failure.

    On success the underlying arrays are marked read-only and the dataset is
    returned, so the call can be chained.
    """
    f, lab, sem = ds.features, ds.labels, ds.semantics
    if f.ndim != 2 or sem.ndim != 2 or lab.ndim != 1:
        raise ValidationError("features and semantics must be 2-D, labels 1-D")
    n, d = f.shape
    c, a = sem.shape
    if n < 1 or d < 1:
        raise ValidationError("need N >= 1 instances and d >= 1 feature dims")
    if c < 2 or a < 1:
        raise ValidationError("need C >= 2 classes and a >= 1 semantic dims")
    if lab.shape[0] != n:
        raise ValidationError("labels length must equal the number of instances")
    if not np.isfinite(f).all():
        raise ValidationError("features contain non-finite values")
    if not np.isfinite(sem).all():
        raise ValidationError("semantics contain non-finite values")
    if lab.min() < 0 or lab.max() >= c:
        raise ValidationError("every label must lie in [0, C)")

    names = ("train", "test_seen", "test_unseen")
    splits = (ds.split.train_idx, ds.split.test_seen_idx, ds.split.test_unseen_idx)
    for name, idx in zip(names, splits):
        if idx.ndim != 1 or idx.size == 0:
            raise ValidationError(f"{name} index list must be 1-D and nonempty")
        if idx.min() < 0 or idx.max() >= n:
            raise ValidationError(f"{name} indices must lie in [0, N)")
        if np.unique(idx).size != idx.size:
            raise ValidationError(f"{name} indices contain duplicates")
    for i in range(3):
        for j in range(i + 1, 3):
            if np.intersect1d(splits[i], splits[j]).size:
                raise ValidationError(
                    f"{names[i]} and {names[j]} index lists overlap"
                )

    seen = np.unique(lab[ds.split.train_idx])
    unseen = np.unique(lab[ds.split.test_unseen_idx])
    if np.intersect1d(seen, unseen).size:
        raise ValidationError("seen and unseen class sets overlap")
    if not np.isin(lab[ds.split.test_seen_idx], seen).all():
        raise ValidationError("test_seen labels must belong to the seen class set")

    for arr in (f, lab, sem, *splits):
        _freeze(arr)
    return ds


class _Reader:
    """Cursor over a byte buffer with typed little-endian reads."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int) -> bytes:
        end = self.pos + nbytes
        if end > len(self.buf):
            raise FormatError("file truncated")
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u32_array(self, count: int) -> np.ndarray:
        raw = np.frombuffer(self.take(4 * count), dtype=_U32)
        return raw.astype(np.int64)

    def f32_matrix(self, rows: int, cols: int) -> np.ndarray:
        raw = np.frombuffer(self.take(4 * rows * cols), dtype=_F32)
        return raw.reshape(rows, cols)

    def done(self) -> bool:
        return self.pos == len(self.buf)


def load_dataset(path) -> Dataset:
    """Read a GZB v1 file and return a fully validated Dataset.

    Raises FormatError for a bad magic/version or a truncated file and
    ValidationError when the content violates a dataset invariant.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    if r.take(4) != GZB_MAGIC:
        raise FormatError(f"bad magic, expected {GZB_MAGIC!r}")
    version = r.u32()
    if version != GZB_VERSION:
        raise FormatError(f"unsupported version {version}")
    n, d, c, a = r.u32(), r.u32(), r.u32(), r.u32()
    if n < 1 or d < 1 or c < 1 or a < 1:
        raise FormatError("header dimensions must be nonzero")
    features = r.f32_matrix(n, d)
    labels = r.u32_array(n)
    semantics = r.f32_matrix(c, a)
    idx = []
    for _ in range(3):
        count = r.u32()
        idx.append(r.u32_array(count))
    if not r.done():
        raise FormatError("trailing bytes after the index sections")
    ds = Dataset(features, labels, semantics, SplitSpec(*idx))
    return validate_dataset(ds)


def save_dataset(ds: Dataset, path) -> None:
    """Write a Dataset as a GZB v1 file; refuses invalid datasets before writing."""
    validate_dataset(ds)
    parts = [
        GZB_MAGIC,
        struct.pack(
            "<IIIII",
            GZB_VERSION,
            ds.num_instances,
            ds.feature_dim,
            ds.num_classes,
            ds.semantic_dim,
        ),
        np.ascontiguousarray(ds.features, dtype=_F32).tobytes(),
        np.ascontiguousarray(ds.labels, dtype=_U32).tobytes(),
        np.ascontiguousarray(ds.semantics, dtype=_F32).tobytes(),
    ]
    for idx in (ds.split.train_idx, ds.split.test_seen_idx, ds.split.test_unseen_idx):
        parts.append(struct.pack("<I", idx.size))
        parts.append(np.ascontiguousarray(idx, dtype=_U32).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def generate_synthetic(
    n_seen: int,
    n_unseen: int,
    dim: int,
    sem_dim: int,
    per_class: int,
    spread: float,
    seed: int,
) -> Dataset:
    """Generate a Gaussian-cluster dataset whose semantics predict cluster location.

    Each class is an isotropic Gaussian with standard deviation ``spread``
    around its class mean.  Class means are a fixed random linear mix of the
    class semantic vectors plus small noise, which makes each semantic
    vector a fixed linear projection of its class mean up to that noise and
    keeps the semantic-to-visual mapping learnable from the seen classes
    alone (the mix is exactly invertible on the semantic span).  Instances
    are laid out class by class.  70% of each seen class goes to the
    training split and the rest to test-seen; unseen classes go entirely to
    test-unseen.  Draw order (semantics, mixing matrix, mean noise,
    features, per-class split permutations) is fixed, so output is fully
    determined by the seed.
    """
    if min(n_seen, n_unseen, dim, sem_dim) < 1:
        raise ValidationError("class counts and dimensions must be >= 1")
    if per_class < 2:
        raise ValidationError(
            "per_class must be >= 2 so each seen class reaches both train and test_seen"
        )
    if not spread > 0:
        raise ValidationError("spread must be positive")

    rng = np.random.default_rng(seed)
    n_classes = n_seen + n_unseen
    total = n_classes * per_class

    semantics = rng.standard_normal((n_classes, sem_dim))
    mix = rng.standard_normal((dim, sem_dim)) / np.sqrt(sem_dim)
    means = semantics @ mix.T + 0.02 * rng.standard_normal((n_classes, dim))

    features = np.empty((total, dim))
    labels = np.empty(total, dtype=np.int64)
    for c in range(n_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        features[block] = means[c] + spread * rng.standard_normal((per_class, dim))
        labels[block] = c

    n_train = int(round(0.7 * per_class))
    n_train = max(1, min(per_class - 1, n_train))
    train, test_seen = [], []
    for c in range(n_seen):
        perm = c * per_class + rng.permutation(per_class)
        train.extend(perm[:n_train])
        test_seen.extend(perm[n_train:])
    test_unseen = np.arange(n_seen * per_class, total, dtype=np.int64)

    split = SplitSpec(
        np.sort(np.asarray(train, dtype=np.int64)),
        np.sort(np.asarray(test_seen, dtype=np.int64)),
        test_unseen,
    )
    ds = Dataset(
        features.astype(_F32),
        labels,
        semantics.astype(_F32),
        split,
    )
    return validate_dataset(ds)


def class_centroid(ds: Dataset, class_id: int) -> np.ndarray:
    """Arithmetic mean of a seen class's training feature vectors (float64)."""
    rows = ds.split.train_idx[ds.labels[ds.split.train_idx] == class_id]
    if rows.size == 0:
        raise ValidationError(f"class {class_id} has no training instances")
    return ds.features[rows].mean(axis=0, dtype=np.float64)
