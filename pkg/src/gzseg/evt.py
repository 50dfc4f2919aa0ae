"""Per-class extreme-value models over centroid distances.

For each seen class we take the largest within-class distances to the
class centroid and fit a Weibull model to them, in the style of
meta-recognition toolkits: shift the tail by a location just below its
minimum, then run a two-parameter maximum-likelihood fit on the positive
exceedances.  The fitted CDF turns a test distance into a probability of
lying outside the class.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset, class_centroid
from .errors import FormatError, NumericalError, ValidationError

GZEV_MAGIC = b"GZEV"
GZEV_VERSION = 1

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")

SHAPE_BRACKET = (1e-3, 1e3)
SHAPE_TOL = 1e-9
SHAPE_MAX_ITER = 200


@dataclass(frozen=True)
class ClassEvtModel:
    """Fitted tail model for one class: centroid plus Weibull (location, scale, shape)."""

    class_id: int
    centroid: np.ndarray
    location: float
    scale: float
    shape: float
    tail_size: int

    def __post_init__(self):
        if not self.scale > 0 or not self.shape > 0:
            raise ValidationError("Weibull scale and shape must be positive")
        if self.location < 0:
            raise ValidationError("Weibull location must be nonnegative")
        if self.tail_size < 2:
            raise ValidationError("tail_size must be >= 2")


@dataclass(frozen=True)
class EvtThresholds:
    """Out-of-class / in-class cutoffs on the tail CDF."""

    alpha_out: float = 0.9
    alpha_in: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha_in <= self.alpha_out < 1:
            raise ValidationError("need 0 < alpha_in <= alpha_out < 1")


def shape_equation(k: float, tail_shifted: np.ndarray) -> float:
    """Residual of the Weibull shape MLE stationarity condition at shape ``k``."""
    w = np.asarray(tail_shifted, dtype=np.float64)
    u = w / w.max()
    log_u = np.log(u)
    uk = u ** k
    return float((uk * log_u).sum() / uk.sum() - 1.0 / k - log_u.mean())


def _solve_shape(log_u: np.ndarray, u: np.ndarray) -> float:
    """Newton iteration with a bisection safeguard for the shape MLE root.

    The stationarity function is strictly increasing in the shape, so a sign
    change over the fixed bracket guarantees a unique root.  Values are
    scaled by the tail maximum beforehand (u = w / max(w)), which cancels
    from the equation and keeps powers in [0, 1].
    """
    mean_log_u = log_u.mean()

    def g_and_slope(k: float) -> tuple[float, float]:
        uk = u ** k
        s0 = uk.sum()
        s1 = (uk * log_u).sum()
        s2 = (uk * log_u * log_u).sum()
        g = s1 / s0 - 1.0 / k - mean_log_u
        slope = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k)
        return g, slope

    lo, hi = SHAPE_BRACKET
    g_lo, _ = g_and_slope(lo)
    g_hi, _ = g_and_slope(hi)
    if not (g_lo < 0.0 < g_hi):
        raise NumericalError(
            "shape MLE has no root in "
            f"[{lo:g}, {hi:g}]: g(lo)={g_lo:.6g}, g(hi)={g_hi:.6g}"
        )

    k = 1.0
    for _ in range(SHAPE_MAX_ITER):
        g, slope = g_and_slope(k)
        if abs(g) < SHAPE_TOL:
            return k
        if g < 0.0:
            lo = k
        else:
            hi = k
        step = k - g / slope
        k = step if lo < step < hi else 0.5 * (lo + hi)
    raise NumericalError(
        f"shape MLE did not converge in {SHAPE_MAX_ITER} iterations; "
        f"bracket [{lo:.6g}, {hi:.6g}], residual {g:.3g}"
    )


def fit_weibull_tail(distances, tail_size: int) -> tuple[float, float, float]:
    """Fit (location, scale, shape) to the ``tail_size`` largest distances.

    The location is pinned just below the smallest tail value so that every
    shifted exceedance is strictly positive; scale and shape then come from
    maximum likelihood on the shifted tail.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if tail_size < 2:
        raise ValidationError("tail_size must be >= 2")
    if d.size < tail_size:
        raise ValidationError(f"need at least {tail_size} distances, got {d.size}")
    if not np.isfinite(d).all() or (d < 0).any():
        raise ValidationError("distances must be finite and nonnegative")

    tail = np.sort(d)[-tail_size:]
    if tail[0] == tail[-1]:
        raise ValidationError("degenerate tail: all tail values are equal")
    location = tail[0] * (1.0 - 1e-6)
    shifted = tail - location
    if shifted.min() <= 0.0:
        raise ValidationError("degenerate tail: smallest tail value is zero")

    top = shifted.max()
    u = shifted / top
    shape = _solve_shape(np.log(u), u)
    scale = top * float(np.mean(u ** shape)) ** (1.0 / shape)
    return float(location), scale, shape


def weibull_cdf(model: ClassEvtModel, d):
    """Tail CDF at distance d: 0 at or below the location, then 1 - exp(-((d-v)/scale)^shape)."""
    d = np.asarray(d, dtype=np.float64)
    z = np.maximum((d - model.location) / model.scale, 0.0)
    p = -np.expm1(-(z ** model.shape))
    return float(p) if p.ndim == 0 else p


def out_of_class(model: ClassEvtModel, d, alpha_out: float) -> bool:
    """True when the tail CDF exceeds the out-of-class cutoff."""
    return bool(weibull_cdf(model, d) > alpha_out)


def in_class(model: ClassEvtModel, d, alpha_in: float) -> bool:
    """True when the tail CDF is below the in-class cutoff."""
    return bool(weibull_cdf(model, d) < alpha_in)


def _normalized_rows(feats: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    return feats / np.where(norms == 0.0, 1.0, norms)


def fit_all_classes(ds: Dataset, tail_size: int, normalize: bool = False
                    ) -> dict[int, ClassEvtModel]:
    """Fit one tail model per seen class from training-split centroid distances.

    Classes with fewer training instances than ``tail_size`` use all their
    distances (at least 2).  With ``normalize`` the features are
    L2-normalized before centroids and distances are computed.
    """
    if tail_size < 2:
        raise ValidationError("tail_size must be >= 2")
    models: dict[int, ClassEvtModel] = {}
    train_idx = ds.split.train_idx
    train_labels = ds.labels[train_idx]
    for class_id in ds.seen_classes:
        rows = ds.features[train_idx[train_labels == class_id]].astype(np.float64)
        if rows.shape[0] < 2:
            raise ValidationError(
                f"class {class_id} has fewer than 2 training instances"
            )
        if normalize:
            rows = _normalized_rows(rows)
            centroid = rows.mean(axis=0)
        else:
            centroid = class_centroid(ds, int(class_id))
        dists = np.linalg.norm(rows - centroid, axis=1)
        n = min(tail_size, dists.size)
        location, scale, shape = fit_weibull_tail(dists, n)
        models[int(class_id)] = ClassEvtModel(
            int(class_id), centroid, location, scale, shape, n
        )
    return models


def save_evt_models(models: dict[int, ClassEvtModel], path) -> None:
    """Write the GZEV checkpoint: per class id, centroid, (v, scale, shape), tail size."""
    items = [models[k] for k in sorted(models)]
    if not items:
        raise ValidationError("no models to save")
    d = items[0].centroid.size
    parts = [GZEV_MAGIC, struct.pack("<III", GZEV_VERSION, len(items), d)]
    for m in items:
        parts.append(struct.pack("<I", m.class_id))
        parts.append(np.ascontiguousarray(m.centroid, dtype=_F32).tobytes())
        parts.append(struct.pack("<dddI", m.location, m.scale, m.shape, m.tail_size))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_evt_models(path) -> dict[int, ClassEvtModel]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != GZEV_MAGIC:
        raise FormatError(f"bad magic, expected {GZEV_MAGIC!r}")
    version, count, d = struct.unpack_from("<III", buf, 4)
    if version != GZEV_VERSION:
        raise FormatError(f"unsupported version {version}")
    per = 4 + 4 * d + 24 + 4
    if len(buf) != 16 + count * per:
        raise FormatError("model section has wrong length")
    models: dict[int, ClassEvtModel] = {}
    pos = 16
    for _ in range(count):
        class_id = struct.unpack_from("<I", buf, pos)[0]
        pos += 4
        centroid = np.frombuffer(buf, dtype=_F32, count=d, offset=pos).astype(np.float64)
        pos += 4 * d
        location, scale, shape, tail = struct.unpack_from("<dddI", buf, pos)
        pos += 28
        models[class_id] = ClassEvtModel(class_id, centroid, location, scale, shape, tail)
    return models
