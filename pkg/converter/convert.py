#!/usr/bin/env python3
"""Convert public precomputed-feature releases into GZB v1 dataset files.

Usage:
    convert.py <dataset> <res101.mat> <att_splits.mat> [semantics.mat] <out.gzb>

The feature file must hold ``features`` (d x N) and 1-based ``labels``
(N x 1); the split file must hold ``att`` (a x C) plus 1-based
``trainval_loc``, ``test_seen_loc``, and ``test_unseen_loc`` index arrays.
An optional third source replaces the semantic matrix (datasets whose
class embeddings ship separately, e.g. sentence embeddings for the flower
set).  A manifest with checksum and dimensions is written next to the
output as ``<out>.manifest``.

Exit codes: 0 success, 1 usage error, 2 conversion/data error.
"""

from __future__ import annotations

import hashlib
import struct
import sys
from pathlib import Path

import numpy as np
from scipy import io as sio

GZB_MAGIC = b"GZSB"
GZB_VERSION = 1


class ConversionError(Exception):
    """Raised when the source arrays are missing, malformed, or inconsistent."""


def _require(mat: dict, key: str, path) -> np.ndarray:
    if key not in mat:
        raise ConversionError(f"{path}: missing array '{key}'")
    return np.asarray(mat[key])


def _indices(mat: dict, key: str, path, n_instances: int) -> np.ndarray:
    """1-based index column -> sorted 0-based int64 array, range checked."""
    raw = np.squeeze(_require(mat, key, path)).astype(np.int64)
    if raw.ndim != 1 or raw.size == 0:
        raise ConversionError(f"{path}: '{key}' must be a nonempty vector")
    zero_based = raw - 1
    if zero_based.min() < 0 or zero_based.max() >= n_instances:
        raise ConversionError(
            f"{path}: '{key}' has indices outside [1, {n_instances}]"
        )
    return np.sort(zero_based)


def load_sources(feature_path, split_path, semantics_path=None):
    """Read and reshape the published arrays into GZB orientation."""
    feats_mat = sio.loadmat(feature_path)
    split_mat = sio.loadmat(split_path)

    features = _require(feats_mat, "features", feature_path)
    if features.ndim != 2:
        raise ConversionError(f"{feature_path}: 'features' must be 2-D")
    features = features.T.astype("<f4")  # published layout is d x N
    n_instances = features.shape[0]

    labels = np.squeeze(_require(feats_mat, "labels", feature_path)).astype(np.int64)
    if labels.shape != (n_instances,):
        raise ConversionError(
            f"{feature_path}: 'labels' length {labels.size} does not match "
            f"{n_instances} instances"
        )

    if semantics_path is not None:
        sem_mat = sio.loadmat(semantics_path)
        semantics = _require(sem_mat, "att", semantics_path)
    else:
        semantics = _require(split_mat, "att", split_path)
    if semantics.ndim != 2:
        raise ConversionError("semantic matrix must be 2-D")
    semantics = semantics.T.astype("<f4")  # published layout is a x C
    n_classes = semantics.shape[0]

    labels -= 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ConversionError(
            f"labels must lie in [1, {n_classes}] before conversion"
        )

    splits = tuple(
        _indices(split_mat, key, split_path, n_instances)
        for key in ("trainval_loc", "test_seen_loc", "test_unseen_loc")
    )
    return features, labels, semantics, splits


def encode_gzb(features, labels, semantics, splits) -> bytes:
    n, d = features.shape
    c, a = semantics.shape
    parts = [
        GZB_MAGIC,
        struct.pack("<IIIII", GZB_VERSION, n, d, c, a),
        np.ascontiguousarray(features, dtype="<f4").tobytes(),
        np.ascontiguousarray(labels, dtype="<u4").tobytes(),
        np.ascontiguousarray(semantics, dtype="<f4").tobytes(),
    ]
    for idx in splits:
        parts.append(struct.pack("<I", idx.size))
        parts.append(np.ascontiguousarray(idx, dtype="<u4").tobytes())
    return b"".join(parts)


def manifest_lines(dataset, sources, out_path, digest, features, semantics,
                   splits) -> list[str]:
    lines = [f"dataset = {dataset}"]
    for i, src in enumerate(sources):
        lines.append(f"source_{i} = {src}")
    lines += [
        f"gzb = {out_path}",
        f"sha256 = {digest}",
        f"n_instances = {features.shape[0]}",
        f"feature_dim = {features.shape[1]}",
        f"n_classes = {semantics.shape[0]}",
        f"semantic_dim = {semantics.shape[1]}",
        f"n_train = {splits[0].size}",
        f"n_test_seen = {splits[1].size}",
        f"n_test_unseen = {splits[2].size}",
    ]
    return lines


def convert(dataset: str, sources: list, out_path) -> dict:
    """Convert source files to GZB, write the manifest, return manifest values."""
    if len(sources) == 2:
        features, labels, semantics, splits = load_sources(*sources)
    elif len(sources) == 3:
        features, labels, semantics, splits = load_sources(
            sources[0], sources[1], sources[2]
        )
    else:
        raise ConversionError("expected 2 or 3 source files")

    blob = encode_gzb(features, labels, semantics, splits)
    digest = hashlib.sha256(blob).hexdigest()
    out_path = Path(out_path)
    out_path.write_bytes(blob)
    lines = manifest_lines(dataset, sources, out_path, digest, features,
                           semantics, splits)
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest")
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return dict(line.split(" = ", 1) for line in lines)


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    if len(args) < 4 or len(args) > 5:
        print(__doc__, file=sys.stderr)
        return 1
    dataset, *sources, out = args
    try:
        info = convert(dataset, sources, out)
    except (ConversionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {info['gzb']}: N={info['n_instances']} "
          f"d={info['feature_dim']} C={info['n_classes']} "
          f"a={info['semantic_dim']} sha256={info['sha256'][:12]}...")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
