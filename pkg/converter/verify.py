#!/usr/bin/env python3
"""Verify a converted GZB file against its conversion manifest.

Usage:
    verify.py <file.gzb> <manifest>

Re-checks the checksum, compares every dimension recorded in the manifest
against the file header, and re-validates all dataset invariants from the
raw bytes.  The report names the first violated rule; the script exits 0
on PASS and 1 on FAIL.
"""

from __future__ import annotations

import hashlib
import struct
import sys
from pathlib import Path

import numpy as np

GZB_MAGIC = b"GZSB"
GZB_VERSION = 1


def read_manifest(path) -> dict:
    values = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            key, value = line.split(" = ", 1)
            values[key] = value
    return values


def parse_gzb(blob: bytes):
    """Decode a GZB v1 byte string; raises ValueError naming the defect."""
    if blob[:4] != GZB_MAGIC:
        raise ValueError("bad magic")
    version, n, d, c, a = struct.unpack_from("<IIIII", blob, 4)
    if version != GZB_VERSION:
        raise ValueError(f"unsupported version {version}")
    pos = 24
    def take(count, dtype):
        nonlocal pos
        width = np.dtype(dtype).itemsize * count
        if pos + width > len(blob):
            raise ValueError("file truncated")
        out = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
        pos += width
        return out
    features = take(n * d, "<f4").reshape(n, d)
    labels = take(n, "<u4").astype(np.int64)
    semantics = take(c * a, "<f4").reshape(c, a)
    splits = []
    for _ in range(3):
        count = int(take(1, "<u4")[0])
        splits.append(take(count, "<u4").astype(np.int64))
    if pos != len(blob):
        raise ValueError("trailing bytes")
    return features, labels, semantics, splits


def check_invariants(features, labels, semantics, splits) -> str | None:
    """Return the first violated dataset rule, or None if all hold."""
    n, d = features.shape
    c, a = semantics.shape
    if n < 1 or d < 1 or c < 2 or a < 1:
        return "dimensions out of range (need N,d,a >= 1 and C >= 2)"
    if not np.isfinite(features).all():
        return "features contain non-finite values"
    if not np.isfinite(semantics).all():
        return "semantics contain non-finite values"
    if labels.min() < 0 or labels.max() >= c:
        return "labels outside [0, C)"
    names = ("train", "test_seen", "test_unseen")
    for name, idx in zip(names, splits):
        if idx.size == 0:
            return f"{name} split is empty"
        if idx.min() < 0 or idx.max() >= n:
            return f"{name} indices outside [0, N)"
        if np.unique(idx).size != idx.size:
            return f"{name} indices contain duplicates"
    for i in range(3):
        for j in range(i + 1, 3):
            if np.intersect1d(splits[i], splits[j]).size:
                return f"{names[i]} and {names[j]} splits overlap"
    seen = np.unique(labels[splits[0]])
    unseen = np.unique(labels[splits[2]])
    if np.intersect1d(seen, unseen).size:
        return "seen and unseen class sets overlap"
    if not np.isin(labels[splits[1]], seen).all():
        return "test_seen labels outside the seen class set"
    return None


def verify(gzb_path, manifest_path) -> tuple[bool, str]:
    manifest = read_manifest(manifest_path)
    blob = Path(gzb_path).read_bytes()

    digest = hashlib.sha256(blob).hexdigest()
    if "sha256" in manifest and digest != manifest["sha256"]:
        return False, f"checksum mismatch: file {digest[:12]}... vs manifest " \
                      f"{manifest['sha256'][:12]}..."
    try:
        features, labels, semantics, splits = parse_gzb(blob)
    except ValueError as exc:
        return False, f"structure: {exc}"

    dims = {
        "n_instances": features.shape[0],
        "feature_dim": features.shape[1],
        "n_classes": semantics.shape[0],
        "semantic_dim": semantics.shape[1],
        "n_train": splits[0].size,
        "n_test_seen": splits[1].size,
        "n_test_unseen": splits[2].size,
    }
    for key, actual in dims.items():
        if key in manifest and int(manifest[key]) != actual:
            return False, f"manifest field '{key}' is {manifest[key]}, " \
                          f"file has {actual}"

    rule = check_invariants(features, labels, semantics, splits)
    if rule is not None:
        return False, f"invariant: {rule}"
    return True, f"sha256 {digest[:12]}..., all dimensions and invariants hold"


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    if len(args) != 2:
        print(__doc__, file=sys.stderr)
        return 1
    try:
        ok, detail = verify(args[0], args[1])
    except OSError as exc:
        print(f"FAIL: {exc}")
        return 1
    print(f"{'PASS' if ok else 'FAIL'}: {detail}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
