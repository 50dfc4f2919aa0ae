"""Tests for the dataset container, GZB format, generator, and centroids."""

import struct

import numpy as np
import pytest

from gzseg.data import (
    GZB_MAGIC,
    Dataset,
    SplitSpec,
    class_centroid,
    generate_synthetic,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from gzseg.errors import FormatError, ValidationError

from helpers import FIXTURE_PARAMS, make_tiny_dataset


def gzb_bytes(features, labels, semantics, train, test_seen, test_unseen,
              magic=GZB_MAGIC, version=1):
    """Independent GZB encoder used as a format oracle for loader tests."""
    features = np.asarray(features, dtype="<f4")
    semantics = np.asarray(semantics, dtype="<f4")
    n, d = features.shape
    c, a = semantics.shape
    out = [magic, struct.pack("<IIIII", version, n, d, c, a),
           features.tobytes(),
           np.asarray(labels, dtype="<u4").tobytes(),
           semantics.tobytes()]
    for idx in (train, test_seen, test_unseen):
        idx = np.asarray(idx, dtype="<u4")
        out.append(struct.pack("<I", idx.size))
        out.append(idx.tobytes())
    return b"".join(out)


def tiny_gzb_bytes(**kwargs):
    ds = make_tiny_dataset()
    return gzb_bytes(ds.features, ds.labels, ds.semantics, ds.split.train_idx,
                     ds.split.test_seen_idx, ds.split.test_unseen_idx, **kwargs)


class TestGzbFormat:
    def test_well_formed_dims(self, tmp_path):
        path = tmp_path / "tiny.gzb"
        path.write_bytes(tiny_gzb_bytes())
        ds = load_dataset(path)
        assert (ds.num_instances, ds.feature_dim, ds.num_classes) == (6, 2, 3)
        assert ds.semantic_dim == 2

    def test_save_load_round_trip_values(self, tiny_ds, tmp_path):
        path = tmp_path / "t.gzb"
        save_dataset(tiny_ds, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.features, tiny_ds.features)
        np.testing.assert_array_equal(back.labels, tiny_ds.labels)
        np.testing.assert_array_equal(back.semantics, tiny_ds.semantics)
        np.testing.assert_array_equal(back.split.train_idx, tiny_ds.split.train_idx)
        np.testing.assert_array_equal(back.split.test_seen_idx,
                                      tiny_ds.split.test_seen_idx)
        np.testing.assert_array_equal(back.split.test_unseen_idx,
                                      tiny_ds.split.test_unseen_idx)

    def test_load_save_round_trip_bytes(self, tmp_path):
        p1 = tmp_path / "a.gzb"
        p2 = tmp_path / "b.gzb"
        p1.write_bytes(tiny_gzb_bytes())
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_synthetic_round_trip(self, synth_ds, tmp_path):
        path = tmp_path / "s.gzb"
        save_dataset(synth_ds, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.features, synth_ds.features)
        np.testing.assert_array_equal(back.labels, synth_ds.labels)
        save_dataset(back, tmp_path / "s2.gzb")
        assert path.read_bytes() == (tmp_path / "s2.gzb").read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.gzb"
        path.write_bytes(tiny_gzb_bytes(magic=b"NOPE"))
        with pytest.raises(FormatError, match="magic"):
            load_dataset(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.gzb"
        path.write_bytes(tiny_gzb_bytes(version=9))
        with pytest.raises(FormatError, match="version"):
            load_dataset(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "cut.gzb"
        path.write_bytes(tiny_gzb_bytes()[:-10])
        with pytest.raises(FormatError, match="truncated"):
            load_dataset(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "extra.gzb"
        path.write_bytes(tiny_gzb_bytes() + b"junk")
        with pytest.raises(FormatError, match="trailing"):
            load_dataset(path)

    def test_seen_unseen_overlap_rejected(self, tmp_path):
        ds = make_tiny_dataset()
        labels = ds.labels.copy()
        labels[4] = 0  # test_unseen instance now carries a seen label
        path = tmp_path / "overlap.gzb"
        path.write_bytes(gzb_bytes(ds.features, labels, ds.semantics,
                                   ds.split.train_idx, ds.split.test_seen_idx,
                                   ds.split.test_unseen_idx))
        with pytest.raises(ValidationError, match="overlap"):
            load_dataset(path)

    def test_save_refuses_nan(self, tiny_ds, tmp_path):
        feats = tiny_ds.features.copy()
        feats[0, 0] = np.nan
        bad = Dataset(feats, tiny_ds.labels, tiny_ds.semantics, tiny_ds.split)
        target = tmp_path / "nan.gzb"
        with pytest.raises(ValidationError, match="non-finite"):
            save_dataset(bad, target)
        assert not target.exists()

    def test_save_empty_path(self, tiny_ds):
        with pytest.raises(OSError):
            save_dataset(tiny_ds, "")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_dataset(tmp_path / "nowhere.gzb")


class TestValidation:
    def test_split_overlap_rejected(self, tiny_ds):
        split = SplitSpec(tiny_ds.split.train_idx,
                          np.array([0]),  # also a train index
                          tiny_ds.split.test_unseen_idx)
        bad = Dataset(tiny_ds.features, tiny_ds.labels, tiny_ds.semantics, split)
        with pytest.raises(ValidationError, match="overlap"):
            validate_dataset(bad)

    def test_empty_split_rejected(self, tiny_ds):
        split = SplitSpec(tiny_ds.split.train_idx, np.array([], dtype=np.int64),
                          tiny_ds.split.test_unseen_idx)
        bad = Dataset(tiny_ds.features, tiny_ds.labels, tiny_ds.semantics, split)
        with pytest.raises(ValidationError, match="nonempty"):
            validate_dataset(bad)

    def test_out_of_range_label_rejected(self, tiny_ds):
        labels = tiny_ds.labels.copy()
        labels[0] = 7
        bad = Dataset(tiny_ds.features, labels, tiny_ds.semantics, tiny_ds.split)
        with pytest.raises(ValidationError, match="label"):
            validate_dataset(bad)

    def test_test_seen_label_outside_seen_set(self, tiny_ds):
        labels = tiny_ds.labels.copy()
        labels[3] = 2  # test_seen instance labeled with the unseen class
        bad = Dataset(tiny_ds.features, labels, tiny_ds.semantics, tiny_ds.split)
        with pytest.raises(ValidationError):
            validate_dataset(bad)

    def test_arrays_frozen_after_validation(self, tiny_ds):
        assert not tiny_ds.features.flags.writeable
        assert not tiny_ds.labels.flags.writeable


class TestGenerator:
    def test_determinism(self):
        a = generate_synthetic(3, 2, 5, 3, 10, 0.5, seed=99)
        b = generate_synthetic(3, 2, 5, 3, 10, 0.5, seed=99)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.semantics, b.semantics)
        np.testing.assert_array_equal(a.split.train_idx, b.split.train_idx)

    def test_counts(self):
        ds = generate_synthetic(10, 5, 8, 4, 100, 0.3, seed=1)
        assert ds.num_instances == 1500
        assert ds.num_classes == 15
        assert ds.seen_classes.size == 10
        assert ds.unseen_classes.size == 5

    def test_split_sizes(self):
        ds = generate_synthetic(4, 2, 8, 4, 10, 0.3, seed=1)
        assert ds.split.train_idx.size == 4 * 7
        assert ds.split.test_seen_idx.size == 4 * 3
        assert ds.split.test_unseen_idx.size == 2 * 10

    def test_small_spread_collapses_clusters(self):
        ds = generate_synthetic(2, 1, 4, 2, 20, 1e-7, seed=5)
        for c in ds.seen_classes:
            centroid = class_centroid(ds, int(c))
            rows = ds.features[ds.labels == c].astype(np.float64)
            assert np.linalg.norm(rows - centroid, axis=1).max() < 1e-4

    def test_per_class_below_two_rejected(self):
        with pytest.raises(ValidationError, match="per_class"):
            generate_synthetic(2, 1, 4, 2, 1, 0.5, seed=0)

    def test_nonpositive_spread_rejected(self):
        with pytest.raises(ValidationError, match="spread"):
            generate_synthetic(2, 1, 4, 2, 5, 0.0, seed=0)

    def test_generated_always_valid(self):
        for seed in range(5):
            ds = generate_synthetic(3, 2, 6, 3, 7, 0.4, seed=seed)
            validate_dataset(ds)  # raises on any violation


class TestCentroid:
    def test_mean_of_two_points(self, tiny_ds):
        np.testing.assert_allclose(class_centroid(tiny_ds, 0), [2.0, 3.0])

    def test_single_instance_is_identity(self, tiny_ds):
        # class 1 has one train instance: row 2 = (10, 0)
        np.testing.assert_allclose(class_centroid(tiny_ds, 1), [10.0, 0.0])

    def test_unseen_class_rejected(self, tiny_ds):
        with pytest.raises(ValidationError, match="training instances"):
            class_centroid(tiny_ds, 2)

    def test_close_to_generating_mean(self):
        # Re-derive the class means by replaying the documented draw order.
        ds = generate_synthetic(n_seen=2, n_unseen=1, dim=8, sem_dim=4,
                                per_class=1000, spread=0.1, seed=314)
        rng = np.random.default_rng(314)
        semantics = rng.standard_normal((3, 4))
        mix = rng.standard_normal((8, 4)) / np.sqrt(4)
        means = semantics @ mix.T + 0.02 * rng.standard_normal((3, 8))
        for c in range(2):
            centroid = class_centroid(ds, c)
            assert np.abs(centroid - means[c]).max() < 0.02

    def test_permutation_invariance(self, tiny_ds):
        perm = np.array([1, 0, 2, 3, 5, 4])
        inv = np.argsort(perm)
        shuffled = Dataset(
            tiny_ds.features[perm],
            tiny_ds.labels[perm],
            tiny_ds.semantics,
            SplitSpec(inv[tiny_ds.split.train_idx],
                      inv[tiny_ds.split.test_seen_idx],
                      inv[tiny_ds.split.test_unseen_idx]),
        )
        validate_dataset(shuffled)
        np.testing.assert_allclose(class_centroid(shuffled, 0),
                                   class_centroid(tiny_ds, 0))


def test_fixture_matches_pinned_parameters(synth_ds):
    assert synth_ds.num_instances == \
        (FIXTURE_PARAMS["n_seen"] + FIXTURE_PARAMS["n_unseen"]) * FIXTURE_PARAMS["per_class"]
    assert synth_ds.feature_dim == FIXTURE_PARAMS["dim"]
