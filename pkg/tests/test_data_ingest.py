"""Tensor container, manifest loading, and synthetic generator tests."""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np
import pytest

import filterlens as fl
from filterlens.data_ingest import (
    SYNTH_GRID,
    SYNTH_IMAGE_PX,
    TensorFormatError,
    write_dataset,
)


class TestTensorFormat:
    def test_documented_byte_layout(self):
        data = fl.write_tensor(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
        expected = (
            b"FTNS"
            + bytes((1, 1, 2))
            + struct.pack("<II", 2, 2)
            + struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
        )
        assert data == expected
        decoded = fl.read_tensor(data)
        assert decoded.shape == (2, 2)
        np.testing.assert_array_equal(decoded, [[1.0, 2.0], [3.0, 4.0]])

    def test_roundtrip_random_tensors(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            ndim = int(rng.integers(1, 5))
            shape = tuple(int(rng.integers(1, 7)) for _ in range(ndim))
            values = rng.normal(size=shape).astype(np.float32)
            blob = fl.write_tensor(values)
            decoded = fl.read_tensor(blob)
            assert decoded.dtype == np.float32
            np.testing.assert_array_equal(decoded, values)
            assert fl.write_tensor(decoded) == blob  # bit-exact both ways

    def test_truncated_payload(self):
        data = fl.write_tensor(np.ones((2, 2), dtype=np.float32))
        with pytest.raises(TensorFormatError, match="truncated payload"):
            fl.read_tensor(data[:-1])

    def test_trailing_data(self):
        data = fl.write_tensor(np.ones(3, dtype=np.float32))
        with pytest.raises(TensorFormatError, match="trailing data"):
            fl.read_tensor(data + b"\x00")

    def test_bad_magic(self):
        data = fl.write_tensor(np.ones(2, dtype=np.float32))
        with pytest.raises(TensorFormatError, match="bad magic"):
            fl.read_tensor(b"XXXX" + data[4:])

    def test_bad_version(self):
        data = bytearray(fl.write_tensor(np.ones(2, dtype=np.float32)))
        data[4] = 9
        with pytest.raises(TensorFormatError, match="version"):
            fl.read_tensor(bytes(data))

    def test_bad_dtype(self):
        data = bytearray(fl.write_tensor(np.ones(2, dtype=np.float32)))
        data[5] = 7
        with pytest.raises(TensorFormatError, match="dtype"):
            fl.read_tensor(bytes(data))

    def test_nan_payload_rejected_on_read(self):
        header = b"FTNS" + bytes((1, 1, 1)) + struct.pack("<I", 1)
        blob = header + struct.pack("<f", float("nan"))
        with pytest.raises(TensorFormatError, match="non-finite"):
            fl.read_tensor(blob)

    def test_nan_refused_on_write(self):
        with pytest.raises(TensorFormatError, match="non-finite"):
            fl.write_tensor(np.array([1.0, float("nan")]))

    def test_zero_sized_dim_refused(self):
        with pytest.raises(TensorFormatError):
            fl.write_tensor(np.zeros((0, 3), dtype=np.float32))


def _minimal_manifest(tmp_path, pooled_values=(0.5, 1.5)):
    fl.write_tensor_file(np.ones((1, 2), dtype=np.float32), tmp_path / "weights.ftns")
    fl.write_tensor_file(
        np.array(pooled_values, dtype=np.float32), tmp_path / "img.pooled.ftns"
    )
    manifest = {
        "version": 1,
        "n_filters": 2,
        "class_names": ["only"],
        "weights_file": "weights.ftns",
        "images": [
            {
                "id": "img0",
                "pooled_file": "img.pooled.ftns",
                "image_size": [64, 48],
                "true_class": 0,
            }
        ],
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path, manifest


class TestLoadDataset:
    def test_minimal_manifest(self, tmp_path):
        path, _ = _minimal_manifest(tmp_path)
        dataset = fl.load_dataset(path)
        assert len(dataset.images) == 1
        assert dataset.n_filters == 2
        assert dataset.image("img0").image_size == (64, 48)

    def test_pooled_length_mismatch_names_image(self, tmp_path):
        path, manifest = _minimal_manifest(tmp_path)
        manifest["n_filters"] = 3
        path.write_text(json.dumps(manifest))
        with pytest.raises(fl.DatasetValidationError, match="img0"):
            fl.load_dataset(path)

    def test_negative_pooled_rejected(self, tmp_path):
        path, _ = _minimal_manifest(tmp_path, pooled_values=(-0.5, 1.0))
        with pytest.raises(fl.DatasetValidationError, match="negative pooled"):
            fl.load_dataset(path)

    def test_duplicate_image_id(self, tmp_path):
        path, manifest = _minimal_manifest(tmp_path)
        manifest["images"].append(dict(manifest["images"][0]))
        path.write_text(json.dumps(manifest))
        with pytest.raises(fl.DatasetValidationError, match="duplicate image id"):
            fl.load_dataset(path)

    def test_out_of_range_class(self, tmp_path):
        path, manifest = _minimal_manifest(tmp_path)
        manifest["images"][0]["true_class"] = 5
        path.write_text(json.dumps(manifest))
        with pytest.raises(fl.DatasetValidationError, match="true_class"):
            fl.load_dataset(path)

    def test_spatial_pooled_inconsistency(self, tmp_path):
        path, manifest = _minimal_manifest(tmp_path)
        spatial = np.full((2, 3, 3), 0.9, dtype=np.float32)  # means != pooled
        fl.write_tensor_file(spatial, tmp_path / "img.spatial.ftns")
        manifest["images"][0]["spatial_file"] = "img.spatial.ftns"
        path.write_text(json.dumps(manifest))
        with pytest.raises(fl.DatasetValidationError, match="spatial mean"):
            fl.load_dataset(path)

    def test_missing_tensor_file_is_io_error(self, tmp_path):
        path, manifest = _minimal_manifest(tmp_path)
        manifest["images"][0]["pooled_file"] = "nope.ftns"
        path.write_text(json.dumps(manifest))
        with pytest.raises(FileNotFoundError):
            fl.load_dataset(path)

    def test_bad_manifest_version(self, tmp_path):
        path, manifest = _minimal_manifest(tmp_path)
        manifest["version"] = 42
        path.write_text(json.dumps(manifest))
        with pytest.raises(fl.DatasetValidationError, match="version"):
            fl.load_dataset(path)


class TestGenerateSynthetic:
    def test_fixed_seed_is_byte_identical_on_disk(self, tmp_path):
        digests = []
        for name in ("run1", "run2"):
            dataset, docs, _ = fl.generate_synthetic(4, 4, 12, 2, seed=21)
            out = tmp_path / name
            write_dataset(dataset, docs, out)
            digest = hashlib.sha256()
            for file in sorted(out.rglob("*")):
                if file.is_file():
                    digest.update(file.relative_to(out).as_posix().encode())
                    digest.update(file.read_bytes())
            digests.append(digest.hexdigest())
        assert digests[0] == digests[1]

    def test_hand_checkable_two_filter_dataset(self):
        dataset, docs, planted = fl.generate_synthetic(2, 2, 4, 2, seed=0)
        # classes alternate, no extra attributes exist, so the attribute
        # sets are {0}, {1}, {0}, {1}: each attribute in exactly 2 disjoint images
        assert [r.true_class for r in dataset.images] == [0, 1, 0, 1]
        for record, doc in zip(dataset.images, docs):
            expected = planted[record.true_class]
            assert doc.captions == [
                f"a bird with {expected.adjective} {expected.noun}"
            ]
            high = record.pooled > 0.5
            assert high.sum() == 1 and bool(high[record.true_class])
            low = record.pooled[~high]
            np.testing.assert_allclose(low, 0.1, atol=1e-6)
            assert record.predicted_class == record.true_class

    def test_pooled_noise_band(self, small_planted):
        for record in small_planted.dataset.images:
            high = record.pooled[record.pooled > 0.5]
            assert np.all(high >= 1.0) and np.all(high <= 1.05 + 1e-6)

    def test_spatial_mean_matches_pooled(self, small_planted):
        record = small_planted.dataset.images[0]
        means = record.spatial.astype(np.float64).mean(axis=(1, 2))
        np.testing.assert_allclose(means, record.pooled, atol=1e-4)

    def test_bump_peak_sits_at_keypoint_cell(self, small_planted):
        record = small_planted.dataset.images[0]
        kp_by_name = {kp.name: kp for kp in record.keypoints}
        for k, attribute in small_planted.planted.items():
            if record.pooled[k] < 0.5:
                continue
            grid = record.spatial[k]
            i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
            kp = kp_by_name[attribute.noun]
            assert kp.x == pytest.approx((j + 0.5) * SYNTH_IMAGE_PX / SYNTH_GRID)
            assert kp.y == pytest.approx((i + 0.5) * SYNTH_IMAGE_PX / SYNTH_GRID)

    def test_generated_dataset_validates_clean_after_roundtrip(self, tmp_path):
        dataset, docs, _ = fl.generate_synthetic(8, 8, 500, 4, seed=13)
        manifest_path = write_dataset(dataset, docs, tmp_path / "synth")
        loaded = fl.load_dataset(manifest_path)
        assert fl.validate_dataset(loaded) == []
        assert len(loaded.images) == 500
        captions = fl.load_captions(loaded)
        assert len(captions) == 500

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            fl.generate_synthetic(3, 4, 10, 2, seed=0)
        with pytest.raises(ValueError):
            fl.generate_synthetic(4, 4, 10, 5, seed=0)
        with pytest.raises(ValueError):
            fl.generate_synthetic(4, 4, 0, 2, seed=0)
        with pytest.raises(ValueError):
            fl.generate_synthetic(999, 999, 5, 2, seed=0)


class TestKeypointMapping:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "map.tsv"
        path.write_text("# comment\nbeak\tbeak_tip\ncrown\thead_top\n")
        mapping = fl.load_keypoint_mapping(path)
        assert mapping == {"beak": "beak_tip", "crown": "head_top"}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "map.tsv"
        path.write_text("beak beak_tip\n")
        with pytest.raises(ValueError, match="expected noun<TAB>keypoint"):
            fl.load_keypoint_mapping(path)
