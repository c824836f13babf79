"""Feature-bundle container: format layout, round-trips, validation,
corruption detection, and the synthetic generator."""

import dataclasses
import json
import struct
import zlib

import numpy as np
import pytest

from detrank.bundle import (
    FLAG_GRADIENTS,
    FLAG_LEVELS,
    FORMAT_VERSION,
    MAGIC,
    FeatureBundle,
    expected_file_size,
    manifest_path,
    read_bundle,
    synth_bundle,
    validate_bundle,
    write_bundle,
)
from detrank.errors import (
    BundleCorruptionError,
    BundleFormatError,
    BundleValidationError,
)


def _layout_size(m: int, d: int, has_levels: bool, p: int) -> int:
    """Independent byte-count oracle built from the format description:
    32-byte header, f32 features/boxes/image dims, u32 labels, optional
    u8 levels and f32 gradients, trailing u32 checksum."""
    size = 32
    size += m * d * 4  # features
    size += m * 4 * 4  # boxes
    size += m * 4  # labels
    size += m * 2 * 4  # image dims
    if has_levels:
        size += m
    size += m * p * 4
    size += 4  # crc32
    return size


def _make_bundle(
    m=3, d=8, k=2, with_levels=False, with_gradients=False, seed=0
) -> FeatureBundle:
    rng = np.random.default_rng(seed)
    boxes = np.zeros((m, 4))
    boxes[:, 0] = rng.uniform(0, 100, m)
    boxes[:, 1] = rng.uniform(0, 100, m)
    boxes[:, 2] = boxes[:, 0] + rng.uniform(5, 50, m)
    boxes[:, 3] = boxes[:, 1] + rng.uniform(5, 50, m)
    return FeatureBundle(
        model_name="unit-model",
        dataset_name="unit-data",
        features=rng.normal(size=(m, d)),
        boxes=boxes,
        labels=rng.integers(0, k, size=m),
        image_dims=np.full((m, 2), 640.0),
        num_classes=k,
        levels=rng.integers(2, 6, size=m) if with_levels else None,
        gradients=rng.normal(size=(m, 5)) if with_gradients else None,
    )


class TestRoundTrip:
    def test_basic_round_trip(self, tmp_path):
        """M=3, D=8, K=2 bundle survives write/read bit-exactly."""
        bundle = _make_bundle()
        path = tmp_path / "a.dtfb"
        write_bundle(bundle, path)
        back = read_bundle(path)
        assert back.model_name == bundle.model_name
        assert back.dataset_name == bundle.dataset_name
        assert back.num_classes == 2
        np.testing.assert_array_equal(back.features, bundle.features)
        np.testing.assert_array_equal(back.boxes, bundle.boxes)
        np.testing.assert_array_equal(back.labels, bundle.labels)
        np.testing.assert_array_equal(back.image_dims, bundle.image_dims)
        assert back.levels is None and back.gradients is None

    @pytest.mark.parametrize("with_levels", [False, True])
    @pytest.mark.parametrize("with_gradients", [False, True])
    def test_optional_sections(self, tmp_path, with_levels, with_gradients):
        bundle = _make_bundle(
            with_levels=with_levels, with_gradients=with_gradients, seed=3
        )
        path = tmp_path / "b.dtfb"
        write_bundle(bundle, path)
        back = read_bundle(path)
        if with_levels:
            np.testing.assert_array_equal(back.levels, bundle.levels)
        else:
            assert back.levels is None
        if with_gradients:
            np.testing.assert_array_equal(back.gradients, bundle.gradients)
        else:
            assert back.gradients is None

    def test_round_trip_many_random_shapes(self, tmp_path):
        rng = np.random.default_rng(42)
        for i in range(15):
            m = int(rng.integers(1, 40))
            d = int(rng.integers(1, 20))
            k = int(rng.integers(1, 6))
            bundle = _make_bundle(
                m=m,
                d=d,
                k=k,
                with_levels=bool(rng.integers(0, 2)),
                with_gradients=bool(rng.integers(0, 2)),
                seed=100 + i,
            )
            path = tmp_path / f"r{i}.dtfb"
            write_bundle(bundle, path)
            back = read_bundle(path)
            np.testing.assert_array_equal(back.features, bundle.features)
            np.testing.assert_array_equal(back.boxes, bundle.boxes)


class TestFormatLayout:
    def test_minimal_file_size_matches_layout(self, tmp_path):
        """M=1 bundle's on-disk size equals the layout arithmetic."""
        bundle = _make_bundle(m=1, d=4, k=1)
        path = tmp_path / "m1.dtfb"
        write_bundle(bundle, path)
        assert path.stat().st_size == _layout_size(1, 4, False, 0)
        assert path.stat().st_size == expected_file_size(1, 4)

    def test_sizes_with_optional_sections(self, tmp_path):
        bundle = _make_bundle(m=6, d=3, with_levels=True, with_gradients=True)
        path = tmp_path / "opt.dtfb"
        write_bundle(bundle, path)
        assert path.stat().st_size == _layout_size(6, 3, True, 5)
        assert path.stat().st_size == expected_file_size(
            6, 3, has_levels=True, gradient_dim=5
        )

    def test_header_fields(self, tmp_path):
        """Magic, version, flag bits, and dims live where the format says."""
        bundle = _make_bundle(m=5, d=2, k=3, with_levels=True)
        path = tmp_path / "h.dtfb"
        write_bundle(bundle, path)
        raw = path.read_bytes()
        magic, version, flags, m, d, k, p, levels = struct.unpack(
            "<4sHHQIIIB", raw[:29]
        )
        assert magic == MAGIC == b"DTFB"
        assert version == FORMAT_VERSION == 1
        assert flags == FLAG_LEVELS
        assert (m, d, k, p) == (5, 2, 3, 0)
        assert levels == len(np.unique(bundle.levels))

    def test_gradient_flag_bit(self, tmp_path):
        bundle = _make_bundle(with_gradients=True)
        path = tmp_path / "g.dtfb"
        write_bundle(bundle, path)
        flags = struct.unpack("<H", path.read_bytes()[6:8])[0]
        assert flags == FLAG_GRADIENTS

    def test_checksum_is_crc32_of_preceding_bytes(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "c.dtfb"
        write_bundle(bundle, path)
        raw = path.read_bytes()
        stored = struct.unpack("<I", raw[-4:])[0]
        assert stored == zlib.crc32(raw[:-4])

    def test_manifest_sidecar(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "man.dtfb"
        write_bundle(bundle, path)
        sidecar = manifest_path(path)
        assert sidecar.name == "man.manifest.json"
        data = json.loads(sidecar.read_text())
        assert data["model_name"] == "unit-model"
        assert data["format_version"] == 1
        raw = path.read_bytes()
        assert data["checksum"] == f"{zlib.crc32(raw[:-4]):08x}"


class TestErrors:
    def test_corrupted_payload_detected(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "x.dtfb"
        write_bundle(bundle, path)
        raw = bytearray(path.read_bytes())
        raw[40] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleCorruptionError):
            read_bundle(path)

    def test_truncated_file(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "t.dtfb"
        write_bundle(bundle, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(BundleFormatError):
            read_bundle(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dtfb"
        path.write_bytes(b"NOPE" + b"\x00" * 60)
        with pytest.raises(BundleFormatError):
            read_bundle(path)

    def test_bad_version(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "v.dtfb"
        write_bundle(bundle, path)
        raw = bytearray(path.read_bytes())
        raw[4:6] = struct.pack("<H", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleFormatError):
            read_bundle(path)

    def test_label_out_of_range(self):
        """Label 5 with K=2 names the offending row."""
        bundle = _make_bundle(m=3, k=2)
        bad = dataclasses.replace(bundle, labels=np.array([0, 1, 5], dtype=np.uint32))
        with pytest.raises(BundleValidationError, match="label out of range at row 2"):
            validate_bundle(bad)

    def test_flipped_corners_rejected(self):
        bundle = _make_bundle(m=2)
        boxes = bundle.boxes.copy()
        boxes[1, [0, 2]] = boxes[1, [2, 0]]
        bad = dataclasses.replace(bundle, boxes=boxes)
        with pytest.raises(BundleValidationError, match="row 1"):
            validate_bundle(bad)

    def test_nonfinite_rejected(self):
        bundle = _make_bundle(m=2)
        feats = bundle.features.copy()
        feats[0, 0] = np.nan
        bad = dataclasses.replace(bundle, features=feats)
        with pytest.raises(BundleValidationError, match="row 0"):
            validate_bundle(bad)

    def test_write_rejects_invalid_without_creating_file(self, tmp_path):
        bundle = _make_bundle(m=3, k=2)
        bad = dataclasses.replace(bundle, labels=np.array([0, 1, 9], dtype=np.uint32))
        path = tmp_path / "never.dtfb"
        with pytest.raises(BundleValidationError):
            write_bundle(bad, path)
        assert not path.exists()
        assert list(tmp_path.iterdir()) == []

    def test_manifest_checksum_cross_check(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "mm.dtfb"
        write_bundle(bundle, path)
        sidecar = manifest_path(path)
        data = json.loads(sidecar.read_text())
        data["checksum"] = "deadbeef"
        sidecar.write_text(json.dumps(data))
        with pytest.raises(BundleCorruptionError):
            read_bundle(path)

    def test_missing_manifest_falls_back_to_stem(self, tmp_path):
        bundle = _make_bundle()
        path = tmp_path / "standalone.dtfb"
        write_bundle(bundle, path)
        manifest_path(path).unlink()
        back = read_bundle(path)
        assert back.model_name == "standalone"


class TestSynth:
    def test_deterministic_bytes(self, tmp_path):
        """Same arguments, same seed: byte-identical files."""
        a = synth_bundle(50, 8, 2, 0.7, seed=7)
        b = synth_bundle(50, 8, 2, 0.7, seed=7)
        pa, pb = tmp_path / "a.dtfb", tmp_path / "b.dtfb"
        write_bundle(a, pa)
        write_bundle(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seed_differs(self):
        a = synth_bundle(50, 8, 2, 0.7, seed=7)
        b = synth_bundle(50, 8, 2, 0.7, seed=8)
        assert not np.array_equal(a.features, b.features)

    def test_planted_linear_signal_at_full_quality(self):
        """quality=1.0: least squares recovers the box targets to 1e-6."""
        from detrank.scores import ScoreConfig, normalized_box_targets

        bundle = synth_bundle(100, 16, 3, 1.0, seed=7)
        f = bundle.features.astype(np.float64)
        y = normalized_box_targets(bundle, ScoreConfig())
        coef = np.linalg.lstsq(f, y, rcond=None)[0]
        assert np.abs(f @ coef - y).max() <= 1e-6

    def test_quality_orders_evidence(self):
        """Noiseless targets earn more evidence than fully noisy ones."""
        from detrank.scores import ScoreConfig, score_u_logme

        hi = synth_bundle(80, 12, 2, 1.0, seed=5)
        lo = synth_bundle(80, 12, 2, 0.0, seed=5)
        assert score_u_logme(hi, ScoreConfig())[0] > score_u_logme(lo, ScoreConfig())[0]

    def test_boxes_valid_inside_synthetic_image(self):
        bundle = synth_bundle(200, 8, 4, 0.5, seed=11)
        validate_bundle(bundle)
        assert bundle.image_dims.max() == 1000.0

    def test_every_class_present(self):
        bundle = synth_bundle(30, 8, 5, 0.5, seed=2)
        assert set(np.unique(bundle.labels)) == set(range(5))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            synth_bundle(3, 8, 5, 0.5, seed=0)  # M < K
        with pytest.raises(ValueError):
            synth_bundle(10, 3, 2, 0.5, seed=0)  # D < 4
        with pytest.raises(ValueError):
            synth_bundle(10, 8, 2, 1.5, seed=0)  # quality out of range
