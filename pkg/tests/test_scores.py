"""Transferability scores: baseline, unified, IoU-based, and the
zoo-combined score."""

import dataclasses

import numpy as np
import pytest

from detrank.bundle import synth_bundle
from detrank.evidence import EvidenceSolution, maximize_evidence
from detrank.geometry import center_normalize_boxes, expand_unified_labels
from detrank.scores import (
    SCORE_CSV_COLUMNS,
    ScoreConfig,
    _min_max_normalize,
    normalized_box_targets,
    score_det_logme,
    score_iou_logme,
    score_logme,
    score_u_logme,
)

CFG = ScoreConfig()


class TestLogme:
    def test_quality_orders_score(self):
        hi = synth_bundle(80, 12, 2, 1.0, seed=4)
        lo = synth_bundle(80, 12, 2, 0.0, seed=4)
        assert score_logme(hi, CFG) > score_logme(lo, CFG)

    def test_single_class_is_regression_only(self):
        """K=1 skips the one-hot branch: the score is exactly the mean of
        the four per-coordinate evidence solves (recomputed in-test)."""
        bundle = synth_bundle(60, 8, 1, 0.6, seed=9)
        f = bundle.features.astype(np.float64)
        targets = normalized_box_targets(bundle, CFG)
        expected = np.mean(
            [maximize_evidence(f, targets[:, [j]]).logml for j in range(4)]
        )
        assert score_logme(bundle, CFG) == pytest.approx(expected, abs=1e-12)

    def test_multiclass_mixes_in_classification(self):
        """K>=2 averages the regression mean with the one-hot mean."""
        bundle = synth_bundle(60, 8, 3, 0.6, seed=9)
        f = bundle.features.astype(np.float64)
        targets = normalized_box_targets(bundle, CFG)
        reg = np.mean(
            [maximize_evidence(f, targets[:, [j]]).logml for j in range(4)]
        )
        onehot = np.eye(3)[bundle.labels]
        cls = np.mean(
            [maximize_evidence(f, onehot[:, [c]]).logml for c in range(3)]
        )
        expected = (reg + cls) / 2
        assert score_logme(bundle, CFG) == pytest.approx(expected, abs=1e-12)


class TestULogme:
    def test_single_class_collapses_to_plain_joint_fit(self):
        """K=1: unified expansion is the identity, so the score equals a
        joint 4-column solve on the normalized boxes."""
        bundle = synth_bundle(50, 8, 1, 0.5, seed=3)
        f = bundle.features.astype(np.float64)
        targets = normalized_box_targets(bundle, CFG)
        expected = maximize_evidence(f, targets).logml
        got, _ = score_u_logme(bundle, CFG)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_unified_expansion_used_for_multiclass(self):
        """K>=2 fits the class-slotted target matrix (checked against a
        direct evidence solve on the expanded matrix)."""
        bundle = synth_bundle(50, 8, 3, 0.5, seed=3)
        f = bundle.features.astype(np.float64)
        boxes = center_normalize_boxes(
            bundle.boxes.astype(np.float64), bundle.image_dims.astype(np.float64)
        )
        unified = expand_unified_labels(boxes, bundle.labels, 3).matrix
        expected = maximize_evidence(f, unified).logml
        got, solution = score_u_logme(bundle, CFG)
        assert got == pytest.approx(expected, abs=1e-12)
        assert solution.weights.shape == (8, 12)

    def test_object_permutation_invariance(self):
        bundle = synth_bundle(40, 8, 2, 0.5, seed=6)
        perm = np.random.default_rng(0).permutation(40)
        shuffled = dataclasses.replace(
            bundle,
            features=bundle.features[perm],
            boxes=bundle.boxes[perm],
            labels=bundle.labels[perm],
            image_dims=bundle.image_dims[perm],
        )
        a, _ = score_u_logme(bundle, CFG)
        b, _ = score_u_logme(shuffled, CFG)
        assert a == pytest.approx(b, abs=1e-9)

    def test_class_relabeling_invariance(self):
        """Swapping class ids everywhere leaves the score unchanged."""
        bundle = synth_bundle(40, 8, 2, 0.5, seed=8)
        swapped = dataclasses.replace(
            bundle, labels=(1 - bundle.labels.astype(np.int64)).astype(np.uint32)
        )
        a, _ = score_u_logme(bundle, CFG)
        b, _ = score_u_logme(swapped, CFG)
        assert a == pytest.approx(b, abs=1e-9)

    def test_norm_denominator_modes(self):
        """Per-row normalization is exactly T times the per-cell one."""
        bundle = synth_bundle(60, 10, 3, 0.5, seed=11)
        cells, _ = score_u_logme(bundle, CFG)
        rows, _ = score_u_logme(
            bundle, dataclasses.replace(CFG, norm_by_targets=False)
        )
        assert rows == pytest.approx(cells * 12, rel=1e-12)

    def test_border_normalization_mode_runs(self):
        bundle = synth_bundle(40, 8, 2, 0.5, seed=12)
        center, _ = score_u_logme(bundle, CFG)
        border, _ = score_u_logme(
            bundle, dataclasses.replace(CFG, normalization="border")
        )
        assert np.isfinite(border) and border != center

    def test_literal_single_block_variant(self):
        """The non-default plain 4-column reading runs and matches the
        default exactly when K=1."""
        cfg = dataclasses.replace(CFG, joint_unified_fit=False)
        single = synth_bundle(40, 8, 1, 0.5, seed=13)
        assert score_u_logme(single, cfg)[0] == pytest.approx(
            score_u_logme(single, CFG)[0], abs=1e-12
        )
        multi = synth_bundle(40, 8, 3, 0.5, seed=13)
        assert np.isfinite(score_u_logme(multi, cfg)[0])


class TestIouLogme:
    def test_planted_noiseless_saturates(self):
        """Perfectly linear targets predict the boxes almost exactly."""
        bundle = synth_bundle(100, 16, 3, 1.0, seed=7)
        _, solution = score_u_logme(bundle, CFG)
        assert score_iou_logme(bundle, solution, CFG) >= 0.99

    def test_zero_weights_score_zero(self):
        """A zero weight matrix predicts degenerate boxes everywhere."""
        bundle = synth_bundle(30, 8, 2, 0.5, seed=1)
        _, solution = score_u_logme(bundle, CFG)
        zeroed = dataclasses.replace(
            solution, weights=np.zeros_like(solution.weights)
        )
        assert score_iou_logme(bundle, zeroed, CFG) == 0.0

    def test_bounded_unit_interval(self):
        rng = np.random.default_rng(42)
        for s in range(10):
            bundle = synth_bundle(
                40, 8, int(rng.integers(1, 4)), float(rng.uniform(0, 1)), seed=s
            )
            _, solution = score_u_logme(bundle, CFG)
            val = score_iou_logme(bundle, solution, CFG)
            assert 0.0 <= val <= 1.0

    def test_class_block_selection(self):
        """Per-object predictions come from the object's own class block
        (verified against an explicit per-object loop)."""
        from detrank.geometry import CenterBox, iou_pair

        bundle = synth_bundle(25, 8, 3, 0.8, seed=5)
        _, solution = score_u_logme(bundle, CFG)
        f = bundle.features.astype(np.float64)
        boxes = center_normalize_boxes(
            bundle.boxes.astype(np.float64), bundle.image_dims.astype(np.float64)
        )
        expected = []
        for i in range(25):
            c = int(bundle.labels[i])
            block = solution.weights[:, 4 * c : 4 * c + 4]
            pred = f[i] @ block
            expected.append(iou_pair(CenterBox(*pred), CenterBox(*boxes[i])))
        got = score_iou_logme(bundle, solution, CFG)
        assert got == pytest.approx(float(np.mean(expected)), abs=1e-12)


class TestNoiseMonotonicity:
    def test_box_corruption_lowers_both_scores(self):
        """Replacing boxes with random ones lowers the unified and IoU
        scores on 20 fixed seeds (all 20 decreased when measured; assert
        a safety margin of 18)."""
        drops_u = drops_iou = 0
        for s in range(20):
            bundle = synth_bundle(80, 12, 2, 0.8, seed=300 + s)
            u0, s0 = score_u_logme(bundle, CFG)
            i0 = score_iou_logme(bundle, s0, CFG)
            rng = np.random.default_rng(s)
            w = bundle.image_dims[:, 0].astype(np.float64)
            h = bundle.image_dims[:, 1].astype(np.float64)
            x1 = rng.uniform(0, w - 2)
            y1 = rng.uniform(0, h - 2)
            noisy = dataclasses.replace(
                bundle,
                boxes=np.stack(
                    [x1, y1, rng.uniform(x1 + 1, w), rng.uniform(y1 + 1, h)], axis=1
                ).astype(np.float32),
            )
            u1, s1 = score_u_logme(noisy, CFG)
            i1 = score_iou_logme(noisy, s1, CFG)
            drops_u += u1 < u0
            drops_iou += i1 < i0
        assert drops_u >= 18
        assert drops_iou >= 18


class TestDetLogme:
    def _zoo(self, qualities, base_seed=1000):
        return [
            synth_bundle(120, 24, 2, q, seed=base_seed + i)
            for i, q in enumerate(qualities)
        ]

    def test_planted_qualities_rank_in_order(self):
        zoo = self._zoo([0.2, 0.5, 0.9])
        scores = score_det_logme(zoo, CFG)
        assert scores.det_logme[0] < scores.det_logme[1] < scores.det_logme[2]

    def test_mu_zero_matches_unified_order(self):
        zoo = self._zoo([0.3, 0.8, 0.1, 0.6])
        scores = score_det_logme(zoo, dataclasses.replace(CFG, mu=0.0))
        np.testing.assert_array_equal(
            np.argsort(scores.det_logme), np.argsort(scores.u_logme_raw)
        )
        np.testing.assert_allclose(scores.det_logme, scores.u_norm, atol=1e-12)

    def test_combination_identity(self):
        """det = u_norm + mu * iou_norm, elementwise."""
        zoo = self._zoo([0.2, 0.7, 0.5])
        cfg = dataclasses.replace(CFG, mu=0.35)
        scores = score_det_logme(zoo, cfg)
        np.testing.assert_allclose(
            scores.det_logme, scores.u_norm + 0.35 * scores.iou_norm, atol=1e-12
        )

    def test_normalized_vectors_span_unit_interval(self):
        zoo = self._zoo([0.1, 0.5, 0.9])
        scores = score_det_logme(zoo, CFG)
        for vec in (scores.u_norm, scores.iou_norm):
            assert vec.min() == pytest.approx(0.0, abs=1e-12)
            assert vec.max() == pytest.approx(1.0, abs=1e-12)

    def test_identical_bundles_normalize_to_half(self):
        """An all-equal raw vector maps to 0.5, not an error."""
        bundle = synth_bundle(60, 8, 2, 0.5, seed=44)
        scores = score_det_logme([bundle, bundle], CFG)
        np.testing.assert_allclose(scores.u_norm, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(scores.iou_norm, [0.5, 0.5], atol=1e-12)

    def test_single_bundle_zoo_rejected(self):
        with pytest.raises(ValueError):
            score_det_logme([synth_bundle(30, 8, 2, 0.5, seed=0)], CFG)

    def test_mixed_class_count_rejected(self):
        zoo = [
            synth_bundle(30, 8, 2, 0.5, seed=0),
            synth_bundle(30, 8, 3, 0.5, seed=1),
        ]
        with pytest.raises(ValueError):
            score_det_logme(zoo, CFG)

    def test_thread_cap_does_not_change_results(self, monkeypatch):
        zoo = self._zoo([0.2, 0.6, 0.9])
        base = score_det_logme(zoo, CFG)
        monkeypatch.setenv("TRANSFER_RANK_THREADS", "1")
        capped = score_det_logme(zoo, CFG)
        np.testing.assert_array_equal(base.det_logme, capped.det_logme)
        monkeypatch.setenv("TRANSFER_RANK_THREADS", "bogus")
        with pytest.raises(ValueError):
            score_det_logme(zoo, CFG)

    def test_records_use_exact_csv_columns(self):
        zoo = self._zoo([0.2, 0.8])
        records = score_det_logme(zoo, CFG).to_records()
        assert tuple(records[0].keys()) == SCORE_CSV_COLUMNS
        assert SCORE_CSV_COLUMNS == (
            "model_name",
            "u_logme_raw",
            "iou_logme_raw",
            "u_norm",
            "iou_norm",
            "det_logme",
        )


class TestMinMax:
    def test_affine_invariance(self):
        """Min-max normalization ignores positive affine rescaling."""
        rng = np.random.default_rng(42)
        raw = rng.normal(size=12)
        np.testing.assert_allclose(
            _min_max_normalize(raw), _min_max_normalize(3.5 * raw + 11.0), atol=1e-12
        )

    def test_constant_vector_maps_to_half(self):
        np.testing.assert_array_equal(
            _min_max_normalize(np.full(4, 7.0)), np.full(4, 0.5)
        )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScoreConfig(mu=-0.5)
        with pytest.raises(ValueError):
            ScoreConfig(normalization="diagonal")
