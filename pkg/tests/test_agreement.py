"""Agreement tests: rasterization protocol arithmetic, overlap metrics
against counting oracles, rank correlation against a rank-transform
oracle, and exhaustive threshold-grid equality."""

import numpy as np
import pytest

from cardioxmap import agreement as ag
from cardioxmap.crossmodal import ImportanceMap
from cardioxmap.errors import (
    DegenerateRegion,
    EmptyGroundTruth,
    InvalidConfig,
    OutOfWindow,
)
from cardioxmap.signals import ClassLabel

from oracles import dice_count, grid_threshold_search, iou_count, spearman_by_ranks


def _ann(segments, leads=("II",), modality="ecg12", diagnosis=1):
    return ag.ExpertAnnotation(case_id="c1", modality=modality,
                               diagnosis=diagnosis, leads=list(leads),
                               segments=segments)


class TestAnnotationToMask:
    def test_interval_rasterization(self):
        mask = ag.annotation_to_mask(_ann([{"start_ms": 30, "end_ms": 100}]),
                                     500, 400.0)
        row = mask.cells[1]  # lead II
        assert row[15:50].all()
        assert not row[:15].any() and not row[50:].any()

    def test_point_expansion(self):
        mask = ag.annotation_to_mask(_ann([{"point_ms": 200}]), 500, 400.0)
        row = mask.cells[1]
        assert row[95:105].all()
        assert not row[:95].any() and not row[105:].any()

    def test_sub_minimum_segment_widened(self):
        # 10 ms segment at 160-170 ms sits in the 50 ms-minimum region
        mask = ag.annotation_to_mask(_ann([{"start_ms": 160, "end_ms": 170}]),
                                     500, 400.0)
        row = mask.cells[1]
        assert row[70:95].all()  # widened to 140-190 ms
        assert not row[:70].any() and not row[95:].any()

    def test_sub_minimum_qrs_segment_uses_25ms(self):
        mask = ag.annotation_to_mask(_ann([{"start_ms": 60, "end_ms": 70}]),
                                     500, 400.0)
        row = mask.cells[1]
        assert row[26:39].all()  # widened to 52.5-77.5 ms -> samples 26..38
        assert not row[:26].any() and not row[39:].any()

    def test_only_annotated_leads_marked(self):
        mask = ag.annotation_to_mask(
            _ann([{"start_ms": 30, "end_ms": 100}], leads=("I", "V3")), 500, 400.0)
        marked_rows = set(np.nonzero(mask.cells.any(axis=1))[0])
        assert marked_rows == {0, 8}

    def test_per_segment_lead_marks_only_that_lead(self):
        mask = ag.annotation_to_mask(
            _ann([{"start_ms": 40, "end_ms": 90, "lead": "I"},
                  {"start_ms": 160, "end_ms": 240, "lead": "V3"}],
                 leads=("I", "V3")), 500, 400.0)
        assert mask.cells[0, 20:45].all() and not mask.cells[0, 45:].any()
        assert mask.cells[8, 80:120].all() and not mask.cells[8, :80].any()

    def test_segment_lead_outside_annotation_leads_rejected(self):
        with pytest.raises(InvalidConfig):
            ag.annotation_to_mask(
                _ann([{"start_ms": 40, "end_ms": 90, "lead": "V6"}],
                     leads=("I",)), 500, 400.0)

    def test_cine_mask_is_single_row(self):
        mask = ag.annotation_to_mask(
            _ann([{"start_ms": 100, "end_ms": 180}], modality="cine"), 500, 400.0)
        assert mask.cells.shape == (1, 200)
        assert mask.selected_leads == ["all"]

    def test_out_of_window(self):
        with pytest.raises(OutOfWindow):
            ag.annotation_to_mask(_ann([{"start_ms": 420, "end_ms": 450}]),
                                  500, 400.0)
        with pytest.raises(OutOfWindow):
            ag.annotation_to_mask(_ann([{"point_ms": 500}]), 500, 400.0)

    def test_partial_overlap_clipped(self):
        mask = ag.annotation_to_mask(_ann([{"start_ms": 380, "end_ms": 450}]),
                                     500, 400.0)
        row = mask.cells[1]
        assert row[190:200].all()
        assert not row[:190].any()

    def test_round_trip_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n_segments = int(rng.integers(1, 4))
            segments = []
            for _ in range(n_segments):
                if rng.random() < 0.3:
                    segments.append({"point_ms": float(rng.uniform(20, 380))})
                else:
                    start = float(rng.uniform(0, 350))
                    segments.append({"start_ms": start,
                                     "end_ms": start + float(rng.uniform(5, 60))})
            leads = list(rng.choice(list(ag.LEAD_NAMES), size=int(rng.integers(1, 4)),
                                    replace=False))
            ann = _ann(segments, leads=leads)
            mask = ag.annotation_to_mask(ann, 500, 400.0)
            re_segments = ag.mask_to_segments(mask, 500)
            re_ann = _ann(re_segments, leads=leads)
            re_mask = ag.annotation_to_mask(re_ann, 500, 400.0)
            np.testing.assert_array_equal(mask.cells, re_mask.cells)


class TestDiceIoU:
    @staticmethod
    def _masks(a_cells, b_cells):
        region = np.ones_like(np.asarray(a_cells, dtype=bool))
        return (np.asarray(a_cells, dtype=bool),
                np.asarray(b_cells, dtype=bool), region)

    def test_identical_masks(self):
        a, b, region = self._masks([[1, 1, 0, 0]], [[1, 1, 0, 0]])
        assert ag.dice(a, b, region) == 1.0
        assert ag.iou(a, b, region) == 1.0

    def test_half_overlap(self):
        a, b, region = self._masks([[1, 1, 1, 1, 0, 0]], [[0, 0, 1, 1, 1, 1]])
        assert ag.dice(a, b, region) == 0.5
        assert ag.iou(a, b, region) == pytest.approx(1.0 / 3.0)

    def test_disjoint_masks(self):
        a, b, region = self._masks([[1, 1, 0, 0]], [[0, 0, 1, 1]])
        assert ag.dice(a, b, region) == 0.0
        assert ag.iou(a, b, region) == 0.0

    def test_empty_ground_truth(self):
        a, b, region = self._masks([[1, 0]], [[0, 0]])
        with pytest.raises(EmptyGroundTruth):
            ag.dice(a, b, region)

    def test_matches_counting_oracle_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = rng.random((3, 10)) < 0.4
            b = rng.random((3, 10)) < 0.4
            region = rng.random((3, 10)) < 0.7
            if not region.any() or not b[region].any():
                continue
            d = ag.dice(a, b, region)
            j = ag.iou(a, b, region)
            assert d == dice_count(a & region, b & region)
            assert j == iou_count(a & region, b & region)
            assert abs(j - d / (2.0 - d)) < 1e-12


class TestSpearman:
    def test_monotone_tie_free_is_one(self):
        # strictly increasing ranks against strictly increasing ranks
        assert spearman_by_ranks([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(
            1.0, abs=1e-12)

    def test_monotone_agreement_binary_truth(self):
        values = np.array([[0.1, 0.2, 0.8, 0.9]])
        truth = np.array([[False, False, True, True]])
        rho, degenerate = ag.spearman(values, truth, np.ones_like(truth))
        assert not degenerate
        # ties in the binary vector cap the tie-corrected coefficient
        assert rho == pytest.approx(
            spearman_by_ranks(values[0], truth[0].astype(float)), abs=1e-12)
        assert rho > 0.85

    def test_rank_transform_oracle_value(self):
        # frozen via the rank-transform + product-moment oracle
        assert spearman_by_ranks([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(
            0.9487, abs=5e-5)

    def test_matches_oracle_on_binary_truth(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            values = rng.normal(size=(2, 8))
            truth = rng.random((2, 8)) < 0.5
            region = np.ones((2, 8), dtype=bool)
            if np.all(truth) or not truth.any():
                continue
            rho, degenerate = ag.spearman(values, truth, region)
            assert not degenerate
            expect = spearman_by_ranks(values[region], truth[region].astype(float))
            assert rho == pytest.approx(expect, abs=1e-12)

    def test_constant_map_degenerate(self):
        truth = np.array([[False, True, True, False]])
        rho, degenerate = ag.spearman(np.full((1, 4), 0.5), truth,
                                      np.ones_like(truth))
        assert rho == 0.0
        assert degenerate

    def test_uniform_truth_rejected(self):
        truth = np.ones((1, 4), dtype=bool)
        with pytest.raises(DegenerateRegion):
            ag.spearman(np.arange(4.0).reshape(1, 4), truth, np.ones_like(truth))

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        values = rng.random((2, 10))
        truth = rng.random((2, 10)) < 0.5
        truth[0, 0] = True
        truth[0, 1] = False
        region = np.ones((2, 10), dtype=bool)
        rho_a, _ = ag.spearman(values, truth, region)
        rho_b, _ = ag.spearman(np.exp(3.0 * values), truth, region)
        assert rho_a == pytest.approx(rho_b, abs=1e-12)


class TestOptimalThreshold:
    def test_hand_example(self):
        values = np.array([[0.0, 0.2, 0.9, 0.95]])
        truth = np.array([[False, False, True, True]])
        t, d = ag.optimal_threshold(values, truth, np.ones_like(truth))
        assert t == pytest.approx(0.21)
        assert d == 1.0

    def test_all_ones_map(self):
        values = np.ones((1, 5))
        truth = np.ones((1, 5), dtype=bool)
        t, d = ag.optimal_threshold(values, truth, np.ones_like(truth))
        assert t == 0.0
        assert d == 1.0

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            values = rng.random((2, 12))
            truth = rng.random((2, 12)) < 0.35
            region = rng.random((2, 12)) < 0.8
            if not region.any() or not truth[region].any():
                continue
            t, d = ag.optimal_threshold(values, truth, region)
            t_expect, d_expect = grid_threshold_search(values[region], truth[region])
            assert t == t_expect
            assert d == d_expect

    def test_rejects_unscaled_values(self):
        truth = np.array([[True, False]])
        with pytest.raises(InvalidConfig):
            ag.optimal_threshold(np.array([[2.0, 0.5]]), truth,
                                 np.ones_like(truth))


class TestAlignCase:
    @staticmethod
    def _importance(values, prep="scaled"):
        return ImportanceMap(values=np.asarray(values, dtype=np.float64),
                             prep=prep, oriented_for=ClassLabel.ABNORMAL,
                             case_id="c1")

    def test_perfect_agreement(self):
        truth = ag.BinaryMask(cells=np.array([[False, False, True, True]]),
                              selected_leads=["all"])
        result = ag.align_case(self._importance([[0.0, 0.1, 0.9, 1.0]]), truth)
        assert result.dice == 1.0
        assert result.iou == 1.0
        assert result.spearman > 0.0

    def test_inverted_map_not_better(self):
        truth = ag.BinaryMask(cells=np.array([[False, False, True, True]]),
                              selected_leads=["all"])
        good = ag.align_case(self._importance([[0.0, 0.1, 0.9, 1.0]]), truth)
        bad = ag.align_case(self._importance([[1.0, 0.9, 0.1, 0.0]]), truth)
        assert bad.dice <= good.dice

    def test_iou_dice_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            values = rng.random((1, 20))
            cells = rng.random((1, 20)) < 0.4
            if not cells.any():
                continue
            truth = ag.BinaryMask(cells=cells, selected_leads=["all"])
            result = ag.align_case(self._importance(values), truth)
            assert abs(result.iou - result.dice / (2.0 - result.dice)) < 1e-12

    def test_outside_region_cells_ignored(self):
        cells = np.zeros((12, 10), dtype=bool)
        cells[1, 2:6] = True
        truth = ag.BinaryMask(cells=cells, selected_leads=["II"])
        rng = np.random.default_rng(6)
        base = rng.random((12, 10))
        a = ag.align_case(self._importance(base), truth)
        perturbed = base.copy()
        perturbed[0] = rng.random(10)  # lead I is outside the region
        perturbed[5] = 1.0 - perturbed[5]
        b = ag.align_case(self._importance(perturbed), truth)
        assert (a.dice, a.iou, a.spearman, a.threshold) == (
            b.dice, b.iou, b.spearman, b.threshold)

    def test_positive_prep_rescaled_before_sweep(self):
        cells = np.array([[False, True, True, False]])
        truth = ag.BinaryMask(cells=cells, selected_leads=["all"])
        # raw positive-prep values exceed 1; align_case must rescale them
        imp = self._importance([[0.0, 3.0, 5.0, 0.5]], prep="positive")
        result = ag.align_case(imp, truth)
        assert result.dice == 1.0
