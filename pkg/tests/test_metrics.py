import itertools

import numpy as np
import pytest

from oracles import iou_bruteforce
from sketchparts.autograd import make_rng
from sketchparts.errors import ContractViolation
from sketchparts.imaging import LabelMap
from sketchparts.metrics import (
    category_aiou,
    grand_average,
    iou_report,
    pose_eval,
    sketch_iou,
)
from sketchparts.poses import POSES


class TestSketchIou:
    def test_perfect_prediction(self):
        gt = LabelMap(np.array([[1, 1], [2, 2]], dtype=np.uint8))
        per_part, siou = sketch_iou(gt, gt)
        assert per_part == {1: 1.0, 2: 1.0}
        assert siou == 1.0

    def test_hand_counted_two_by_two(self):
        gt = LabelMap(np.array([[1, 1], [2, 2]], dtype=np.uint8))
        pred = LabelMap(np.array([[1, 2], [2, 2]], dtype=np.uint8))
        per_part, siou = sketch_iou(pred, gt)
        assert per_part[1] == pytest.approx(0.5)
        assert per_part[2] == pytest.approx(2 / 3)
        assert siou == pytest.approx(7 / 12)

    def test_disjoint_prediction_zero(self):
        gt = LabelMap(np.array([[1, 1], [1, 1]], dtype=np.uint8))
        pred = LabelMap(np.array([[2, 2], [2, 2]], dtype=np.uint8))
        _, siou = sketch_iou(pred, gt)
        assert siou == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ContractViolation):
            sketch_iou(
                LabelMap(np.zeros((2, 2), dtype=np.uint8)),
                LabelMap(np.zeros((2, 3), dtype=np.uint8)),
            )

    def test_matches_bruteforce_on_random_maps(self):
        rng = make_rng(3)
        for _ in range(60):
            gt = (rng.random((8, 8)) * 4).astype(np.uint8)
            pred = (rng.random((8, 8)) * 4).astype(np.uint8)
            got_parts, got_siou = sketch_iou(LabelMap(pred), LabelMap(gt))
            want_parts, want_siou = iou_bruteforce(pred, gt)
            assert got_parts == want_parts
            assert got_siou == want_siou

    def test_per_part_symmetry(self):
        rng = make_rng(5)
        for _ in range(20):
            a = (rng.random((6, 6)) * 3).astype(np.uint8)
            b = (rng.random((6, 6)) * 3).astype(np.uint8)
            fwd, _ = sketch_iou(LabelMap(a), LabelMap(b))
            rev, _ = sketch_iou(LabelMap(b), LabelMap(a))
            for part in set(fwd) & set(rev):
                assert fwd[part] == rev[part]


class TestAverages:
    def test_singleton_identity(self):
        assert category_aiou([0.7]) == 0.7

    def test_two_sketches(self):
        assert category_aiou([0.4, 0.6]) == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            category_aiou([])
        with pytest.raises(ContractViolation):
            grand_average([])

    def test_report_values_in_unit_interval(self):
        rng = make_rng(7)
        pairs = []
        for i in range(12):
            gt = LabelMap((rng.random((8, 8)) * 3).astype(np.uint8))
            pred = LabelMap((rng.random((8, 8)) * 3).astype(np.uint8))
            pairs.append(("catA" if i % 2 else "catB", pred, gt))
        report = iou_report(pairs)
        for _, v in report.per_sketch:
            assert 0.0 <= v <= 1.0
        for v in report.per_category.values():
            assert 0.0 <= v <= 1.0
        assert 0.0 <= report.grand <= 1.0
        assert report.csv().startswith("category,aiou")


class TestPoseEval:
    def test_ne_vs_e_merge_semantics(self):
        report = pose_eval(["NE"], ["E"])
        assert report.accuracy8 == 0.0
        assert report.accuracy4 == 1.0

    def test_all_correct(self):
        report = pose_eval(list(POSES), list(POSES))
        assert report.accuracy8 == 1.0
        assert report.accuracy4 == 1.0

    def test_merged_never_below_eightway_all_pairs(self):
        # exhaustive over every (pred, truth) label pair
        for p, t in itertools.product(POSES, POSES):
            report = pose_eval([p], [t])
            assert report.accuracy4 >= report.accuracy8

    def test_matrix_row_sums_match_truth_counts(self):
        rng = make_rng(11)
        preds = [POSES[i] for i in rng.integers(0, 8, size=100)]
        truths = [POSES[i] for i in rng.integers(0, 8, size=100)]
        report = pose_eval(preds, truths)
        for i, pose in enumerate(POSES):
            assert report.matrix8[i].sum() == truths.count(pose)
        assert report.matrix8.sum() == 100
        assert report.matrix4.sum() == 100

    def test_unknown_label_rejected(self):
        with pytest.raises(ContractViolation):
            pose_eval(["EAST"], ["E"])

    def test_merge_false_skips_fourway(self):
        report = pose_eval(["E"], ["E"], merge=False)
        assert report.matrix4 is None and report.accuracy4 is None
