"""Dice, connected components, component-level FP/FN volumes, reports."""

import numpy as np
import pytest

from conftest import (
    brute_force_dice,
    brute_force_unmatched_ml,
    canonical_labels,
    flood_fill_labels,
    random_mask,
)
from petct_tta.errors import ParameterError
from petct_tta.metrics import (
    EvalReport,
    connected_components,
    dice,
    evaluate,
    fn_volume,
    fp_volume,
)
from petct_tta.volume import MaskVolume


def mask_of(coords, dims=(6, 6, 6), spacing=(1.0, 1.0, 1.0)):
    data = np.zeros(dims, np.uint8)
    for c in coords:
        data[c] = 1
    return MaskVolume(data, spacing)


class TestDice:
    def test_identical_nonempty(self):
        rng = np.random.default_rng(0)
        m = random_mask(rng)
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        a = mask_of([(0, 0, 0)])
        b = mask_of([(5, 5, 5)])
        assert dice(a, b) == 0.0

    def test_hand_count(self):
        pred = mask_of([(1, 1, 1), (2, 2, 2)])
        gt = mask_of([(1, 1, 1), (3, 3, 3)])
        assert dice(pred, gt) == 0.5

    def test_both_empty_convention(self):
        empty = mask_of([])
        assert dice(empty, empty) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = random_mask(rng), random_mask(rng)
            assert dice(a, b) == dice(b, a)

    def test_geometry_mismatch_rejected(self):
        a = mask_of([], dims=(4, 4, 4))
        b = mask_of([], dims=(4, 4, 5))
        with pytest.raises(ParameterError):
            dice(a, b)


class TestConnectedComponents:
    def test_empty_mask(self):
        _, count = connected_components(mask_of([]), 26)
        assert count == 0

    def test_corner_touch_connectivity(self):
        corner = mask_of([(2, 2, 2), (3, 3, 3)])
        _, count26 = connected_components(corner, 26)
        _, count6 = connected_components(corner, 6)
        assert count26 == 1
        assert count6 == 2

    def test_edge_touch_18_vs_6(self):
        edge = mask_of([(2, 2, 2), (3, 3, 2)])
        _, count18 = connected_components(edge, 18)
        _, count6 = connected_components(edge, 6)
        assert count18 == 1
        assert count6 == 2

    @pytest.mark.parametrize("connectivity", [6, 18, 26])
    def test_matches_flood_fill_oracle(self, connectivity):
        rng = np.random.default_rng(2)
        for _ in range(30):
            mask = random_mask(rng, dims=tuple(rng.integers(2, 9, 3)), density=0.45)
            labels, count = connected_components(mask, connectivity)
            oracle_labels, oracle_count = flood_fill_labels(mask.data, connectivity)
            assert count == oracle_count
            assert np.array_equal(canonical_labels(labels), canonical_labels(oracle_labels))

    def test_bad_connectivity_rejected(self):
        with pytest.raises(ParameterError):
            connected_components(mask_of([]), 10)


class TestFpFnVolumes:
    def test_pred_subset_of_gt_has_no_fp(self):
        gt = mask_of([(1, 1, 1), (1, 1, 2), (1, 2, 1)])
        pred = mask_of([(1, 1, 1)])
        assert fp_volume(pred, gt) == 0.0

    def test_isolated_blob_volume(self):
        # 2x2x2 blob disjoint from gt, spacing 2mm: 8 voxels * 8 mm3 = 0.064 mL
        coords = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        pred = mask_of(coords, spacing=(2.0, 2.0, 2.0))
        gt = mask_of([(5, 5, 5)], spacing=(2.0, 2.0, 2.0))
        assert fp_volume(pred, gt) == pytest.approx(0.064)

    def test_single_voxel_overlap_exempts_component(self):
        coords = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        pred = mask_of(coords)
        gt = mask_of([(0, 0, 0)])
        assert fp_volume(pred, gt) == 0.0

    def test_missed_lesion_fn_volume(self):
        coords = [(x, y, z) for x in (1, 2, 3) for y in (1, 2, 3) for z in (1, 2, 3)]
        gt = mask_of(coords)
        pred = mask_of([])
        assert fn_volume(pred, gt) == pytest.approx(0.027)

    def test_perfect_prediction(self):
        rng = np.random.default_rng(3)
        m = random_mask(rng)
        assert fn_volume(m, m) == 0.0
        assert fp_volume(m, m) == 0.0

    def test_empty_gt_dualities(self):
        rng = np.random.default_rng(4)
        pred = random_mask(rng, spacing=(1.5, 1.5, 1.5))
        empty = MaskVolume(np.zeros(pred.dims, np.uint8), pred.spacing)
        total = int(pred.data.sum()) * pred.voxel_volume_ml
        assert fp_volume(pred, empty) == pytest.approx(total)
        assert fn_volume(pred, empty) == 0.0

    def test_duality_fn_equals_swapped_fp(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            a, b = random_mask(rng), random_mask(rng)
            assert fn_volume(a, b) == fp_volume(b, a)

    @pytest.mark.parametrize("connectivity", [6, 26])
    def test_matches_bruteforce_oracle(self, connectivity):
        rng = np.random.default_rng(6)
        for _ in range(30):
            dims = tuple(rng.integers(2, 9, 3))
            spacing = tuple(rng.uniform(0.5, 3.0, 3))
            pred = random_mask(rng, dims, density=0.3, spacing=spacing)
            gt = random_mask(rng, dims, density=0.3, spacing=spacing)
            assert dice(pred, gt) == brute_force_dice(pred, gt)
            assert fp_volume(pred, gt, connectivity) == \
                brute_force_unmatched_ml(pred, gt, connectivity)
            assert fn_volume(pred, gt, connectivity) == \
                brute_force_unmatched_ml(gt, pred, connectivity)


class TestEvaluate:
    def test_perfect_single_case(self):
        rng = np.random.default_rng(7)
        m = random_mask(rng)
        report = evaluate([("a", m, m)])
        assert report.mean_dice == 1.0
        assert report.mean_fp_volume_ml == 0.0
        assert report.mean_fn_volume_ml == 0.0
        assert report.case_count == 1

    def test_mean_of_two_cases(self):
        a_pred = mask_of([(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0)])
        a_gt = mask_of([(0, 0, 0), (0, 0, 1), (0, 1, 0)])
        b = mask_of([(3, 3, 3)])
        report = evaluate([("a", a_pred, a_gt), ("b", b, b)])
        d_a = dice(a_pred, a_gt)
        assert report.mean_dice == pytest.approx((d_a + 1.0) / 2)

    def test_aggregates_are_means_of_per_case(self):
        rng = np.random.default_rng(8)
        pairs = [(f"c{i}", random_mask(rng), random_mask(rng)) for i in range(5)]
        report = evaluate(pairs)
        assert report.mean_dice == pytest.approx(
            np.mean([s.dice for s in report.per_case]), abs=1e-9)
        assert report.mean_fp_volume_ml == pytest.approx(
            np.mean([s.fp_volume_ml for s in report.per_case]), abs=1e-9)

    def test_mismatch_names_case(self):
        a = mask_of([], dims=(4, 4, 4))
        b = mask_of([], dims=(5, 4, 4))
        with pytest.raises(ParameterError, match="offending"):
            evaluate([("offending", a, b)])

    def test_report_serialization(self):
        rng = np.random.default_rng(9)
        m = random_mask(rng)
        report = evaluate([("x", m, m)])
        doc = report.to_json()
        assert doc["per_case"][0]["case_id"] == "x"
        csv_text = report.to_csv()
        lines = csv_text.strip().splitlines()
        assert lines[0] == "case_id,dice,fp_volume_ml,fn_volume_ml"
        assert lines[-1].startswith("mean,")
        assert EvalReport.from_cases(report.per_case) == report
