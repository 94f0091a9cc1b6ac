import numpy as np
import pytest

from lesiontrack import (
    GridGeometry,
    LabelVolume,
    detection_scores,
    extract_instances,
    match_lesions,
    measure_all,
)
from lesiontrack.detection import ALL
from lesiontrack.morphometry import MICRO, SIGNIFICANT, SMALL


def _instances(mask, source="ground_truth"):
    mask = np.asarray(mask)
    vol = LabelVolume(GridGeometry(mask.shape, (1.0, 1.0, 1.0)), mask.astype(np.uint16))
    return extract_instances(vol, 26, source=source)


class TestMatch:
    def test_perfect(self):
        mask = np.zeros((20, 8, 8))
        mask[0:4, 0:4, 0:4] = 1
        mask[8:13, 1:6, 1:6] = 1
        mask[16:18, 0:2, 0:2] = 1
        gt = _instances(mask)
        pred = _instances(mask, "predicted")
        match = match_lesions(gt, pred)
        assert len(match.pairs) == 3
        assert match.unmatched_gt == ()
        assert match.unmatched_pred == ()
        for gid, pid, d in match.pairs:
            assert gid == pid
            assert d == 1.0

    def test_fn_and_fp(self):
        gt_mask = np.zeros((20, 6, 6))
        gt_mask[0:4, 0:4, 0:4] = 1   # A
        gt_mask[10:14, 0:4, 0:4] = 1  # B
        pred_mask = np.zeros((20, 6, 6))
        pred_mask[1:5, 0:4, 0:4] = 1  # A' overlaps A only
        pred_mask[16:19, 0:3, 0:3] = 1  # C overlaps nothing
        gt = _instances(gt_mask)
        pred = _instances(pred_mask, "predicted")
        match = match_lesions(gt, pred)
        assert len(match.pairs) == 1
        (gid, pid, _), = match.pairs
        gt_by_id = {i.id: i for i in gt}
        assert tuple(gt_by_id[gid].indices[0]) == (0, 0, 0)
        assert len(match.unmatched_gt) == 1
        assert len(match.unmatched_pred) == 1

    def test_one_pred_overlapping_two_gt(self):
        gt_mask = np.zeros((11, 4, 4))
        gt_mask[0:4, 0:4, 0:4] = 1   # 64 voxels
        gt_mask[6:9, 0:3, 0:3] = 1   # 27 voxels
        pred_mask = np.zeros((11, 4, 4))
        pred_mask[2:8, 0:3, 0:3] = 1  # spans both
        gt = _instances(gt_mask)
        pred = _instances(pred_mask, "predicted")
        match = match_lesions(gt, pred)
        assert len(match.pairs) == 1
        gid, pid, d = match.pairs[0]
        # dice vs A: 2*18/(64+54); vs B: 2*18/(27+54) -> B wins
        gt_by_id = {i.id: i for i in gt}
        assert gt_by_id[gid].voxel_count == 27
        assert d == pytest.approx(2 * 18 / (27 + 54))
        assert len(match.unmatched_gt) == 1

    def test_min_match_dice_gate(self):
        gt_mask = np.zeros((6, 4, 4))
        gt_mask[0:4, 0:4, 0:4] = 1
        pred_mask = np.zeros((6, 4, 4))
        pred_mask[3:5, 0:2, 0:2] = 1  # tiny overlap
        gt = _instances(gt_mask)
        pred = _instances(pred_mask, "predicted")
        loose = match_lesions(gt, pred, min_match_dice=0.0)
        assert len(loose.pairs) == 1
        strict = match_lesions(gt, pred, min_match_dice=0.5)
        assert strict.pairs == ()
        assert len(strict.unmatched_gt) == 1
        assert len(strict.unmatched_pred) == 1

    def test_greedy_determinism_and_invariants(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            dims = tuple(int(rng.integers(6, 20)) for _ in range(3))
            gt = _instances(rng.random(dims) < 0.2)
            pred = _instances(rng.random(dims) < 0.2, "predicted")
            m1 = match_lesions(gt, pred)
            m2 = match_lesions(gt, pred)
            assert m1 == m2
            assert len(m1.pairs) + len(m1.unmatched_gt) == len(gt)
            assert len(m1.pairs) + len(m1.unmatched_pred) == len(pred)
            paired_gt = [g for g, _, _ in m1.pairs]
            paired_pred = [p for _, p, _ in m1.pairs]
            assert len(set(paired_gt)) == len(paired_gt)
            assert len(set(paired_pred)) == len(paired_pred)

    def test_adding_disjoint_fp_keeps_pairs(self):
        gt_mask = np.zeros((10, 4, 4))
        gt_mask[0:3, 0:3, 0:3] = 1
        pred_mask = gt_mask.copy()
        gt = _instances(gt_mask)
        base = match_lesions(gt, _instances(pred_mask, "predicted"))
        pred_mask[8:10, 0:2, 0:2] = 1
        more = match_lesions(gt, _instances(pred_mask, "predicted"))
        assert len(more.pairs) == len(base.pairs)
        assert len(more.unmatched_pred) == len(base.unmatched_pred) + 1
        assert len(more.unmatched_gt) == len(base.unmatched_gt)


def _morph_stub(strata: dict[int, str]):
    class _M:
        def __init__(self, stratum):
            self.stratum = stratum

    return {iid: _M(s) for iid, s in strata.items()}


class _FakeMatch:
    def __init__(self, pairs, unmatched_gt, unmatched_pred):
        self.pairs = pairs
        self.unmatched_gt = unmatched_gt
        self.unmatched_pred = unmatched_pred


class TestScores:
    def test_perfect_every_stratum(self):
        match = _FakeMatch([(1, 1, 1.0), (2, 2, 1.0)], (), ())
        gt_m = _morph_stub({1: SMALL, 2: SIGNIFICANT})
        det = detection_scores(match, gt_m, _morph_stub({1: SMALL, 2: SIGNIFICANT}))
        for stratum in (ALL, SMALL, SIGNIFICANT):
            s = det[stratum]
            assert (s.precision, s.sensitivity, s.f1) == (1.0, 1.0, 1.0)

    def test_two_tp_one_fp(self):
        match = _FakeMatch([(1, 1, 0.9), (2, 2, 0.8)], (), (3,))
        gt_m = _morph_stub({1: SMALL, 2: SMALL})
        pred_m = _morph_stub({1: SMALL, 2: SMALL, 3: SMALL})
        s = detection_scores(match, gt_m, pred_m)[ALL]
        assert s.precision == pytest.approx(2 / 3)
        assert s.sensitivity == 1.0
        assert s.f1 == pytest.approx(0.8)

    def test_no_predictions(self):
        match = _FakeMatch([], (1, 2, 3, 4, 5), ())
        gt_m = _morph_stub({i: SMALL for i in range(1, 6)})
        s = detection_scores(match, gt_m, {})[ALL]
        assert (s.precision, s.sensitivity, s.f1) == (0.0, 0.0, 0.0)

    def test_empty_stratum_is_vacuous(self):
        match = _FakeMatch([(1, 1, 1.0)], (), ())
        det = detection_scores(match, _morph_stub({1: SMALL}), _morph_stub({1: SMALL}))
        s = det[SIGNIFICANT]
        assert (s.tp, s.fp, s.fn) == (0, 0, 0)
        assert (s.precision, s.sensitivity, s.f1) == (1.0, 1.0, 1.0)

    def test_fp_stratified_by_predicted_morphometry(self):
        match = _FakeMatch([], (), (1,))
        det = detection_scores(match, {}, _morph_stub({1: SIGNIFICANT}))
        assert det[SIGNIFICANT].fp == 1
        assert det[SMALL].fp == 0
        # significant stratum has FP but no GT: precision 0/(0+1)=0
        assert det[SIGNIFICANT].precision == 0.0

    def test_missing_morphometry_raises(self):
        match = _FakeMatch([(1, 1, 1.0)], (), ())
        with pytest.raises(ValueError, match="missing morphometry"):
            detection_scores(match, {}, _morph_stub({1: MICRO}))

    def test_swap_symmetry(self):
        # swapping gt and pred swaps precision and sensitivity, keeps F1
        match = _FakeMatch([(1, 10, 0.7)], (2,), (11, 12))
        gt_m = _morph_stub({1: SMALL, 2: SMALL})
        pred_m = _morph_stub({10: SMALL, 11: SMALL, 12: SMALL})
        fwd = detection_scores(match, gt_m, pred_m)[ALL]
        swapped = _FakeMatch([(10, 1, 0.7)], (11, 12), (2,))
        rev = detection_scores(swapped, pred_m, gt_m)[ALL]
        assert fwd.precision == rev.sensitivity
        assert fwd.sensitivity == rev.precision
        assert fwd.f1 == pytest.approx(rev.f1)
