"""Instance-level lesion matching and stratified detection scores.

Matching is greedy one-to-one on pairwise Dice over all (gt, pred) pairs
with any voxel overlap, ties broken by (smaller gt id, smaller pred id).
A minimum-Dice gate can make the criterion stricter; the default 0 keeps
any-overlap matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .instances import LesionInstance
from .morphometry import MICRO, SIGNIFICANT, SMALL, Morphometry

ALL = "all"
SCORE_STRATA = (ALL, MICRO, SMALL, SIGNIFICANT)


@dataclass(frozen=True)
class MatchResult:
    """One-to-one gt/pred pairing: pairs carry the Dice at match time."""

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]


@dataclass(frozen=True)
class StratumScores:
    tp: int
    fp: int
    fn: int
    precision: float
    sensitivity: float
    f1: float


@dataclass(frozen=True)
class DetectionScores:
    """StratumScores per stratum plus the aggregate "all" row."""

    per_stratum: dict[str, StratumScores]

    def __getitem__(self, stratum: str) -> StratumScores:
        return self.per_stratum[stratum]


def match_lesions(
    gt: list[LesionInstance],
    pred: list[LesionInstance],
    min_match_dice: float = 0.0,
) -> MatchResult:
    """Greedily pair predicted lesions to ground-truth lesions by Dice."""
    if not gt or not pred:
        return MatchResult(
            pairs=(),
            unmatched_gt=tuple(inst.id for inst in gt),
            unmatched_pred=tuple(inst.id for inst in pred),
        )
    pred_sizes = {inst.id: inst.voxel_count for inst in pred}
    # One merged, sorted array of predicted voxels lets each gt lesion find
    # its overlaps with a single searchsorted pass.
    pred_lin = np.concatenate([inst.linear_indices() for inst in pred])
    pred_owner = np.concatenate(
        [np.full(inst.voxel_count, inst.id, dtype=np.int64) for inst in pred]
    )
    order = np.argsort(pred_lin, kind="stable")
    pred_lin = pred_lin[order]
    pred_owner = pred_owner[order]

    candidates = []
    for g in gt:
        lin = g.linear_indices()
        pos = np.searchsorted(pred_lin, lin)
        ok = pos < pred_lin.size
        ok[ok] = pred_lin[pos[ok]] == lin[ok]
        if not ok.any():
            continue
        owners, counts = np.unique(pred_owner[pos[ok]], return_counts=True)
        for pid, overlap in zip(owners, counts):
            d = 2.0 * int(overlap) / (g.voxel_count + pred_sizes[int(pid)])
            if d >= min_match_dice:
                candidates.append((d, g.id, int(pid)))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_gt: set[int] = set()
    used_pred: set[int] = set()
    pairs = []
    for d, gid, pid in candidates:
        if gid in used_gt or pid in used_pred:
            continue
        used_gt.add(gid)
        used_pred.add(pid)
        pairs.append((gid, pid, d))
    pairs.sort(key=lambda p: p[0])
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_gt=tuple(i.id for i in gt if i.id not in used_gt),
        unmatched_pred=tuple(i.id for i in pred if i.id not in used_pred),
    )


def _scores(tp: int, fp: int, fn: int) -> StratumScores:
    # Degenerate denominators are pinned so reports never carry undefined
    # entries: no predictions with GT present scores 0, vacuous strata 1.
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0 if tp + fn > 0 else 1.0
    sensitivity = tp / (tp + fn) if tp + fn > 0 else 1.0
    f1 = 2 * precision * sensitivity / (precision + sensitivity) if precision + sensitivity > 0 else 0.0
    return StratumScores(tp=tp, fp=fp, fn=fn, precision=precision, sensitivity=sensitivity, f1=f1)


def detection_scores(
    match: MatchResult,
    gt_morph: Mapping[int, Morphometry],
    pred_morph: Mapping[int, Morphometry],
) -> DetectionScores:
    """Stratified TP/FP/FN with precision, sensitivity and F1.

    TP and FN take the ground-truth lesion's stratum; FP takes the
    predicted lesion's stratum, since a false positive has no GT size.
    """
    tp = dict.fromkeys(SCORE_STRATA, 0)
    fp = dict.fromkeys(SCORE_STRATA, 0)
    fn = dict.fromkeys(SCORE_STRATA, 0)

    def _stratum(morph: Mapping[int, Morphometry], inst_id: int, side: str) -> str:
        try:
            return morph[inst_id].stratum
        except KeyError:
            raise ValueError(f"missing morphometry for {side} instance {inst_id}") from None

    for gt_id, pred_id, _ in match.pairs:
        tp[_stratum(gt_morph, gt_id, "gt")] += 1
        tp[ALL] += 1
    for gt_id in match.unmatched_gt:
        fn[_stratum(gt_morph, gt_id, "gt")] += 1
        fn[ALL] += 1
    for pred_id in match.unmatched_pred:
        fp[_stratum(pred_morph, pred_id, "predicted")] += 1
        fp[ALL] += 1

    return DetectionScores(
        per_stratum={s: _scores(tp[s], fp[s], fn[s]) for s in SCORE_STRATA}
    )


def pooled_detection_scores(counts: Mapping[str, tuple[int, int, int]]) -> DetectionScores:
    """Scores from already-pooled (tp, fp, fn) counts per stratum."""
    return DetectionScores(
        per_stratum={s: _scores(*counts.get(s, (0, 0, 0))) for s in SCORE_STRATA}
    )
