"""Total lesion burden per study and longitudinal patient trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import LesionTrackError
from .instances import LesionInstance
from .volume_io import GridGeometry, LabelVolume, assert_same_grid, voxel_volume_cc


@dataclass(frozen=True)
class StudyBurden:
    """Summed lesion volume for one study, optionally split by region."""

    patient_id: str
    study_order: int
    burden_cc: float
    lesion_count: int
    per_region_cc: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class PatientTrajectory:
    """Per-visit burden for one patient with signed interval changes.

    `visits` holds (study_order, gt_cc, pred_cc) sorted by study_order.
    Deltas are consecutive-visit differences of each series; signed_diff_cc
    is pred - gt per visit.
    """

    patient_id: str
    visits: tuple[tuple[int, float, float], ...]
    gt_deltas_cc: tuple[float, ...]
    pred_deltas_cc: tuple[float, ...]
    signed_diff_cc: tuple[float, ...]


def study_burden(
    instances: list[LesionInstance],
    geometry: GridGeometry,
    patient_id: str = "",
    study_order: int = 0,
) -> StudyBurden:
    """Exact voxel-count x voxel-volume sum over the given (post-filter) instances."""
    vox_cc = voxel_volume_cc(geometry)
    total = sum(inst.voxel_count for inst in instances) * vox_cc
    return StudyBurden(
        patient_id=patient_id,
        study_order=study_order,
        burden_cc=float(total),
        lesion_count=len(instances),
    )


def region_burden(
    instances: list[LesionInstance],
    region_masks: Mapping[str, LabelVolume],
) -> dict[str, float]:
    """Burden in cc per region, by voxelwise intersection.

    A lesion straddling several regions contributes to each of them in
    proportion to its voxels inside, so a partition of the grid conserves
    the total burden.
    """
    out: dict[str, float] = {}
    for name, region in sorted(region_masks.items()):
        if instances:
            assert_same_grid(instances[0].geometry, region.geometry)
        fg = region.foreground()
        vox_cc = voxel_volume_cc(region.geometry)
        count = 0
        for inst in instances:
            idx = inst.indices
            count += int(np.count_nonzero(fg[idx[:, 0], idx[:, 1], idx[:, 2]]))
        out[name] = count * vox_cc
    return out


def build_trajectory(studies: list[tuple[StudyBurden, StudyBurden]]) -> PatientTrajectory:
    """Assemble a patient trajectory from per-study (gt, pred) burden pairs."""
    if not studies:
        raise LesionTrackError("trajectory needs at least one study")
    pid = studies[0][0].patient_id
    seen: set[int] = set()
    for gt, pred in studies:
        if gt.patient_id != pid or pred.patient_id != pid:
            raise LesionTrackError(
                f"mixed patient ids in trajectory: {gt.patient_id!r}/{pred.patient_id!r} vs {pid!r}"
            )
        if gt.study_order != pred.study_order:
            raise LesionTrackError(
                f"gt/pred study_order mismatch: {gt.study_order} vs {pred.study_order}"
            )
        if gt.study_order in seen:
            raise LesionTrackError(f"duplicate study_order {gt.study_order} for patient {pid!r}")
        seen.add(gt.study_order)

    ordered = sorted(studies, key=lambda s: s[0].study_order)
    visits = tuple((gt.study_order, gt.burden_cc, pred.burden_cc) for gt, pred in ordered)
    gt_vals = [v[1] for v in visits]
    pred_vals = [v[2] for v in visits]
    return PatientTrajectory(
        patient_id=pid,
        visits=visits,
        gt_deltas_cc=tuple(b - a for a, b in zip(gt_vals, gt_vals[1:])),
        pred_deltas_cc=tuple(b - a for a, b in zip(pred_vals, pred_vals[1:])),
        signed_diff_cc=tuple(p - g for g, p in zip(gt_vals, pred_vals)),
    )
