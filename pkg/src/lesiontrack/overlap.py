"""Voxel-overlap and surface-distance metrics.

Dice is computed over voxel sets; the Hausdorff distance is the full
symmetric maximum over boundary-voxel centers in mm (not a percentile).
A boundary voxel is a foreground voxel with at least one 6-neighbor
outside the set, voxels at the grid edge included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import GridMismatchError
from .instances import LesionInstance
from .volume_io import GridGeometry

_SURFACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class OverlapScores:
    dice: float
    hausdorff_mm: float


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice coefficient of two boolean masks on the same grid.

    Both-empty is defined as 1.0 (vacuous agreement); callers exclude
    such pairs from aggregate statistics.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise GridMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    size_a = int(np.count_nonzero(a))
    size_b = int(np.count_nonzero(b))
    if size_a + size_b == 0:
        return 1.0
    inter = int(np.count_nonzero(a & b))
    return 2.0 * inter / (size_a + size_b)


def boundary_mask(fg: np.ndarray) -> np.ndarray:
    """Surface voxels of a boolean mask (6-neighborhood, grid edge counts)."""
    fg = np.asarray(fg, dtype=bool)
    eroded = ndimage.binary_erosion(fg, structure=_SURFACE_STRUCTURE, border_value=0)
    return fg & ~eroded


def _crop_to_bbox(fg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tight crop around the foreground; returns (cropped, offset)."""
    nz = np.nonzero(fg)
    lo = np.array([int(ax.min()) for ax in nz])
    hi = np.array([int(ax.max()) for ax in nz])
    cropped = fg[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    return cropped, lo


def boundary_points_mm(fg: np.ndarray, spacing) -> np.ndarray:
    """Boundary voxel centers in mm, (m, 3) float64."""
    cropped, offset = _crop_to_bbox(fg)
    pts = np.argwhere(boundary_mask(cropped)) + offset
    return pts.astype(np.float64) * np.asarray(spacing, dtype=np.float64)


def hausdorff(a: np.ndarray, b: np.ndarray, geometry: GridGeometry) -> float:
    """Symmetric Hausdorff distance in mm between two boolean masks.

    Raises ValueError("undefined HD ...") when either set is empty; the
    caller decides how to report that case.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise GridMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise ValueError("undefined HD: empty voxel set")
    pa = boundary_points_mm(a, geometry.spacing)
    pb = boundary_points_mm(b, geometry.spacing)
    return _hausdorff_points(pa, pb)


def _hausdorff_points(pa: np.ndarray, pb: np.ndarray) -> float:
    d_ab = cKDTree(pb).query(pa, k=1)[0].max()
    d_ba = cKDTree(pa).query(pb, k=1)[0].max()
    return float(max(d_ab, d_ba))


def _pair_masks(
    gt_inst: LesionInstance, pred_inst: LesionInstance
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean masks of both instances in their joint bounding box."""
    lo = np.minimum(gt_inst.indices.min(axis=0), pred_inst.indices.min(axis=0))
    hi = np.maximum(gt_inst.indices.max(axis=0), pred_inst.indices.max(axis=0))
    shape = tuple((hi - lo + 1).tolist())
    a = np.zeros(shape, dtype=bool)
    b = np.zeros(shape, dtype=bool)
    ga = gt_inst.indices - lo
    gb = pred_inst.indices - lo
    a[ga[:, 0], ga[:, 1], ga[:, 2]] = True
    b[gb[:, 0], gb[:, 1], gb[:, 2]] = True
    return a, b, lo


def pair_scores(
    gt_inst: LesionInstance, pred_inst: LesionInstance, geometry: GridGeometry
) -> OverlapScores:
    """Dice and Hausdorff for one matched lesion pair, on the pair's voxels only."""
    inter = np.intersect1d(
        gt_inst.linear_indices(), pred_inst.linear_indices(), assume_unique=True
    ).size
    d = 2.0 * inter / (gt_inst.voxel_count + pred_inst.voxel_count)
    a, b, _ = _pair_masks(gt_inst, pred_inst)
    spacing = np.asarray(geometry.spacing, dtype=np.float64)
    pa = np.argwhere(boundary_mask(a)).astype(np.float64) * spacing
    pb = np.argwhere(boundary_mask(b)).astype(np.float64) * spacing
    return OverlapScores(dice=float(d), hausdorff_mm=_hausdorff_points(pa, pb))


def per_pair_scores(
    match,
    gt_instances: list[LesionInstance],
    pred_instances: list[LesionInstance],
    geometry: GridGeometry,
) -> list[tuple[int, int, OverlapScores]]:
    """Scores for every matched (gt, pred) pair in a MatchResult."""
    gt_by_id = {inst.id: inst for inst in gt_instances}
    pred_by_id = {inst.id: inst for inst in pred_instances}
    out = []
    for gt_id, pred_id, _ in match.pairs:
        scores = pair_scores(gt_by_id[gt_id], pred_by_id[pred_id], geometry)
        out.append((gt_id, pred_id, scores))
    return out
