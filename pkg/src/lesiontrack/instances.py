"""Connected lesion instances: extraction, exclusion rules, label-noise repair.

A lesion instance is a maximal connected component of the foreground
(any nonzero voxel). Instances are numbered 1..n in descending voxel
count, ties broken by the lexicographically smallest voxel index, so
numbering is deterministic and stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .errors import LesionTrackError
from .volume_io import GridGeometry, LabelVolume

GROUND_TRUTH = "ground_truth"
PREDICTED = "predicted"

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


def _structure(connectivity: int) -> np.ndarray:
    if connectivity not in _CONNECTIVITY_RANK:
        raise LesionTrackError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    return ndimage.generate_binary_structure(3, _CONNECTIVITY_RANK[connectivity])


@dataclass(frozen=True)
class LesionInstance:
    """One connected lesion: its voxel set plus grid context.

    `indices` is an (n, 3) int32 array of (i, j, k) voxel indices in
    lexicographic order.
    """

    id: int
    indices: np.ndarray
    geometry: GridGeometry
    source: str = GROUND_TRUTH

    @property
    def voxel_count(self) -> int:
        return int(self.indices.shape[0])

    @property
    def centroid_mm(self) -> tuple[float, float, float]:
        spacing = np.asarray(self.geometry.spacing)
        origin = np.asarray(self.geometry.origin)
        c = origin + self.indices.mean(axis=0) * spacing
        return (float(c[0]), float(c[1]), float(c[2]))

    def linear_indices(self) -> np.ndarray:
        """Sorted int64 linear indices (C order over (i, j, k))."""
        nx, ny, nz = self.geometry.dims
        idx = self.indices.astype(np.int64)
        return (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]


def extract_instances(
    mask: LabelVolume, connectivity: int = 26, source: str = GROUND_TRUTH
) -> list[LesionInstance]:
    """Split the foreground of `mask` into connected components.

    Returns instances sorted by id (1..n, largest first). An all-zero
    mask yields an empty list.
    """
    fg = mask.foreground()
    labeled, n = ndimage.label(fg, structure=_structure(connectivity))
    if n == 0:
        return []
    # np.nonzero yields C-order traversal, i.e. lexicographic (i, j, k);
    # a stable sort by component keeps that order within each group.
    coords = np.nonzero(labeled)
    comp = labeled[coords]
    order = np.argsort(comp, kind="stable")
    pts = np.stack(coords, axis=1).astype(np.int32)[order]
    counts = np.bincount(comp, minlength=n + 1)
    stops = np.cumsum(counts)
    groups = [pts[stops[lbl - 1] : stops[lbl]] for lbl in range(1, n + 1)]
    groups.sort(key=lambda g: (-g.shape[0], tuple(g[0])))
    return [
        LesionInstance(i + 1, grp, mask.geometry, source) for i, grp in enumerate(groups)
    ]


def remove_satellite_clusters(
    instances: list[LesionInstance], min_voxels: int = 2
) -> list[LesionInstance]:
    """Drop instances below `min_voxels`; the default removes only singleton specks."""
    return [inst for inst in instances if inst.voxel_count >= min_voxels]


def filter_micro_nodules(
    instances: list[LesionInstance],
    morphometry: Mapping[int, "object"],
    threshold_mm: float = 3.0,
) -> tuple[list[LesionInstance], list[LesionInstance]]:
    """Partition instances into (kept, excluded) by mean diameter.

    Excludes strictly below the threshold; the boundary value is kept.
    `morphometry` maps instance id to a measurement with a
    `mean_diameter_mm` attribute.
    """
    kept, excluded = [], []
    for inst in instances:
        if morphometry[inst.id].mean_diameter_mm < threshold_mm:
            excluded.append(inst)
        else:
            kept.append(inst)
    return kept, excluded


def repair_split_lesions(mask: LabelVolume, max_z_gap: int = 1) -> LabelVolume:
    """Fill short unlabeled z-runs that split a lesion across slices.

    A background run along z is filled when it is bounded by foreground
    at the same (x, y) on both sides and is at most `max_z_gap` slices
    long. Foreground only grows; filled voxels get label 1. With
    `max_z_gap` 0 the volume is returned unchanged.
    """
    if max_z_gap <= 0:
        return mask
    fg = mask.foreground()
    nz = mask.geometry.dims[2]
    zidx = np.arange(nz, dtype=np.int64)
    # Nearest foreground slice at or below / above each z, per (x, y) column.
    prev = np.where(fg, zidx[None, None, :], -1)
    np.maximum.accumulate(prev, axis=2, out=prev)
    nxt = np.where(fg, zidx[None, None, :], nz)
    nxt = np.minimum.accumulate(nxt[:, :, ::-1], axis=2)[:, :, ::-1]
    fill = (prev >= 0) & (nxt < nz) & ((nxt - prev - 1) <= max_z_gap) & ~fg
    if not fill.any():
        return mask
    voxels = mask.voxels.copy()
    voxels[fill] = 1
    return LabelVolume(mask.geometry, voxels)
