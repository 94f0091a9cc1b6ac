"""Per-lesion physical measurements and size stratification.

Diameters are measured between voxel centers, so a single voxel has
diameter 0. The long axis is the maximum caliper (Feret) distance over
boundary-voxel centers; the short axis is the maximum extent after
projecting out the realized long-axis direction. Strata follow the
mean of the two diameters: micro < 3 mm, small 3-10 mm inclusive,
significant > 10 mm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .instances import LesionInstance
from .overlap import _crop_to_bbox, boundary_mask
from .volume_io import GridGeometry, voxel_volume_cc

MICRO = "micro"
SMALL = "small"
SIGNIFICANT = "significant"
STRATA = (MICRO, SMALL, SIGNIFICANT)

# Below this many boundary points the O(n^2) scan is cheaper than a hull.
_DIRECT_CUTOFF = 256


@dataclass(frozen=True)
class Morphometry:
    volume_cc: float
    long_axis_mm: float
    short_axis_mm: float
    mean_diameter_mm: float
    stratum: str


def stratify(mean_diameter_mm: float) -> str:
    """Map a mean diameter in mm to its size stratum."""
    if mean_diameter_mm < 0:
        raise ValueError(f"negative mean diameter: {mean_diameter_mm}")
    if mean_diameter_mm < 3.0:
        return MICRO
    if mean_diameter_mm <= 10.0:
        return SMALL
    return SIGNIFICANT


def instance_boundary_indices(instance: LesionInstance) -> np.ndarray:
    """Boundary voxel indices of an instance, (m, 3) int64 in lexicographic order."""
    lo = instance.indices.min(axis=0)
    shape = tuple((instance.indices.max(axis=0) - lo + 1).tolist())
    fg = np.zeros(shape, dtype=bool)
    rel = instance.indices - lo
    fg[rel[:, 0], rel[:, 1], rel[:, 2]] = True
    return np.argwhere(boundary_mask(fg)) + lo


def measure_lesion(instance: LesionInstance, geometry: GridGeometry | None = None) -> Morphometry:
    """Volume, long/short/mean diameters, and stratum for one instance."""
    geometry = geometry or instance.geometry
    if instance.voxel_count == 0:
        raise ValueError("empty instance")
    volume = instance.voxel_count * voxel_volume_cc(geometry)
    idx = instance_boundary_indices(instance)
    pts = idx.astype(np.float64) * np.asarray(geometry.spacing, dtype=np.float64)
    long_axis, chord = feret_diameter(pts, idx)
    short_axis = _short_axis(pts, chord)
    mean = (long_axis + short_axis) / 2.0
    return Morphometry(
        volume_cc=float(volume),
        long_axis_mm=float(long_axis),
        short_axis_mm=float(short_axis),
        mean_diameter_mm=float(mean),
        stratum=stratify(mean),
    )


def measure_all(instances: list[LesionInstance], geometry: GridGeometry | None = None):
    """Morphometry keyed by instance id."""
    return {inst.id: measure_lesion(inst, geometry) for inst in instances}


# ---------------------------------------------------------------------------
# Feret diameter
# ---------------------------------------------------------------------------


def feret_diameter(pts: np.ndarray, idx: np.ndarray) -> tuple[float, np.ndarray | None]:
    """Max pairwise distance over points and the realized chord direction.

    `pts` are mm coordinates, `idx` the matching integer voxel indices used
    for the deterministic tie rule: among pairs achieving the maximum, the
    lexicographically smallest (endpoint, endpoint) pair is chosen. Returns
    (distance_mm, unit_direction); direction is None for a single point.
    """
    n = pts.shape[0]
    if n <= 1:
        return 0.0, None
    if n <= _DIRECT_CUTOFF:
        return _max_pair(pts, idx)
    cand = _hull_candidates(pts)
    return _max_pair(pts[cand], idx[cand])


def _hull_candidates(pts: np.ndarray) -> np.ndarray:
    """Indices of points that can realize the diameter (convex hull vertices).

    Falls back to rank-reduced hulls for degenerate (coplanar/collinear)
    point sets, which qhull rejects in full dimension.
    """
    try:
        return ConvexHull(pts).vertices
    except QhullError:
        pass
    centered = pts - pts.mean(axis=0)
    # Voxel data is either exactly degenerate or spread by >= one spacing,
    # so a loose relative tolerance cannot misclassify.
    svals = np.linalg.svd(centered, compute_uv=False)
    rank = int((svals > svals[0] * 1e-9).sum()) if svals[0] > 0 else 0
    if rank == 2:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        plane = centered @ vt[:2].T
        try:
            return ConvexHull(plane).vertices
        except QhullError:
            pass
    return np.arange(pts.shape[0])


def _max_pair(pts: np.ndarray, idx: np.ndarray) -> tuple[float, np.ndarray | None]:
    """Exhaustive max-distance pair with the lexicographic tie rule."""
    n = pts.shape[0]
    best = 0.0
    # Chunk rows to bound the (n, n, 3) temporaries.
    chunk = max(1, int(2**20 // max(n, 1)))
    for start in range(0, n, chunk):
        diff = pts[start : start + chunk, None, :] - pts[None, :, :]
        d2 = (diff * diff).sum(axis=-1)
        m = float(d2.max())
        if m > best:
            best = m
    if best == 0.0:
        return 0.0, None
    best_pair = None
    for start in range(0, n, chunk):
        diff = pts[start : start + chunk, None, :] - pts[None, :, :]
        d2 = (diff * diff).sum(axis=-1)
        for a, b in np.argwhere(d2 == best):
            a = int(a) + start
            b = int(b)
            if a == b:
                continue
            ta, tb = tuple(int(v) for v in idx[a]), tuple(int(v) for v in idx[b])
            pair = (ta, tb, a, b) if ta <= tb else (tb, ta, b, a)
            if best_pair is None or pair[:2] < best_pair[:2]:
                best_pair = pair
    p, q = pts[best_pair[2]], pts[best_pair[3]]
    u = q - p
    u = u / np.linalg.norm(u)
    return float(np.sqrt(best)), u


def _short_axis(pts: np.ndarray, chord: np.ndarray | None) -> float:
    """Max extent orthogonal to the realized long-axis chord."""
    n = pts.shape[0]
    if chord is None or n <= 1:
        return 0.0
    proj = pts - np.outer(pts @ chord, chord)
    if n <= _DIRECT_CUTOFF:
        return _max_distance(proj)
    # Candidates via a 2D hull in the projection plane; the extent is then
    # evaluated on the projected 3D coordinates.
    e1 = np.cross(chord, _off_axis(chord))
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(chord, e1)
    plane = np.column_stack([proj @ e1, proj @ e2])
    try:
        cand = ConvexHull(plane).vertices
    except QhullError:
        cand = np.arange(n)
    return _max_distance(proj[cand])


def _max_distance(pts: np.ndarray) -> float:
    n = pts.shape[0]
    best = 0.0
    chunk = max(1, int(2**20 // max(n, 1)))
    for start in range(0, n, chunk):
        diff = pts[start : start + chunk, None, :] - pts[None, :, :]
        d2 = (diff * diff).sum(axis=-1)
        m = float(d2.max())
        if m > best:
            best = m
    return float(np.sqrt(best))


def _off_axis(u: np.ndarray) -> np.ndarray:
    a = np.zeros(3)
    a[int(np.argmin(np.abs(u)))] = 1.0
    return a
