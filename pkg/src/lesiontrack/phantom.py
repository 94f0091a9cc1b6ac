"""Deterministic synthetic sphere phantoms with analytic ground truth.

Generation is a pure function of the spec: a voxel belongs to a lesion
iff its center lies within the sphere radius, so analytic volume and
diameter oracles hold exactly up to digitization. The spec's `seed` is
recorded for provenance and reserved for future randomized perturbations;
v1 consumes no randomness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import PhantomSpecError
from .volume_io import GridGeometry, LabelVolume

_DILATE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class SphereSpec:
    center_mm: tuple[float, float, float]
    radius_mm: float


@dataclass(frozen=True)
class Perturbation:
    """Deviations applied to the ground truth to form a prediction.

    dilate_steps maps lesion id to morphological steps (negative erodes).
    Dropped lesions become known false negatives; spurious blobs known
    false positives. blank_slices zeroes whole z-slices afterwards,
    reproducing the unlabeled-slice split pathology.
    """

    dilate_steps: dict[int, int] = field(default_factory=dict)
    drop_lesions: tuple[int, ...] = ()
    spurious_blobs: tuple[SphereSpec, ...] = ()
    blank_slices: tuple[int, ...] = ()


@dataclass(frozen=True)
class PhantomSpec:
    geometry: GridGeometry
    lesions: tuple[SphereSpec, ...]
    seed: int = 0
    perturbation: Perturbation | None = None


@dataclass(frozen=True)
class AnalyticLesion:
    """Closed-form expectations for one sphere."""

    volume_cc: float
    diameter_mm: float


@dataclass(frozen=True)
class ExpectedDetection:
    tp: int
    fp: int
    fn: int


def _sphere_mask(geometry: GridGeometry, sphere: SphereSpec) -> tuple[np.ndarray, np.ndarray]:
    """Boolean mask of the sphere inside its index bounding box; returns (mask, lo)."""
    spacing = np.asarray(geometry.spacing)
    origin = np.asarray(geometry.origin)
    center = np.asarray(sphere.center_mm)
    r = sphere.radius_mm
    lo = np.maximum(np.floor((center - r - origin) / spacing).astype(int), 0)
    hi = np.minimum(np.ceil((center + r - origin) / spacing).astype(int), np.asarray(geometry.dims) - 1)
    if np.any(hi < lo):
        return np.zeros((0, 0, 0), dtype=bool), lo
    axes = [origin[a] + np.arange(lo[a], hi[a] + 1) * spacing[a] - center[a] for a in range(3)]
    d2 = (
        axes[0][:, None, None] ** 2
        + axes[1][None, :, None] ** 2
        + axes[2][None, None, :] ** 2
    )
    return d2 <= r * r, lo


def _validate(spec: PhantomSpec) -> None:
    geom = spec.geometry
    lo_mm = np.asarray(geom.origin)
    hi_mm = lo_mm + (np.asarray(geom.dims) - 1) * np.asarray(geom.spacing)
    max_spacing = max(geom.spacing)
    for i, lesion in enumerate(spec.lesions, start=1):
        if not lesion.radius_mm > 0:
            raise PhantomSpecError(f"lesion {i}: radius must be > 0, got {lesion.radius_mm}")
        c = np.asarray(lesion.center_mm)
        if np.any(c - lesion.radius_mm < lo_mm) or np.any(c + lesion.radius_mm > hi_mm):
            raise PhantomSpecError(f"lesion {i} escapes grid bounds")
    for i in range(len(spec.lesions)):
        for j in range(i + 1, len(spec.lesions)):
            a, b = spec.lesions[i], spec.lesions[j]
            dist = float(np.linalg.norm(np.asarray(a.center_mm) - np.asarray(b.center_mm)))
            if dist <= a.radius_mm + b.radius_mm + 2 * max_spacing:
                raise PhantomSpecError(f"overlapping lesions {i + 1} and {j + 1} (distance {dist:.3f} mm)")


def generate(spec: PhantomSpec) -> tuple[LabelVolume, dict[int, AnalyticLesion]]:
    """Voxelize the spec's spheres; labels are 1-based lesion ids.

    Also returns the analytic volume (4/3 pi r^3, in cc) and diameter per
    lesion for oracle checks.
    """
    _validate(spec)
    voxels = np.zeros(spec.geometry.dims, dtype=np.uint16)
    expected: dict[int, AnalyticLesion] = {}
    for lid, lesion in enumerate(spec.lesions, start=1):
        mask, lo = _sphere_mask(spec.geometry, lesion)
        if mask.size:
            view = voxels[
                lo[0] : lo[0] + mask.shape[0],
                lo[1] : lo[1] + mask.shape[1],
                lo[2] : lo[2] + mask.shape[2],
            ]
            view[mask] = lid
        r_cm = lesion.radius_mm / 10.0
        expected[lid] = AnalyticLesion(
            volume_cc=4.0 / 3.0 * math.pi * r_cm**3,
            diameter_mm=2.0 * lesion.radius_mm,
        )
    return LabelVolume(spec.geometry, voxels), expected


def perturb(gt: LabelVolume, spec: PhantomSpec) -> tuple[LabelVolume, ExpectedDetection]:
    """Build a perturbed prediction from generate()'s output.

    The expected counts reflect the constructed drops, erosions to empty,
    and injected blobs. Slice blanking is applied last and is not folded
    into the counts: split fragments surface as extra components unless
    the repair operation rejoins them.
    """
    pert = spec.perturbation
    if pert is None:
        raise PhantomSpecError("spec has no perturbation")
    n = len(spec.lesions)
    for lid in list(pert.dilate_steps) + list(pert.drop_lesions):
        if not 1 <= int(lid) <= n:
            raise PhantomSpecError(f"perturbation references unknown lesion id {lid}")

    voxels = np.zeros(gt.geometry.dims, dtype=np.uint16)
    tp = fn = fp = 0
    dropped = {int(i) for i in pert.drop_lesions}
    for lid in range(1, n + 1):
        if lid in dropped:
            fn += 1
            continue
        mask = gt.voxels == lid
        steps = int(pert.dilate_steps.get(lid, 0))
        if steps > 0:
            mask = ndimage.binary_dilation(mask, structure=_DILATE_STRUCTURE, iterations=steps)
        elif steps < 0:
            mask = ndimage.binary_erosion(mask, structure=_DILATE_STRUCTURE, iterations=-steps)
        if mask.any():
            voxels[mask] = lid
            tp += 1
        else:
            fn += 1

    for k, blob in enumerate(pert.spurious_blobs, start=1):
        mask, lo = _sphere_mask(gt.geometry, blob)
        if mask.size and mask.any():
            view = voxels[
                lo[0] : lo[0] + mask.shape[0],
                lo[1] : lo[1] + mask.shape[1],
                lo[2] : lo[2] + mask.shape[2],
            ]
            view[mask] = n + k
            fp += 1

    nz = gt.geometry.dims[2]
    for z in pert.blank_slices:
        if not 0 <= int(z) < nz:
            raise PhantomSpecError(f"blank slice {z} outside grid (nz={nz})")
        voxels[:, :, int(z)] = 0

    return LabelVolume(gt.geometry, voxels), ExpectedDetection(tp=tp, fp=fp, fn=fn)


# ---------------------------------------------------------------------------
# JSON cohort specs (schema documented in the README)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhantomStudy:
    patient_id: str
    study_order: int
    spec: PhantomSpec


def _parse_geometry(obj) -> GridGeometry:
    try:
        return GridGeometry(
            dims=tuple(obj["dims"]),
            spacing=tuple(obj["spacing"]),
            origin=tuple(obj.get("origin", (0.0, 0.0, 0.0))),
        )
    except (KeyError, TypeError) as exc:
        raise PhantomSpecError(f"bad geometry object: {obj!r}") from exc


def _parse_spheres(items) -> tuple[SphereSpec, ...]:
    out = []
    for it in items:
        try:
            out.append(SphereSpec(center_mm=tuple(it["center_mm"]), radius_mm=float(it["radius_mm"])))
        except (KeyError, TypeError) as exc:
            raise PhantomSpecError(f"bad sphere spec: {it!r}") from exc
    return tuple(out)


def _parse_perturbation(obj) -> Perturbation:
    return Perturbation(
        dilate_steps={int(k): int(v) for k, v in obj.get("dilate_steps", {}).items()},
        drop_lesions=tuple(int(v) for v in obj.get("drop_lesions", ())),
        spurious_blobs=_parse_spheres(obj.get("spurious_blobs", ())),
        blank_slices=tuple(int(v) for v in obj.get("blank_slices", ())),
    )


def load_phantom_cohort(path) -> list[PhantomStudy]:
    """Read a phantom cohort spec JSON into per-study PhantomSpecs."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PhantomSpecError(f"cannot read phantom spec {path}: {exc}") from exc
    if "studies" not in doc:
        raise PhantomSpecError(f"{path}: phantom cohort spec needs a 'studies' list")
    default_geom = _parse_geometry(doc["geometry"]) if "geometry" in doc else None
    seed = int(doc.get("seed", 0))
    studies = []
    for row in doc["studies"]:
        geom = _parse_geometry(row["geometry"]) if "geometry" in row else default_geom
        if geom is None:
            raise PhantomSpecError(f"{path}: study has no geometry and no cohort default")
        pert = _parse_perturbation(row["perturbation"]) if "perturbation" in row else None
        try:
            studies.append(
                PhantomStudy(
                    patient_id=str(row["patient_id"]),
                    study_order=int(row["study_order"]),
                    spec=PhantomSpec(
                        geometry=geom,
                        lesions=_parse_spheres(row["lesions"]),
                        seed=seed,
                        perturbation=pert,
                    ),
                )
            )
        except KeyError as exc:
            raise PhantomSpecError(f"{path}: study row missing {exc}") from exc
    if not studies:
        raise PhantomSpecError(f"{path}: phantom cohort spec has no studies")
    return studies
