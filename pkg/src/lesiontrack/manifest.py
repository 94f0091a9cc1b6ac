"""Cohort manifest parsing (CSV with a header row, or JSON rows).

Columns: patient_id, study_order, gt_path, pred_path, plus optional
region:<name> columns pointing at region masks. Relative paths are
resolved against the manifest file's directory.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

_REQUIRED = ("patient_id", "study_order", "gt_path", "pred_path")
_REGION_PREFIX = "region:"


@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    study_order: int
    gt_path: Path
    pred_path: Path
    region_paths: dict[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class CohortManifest:
    rows: tuple[ManifestRow, ...]


def _parse_row(raw: dict, base: Path, lineno) -> ManifestRow:
    for key in _REQUIRED:
        if key not in raw or raw[key] in (None, ""):
            raise ManifestError(f"row {lineno}: missing {key}")
    try:
        order = int(raw["study_order"])
    except (TypeError, ValueError):
        raise ManifestError(f"row {lineno}: study_order must be an integer, got {raw['study_order']!r}") from None
    if order < 0:
        raise ManifestError(f"row {lineno}: study_order must be >= 0, got {order}")
    regions = {}
    for key, value in raw.items():
        if key is not None and key.startswith(_REGION_PREFIX) and value not in (None, ""):
            regions[key[len(_REGION_PREFIX) :]] = base / str(value)
    return ManifestRow(
        patient_id=str(raw["patient_id"]),
        study_order=order,
        gt_path=base / str(raw["gt_path"]),
        pred_path=base / str(raw["pred_path"]),
        region_paths=regions,
    )


def load_manifest(path) -> CohortManifest:
    """Load and validate a cohort manifest (.csv or .json by extension)."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    rows: list[ManifestRow] = []
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ManifestError(f"cannot parse {path}: {exc}") from exc
        if isinstance(doc, dict):
            doc = doc.get("rows", [])
        if not isinstance(doc, list):
            raise ManifestError(f"{path}: JSON manifest must be a list of rows")
        for i, raw in enumerate(doc, start=1):
            if not isinstance(raw, dict):
                raise ManifestError(f"{path}: row {i} is not an object")
            rows.append(_parse_row(raw, base, i))
    else:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                raise ManifestError(f"{path}: empty manifest (no header)")
            missing = [c for c in _REQUIRED if c not in reader.fieldnames]
            if missing:
                raise ManifestError(f"{path}: missing columns {missing}")
            for i, raw in enumerate(reader, start=2):
                rows.append(_parse_row(raw, base, i))

    if not rows:
        raise ManifestError(f"{path}: no studies")
    seen = set()
    for row in rows:
        key = (row.patient_id, row.study_order)
        if key in seen:
            raise ManifestError(f"duplicate (patient_id, study_order): {key}")
        seen.add(key)
    return CohortManifest(rows=tuple(rows))
