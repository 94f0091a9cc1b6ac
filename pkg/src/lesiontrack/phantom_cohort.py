"""Write a phantom cohort to disk: NIfTI volumes, manifest, expectations."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .phantom import generate, load_phantom_cohort, perturb
from .volume_io import save_label_volume


def generate_cohort(spec_path, out_dir) -> Path:
    """Voxelize every study in a phantom cohort spec.

    Writes <pid>_<order>_gt.nii.gz / _pred.nii.gz per study, a manifest.csv
    referencing them, and expected.json with the analytic lesion values and
    constructed detection counts. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    studies = load_phantom_cohort(spec_path)

    rows = []
    expectations = []
    for study in studies:
        gt, analytic = generate(study.spec)
        if study.spec.perturbation is not None:
            pred, expected = perturb(gt, study.spec)
            expected_rec = {"tp": expected.tp, "fp": expected.fp, "fn": expected.fn}
        else:
            pred, expected_rec = gt, None
        stem = f"{study.patient_id}_{study.study_order:03d}"
        gt_name, pred_name = f"{stem}_gt.nii.gz", f"{stem}_pred.nii.gz"
        save_label_volume(gt, out_dir / gt_name)
        save_label_volume(pred, out_dir / pred_name)
        rows.append((study.patient_id, study.study_order, gt_name, pred_name))
        expectations.append(
            {
                "patient_id": study.patient_id,
                "study_order": study.study_order,
                "expected_detection": expected_rec,
                "lesions": {
                    str(lid): {"volume_cc": a.volume_cc, "diameter_mm": a.diameter_mm}
                    for lid, a in analytic.items()
                },
            }
        )

    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["patient_id", "study_order", "gt_path", "pred_path"])
        writer.writerows(rows)
    (out_dir / "expected.json").write_text(json.dumps(expectations, indent=2) + "\n")
    return manifest_path
