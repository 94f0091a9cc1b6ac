"""Report serialization: deterministic JSON plus the CSV plot bundle.

Floats are rounded to 6 significant digits and keys sorted before
serialization, so identical inputs and flags produce byte-identical
reports. CSVs are UTF-8, comma-separated, '.' decimal point, LF endings,
and carry values straight out of the (already rounded) report.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import LesionTrackError

CSV_FILES = (
    "dice_by_stratum.csv",
    "hd_by_stratum.csv",
    "regression_pairs.csv",
    "bland_altman_pairs.csv",
    "trajectories.csv",
)


def round6(obj):
    """Recursively round floats to 6 significant digits (JSON-ready copy)."""
    if isinstance(obj, dict):
        return {str(k): round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round6(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not math.isfinite(f):
            raise LesionTrackError(f"non-finite value in report: {f}")
        if f == 0.0:
            return 0.0  # normalize -0.0
        return float(f"{f:.6g}")
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(round6(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(report), encoding="utf-8")
    return path


def load_report(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LesionTrackError(f"cannot read report {path}: {exc}") from exc


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_plot_data(report: dict, out_dir) -> list[Path]:
    """Write the five plot-ready CSVs for a report; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dice_rows, hd_rows, reg_rows, ba_rows = [], [], [], []
    for study in report["studies"]:
        pid, order = study["patient_id"], study["study_order"]
        for pair in study["match"]["pairs"]:
            base = (pid, order, pair["gt_id"], pair["pred_id"], pair["stratum"])
            dice_rows.append(base + (pair["dice"],))
            hd_rows.append(base + (pair["hausdorff_mm"],))
        b = study["burden"]
        reg_rows.append((pid, order, b["gt_cc"], b["pred_cc"]))
        ba_rows.append((pid, order, (b["gt_cc"] + b["pred_cc"]) / 2.0, b["signed_diff_cc"]))

    traj_rows = []
    for traj in report["trajectories"]:
        for i, visit in enumerate(traj["visits"]):
            traj_rows.append(
                (
                    traj["patient_id"],
                    visit["study_order"],
                    visit["gt_cc"],
                    visit["pred_cc"],
                    visit["signed_diff_cc"],
                    traj["gt_deltas_cc"][i - 1] if i > 0 else "",
                    traj["pred_deltas_cc"][i - 1] if i > 0 else "",
                )
            )

    paths = []
    spec = [
        ("dice_by_stratum.csv", ["patient_id", "study_order", "gt_id", "pred_id", "stratum", "dice"], dice_rows),
        ("hd_by_stratum.csv", ["patient_id", "study_order", "gt_id", "pred_id", "stratum", "hausdorff_mm"], hd_rows),
        ("regression_pairs.csv", ["patient_id", "study_order", "gt_cc", "pred_cc"], reg_rows),
        ("bland_altman_pairs.csv", ["patient_id", "study_order", "mean_cc", "diff_cc"], ba_rows),
        (
            "trajectories.csv",
            ["patient_id", "study_order", "gt_cc", "pred_cc", "signed_diff_cc", "gt_delta_cc", "pred_delta_cc"],
            traj_rows,
        ),
    ]
    for name, header, rows in spec:
        path = out_dir / name
        _write_csv(path, header, rows)
        paths.append(path)
    return paths
