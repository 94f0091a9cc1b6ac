"""Cohort analysis pipeline: per-study metrics, trajectories, aggregates.

Each study runs load -> (optional) repair -> extract -> de-satellite ->
measure -> micro filter -> match -> score -> burden, independently of the
others, so studies can be processed by a worker pool. Report assembly is
single-threaded after a deterministic sort by (patient_id, study_order).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .burden import region_burden, study_burden
from .detection import ALL, SCORE_STRATA, detection_scores, match_lesions, pooled_detection_scores
from .errors import LesionTrackError
from .instances import (
    GROUND_TRUTH,
    PREDICTED,
    extract_instances,
    filter_micro_nodules,
    remove_satellite_clusters,
    repair_split_lesions,
)
from .manifest import ManifestRow, load_manifest
from .morphometry import measure_all
from .overlap import per_pair_scores
from .report import emit_plot_data, load_report, round6, write_report
from .stats import (
    TWO_SIDED,
    bland_altman,
    friedman,
    linear_regression,
    median_iqr,
    wilcoxon_signed_rank,
)
from .volume_io import assert_same_grid, load_label_volume


@dataclass(frozen=True)
class AnalysisFlags:
    connectivity: int = 26
    min_diameter_mm: float = 3.0
    min_cluster_voxels: int = 2
    repair_gap: int = 0
    min_match_dice: float = 0.0


def _lesion_record(inst, morph) -> dict:
    return {
        "id": inst.id,
        "voxel_count": inst.voxel_count,
        "volume_cc": morph.volume_cc,
        "long_axis_mm": morph.long_axis_mm,
        "short_axis_mm": morph.short_axis_mm,
        "mean_diameter_mm": morph.mean_diameter_mm,
        "stratum": morph.stratum,
        "centroid_mm": list(inst.centroid_mm),
    }


def analyze_study(row: ManifestRow, flags: AnalysisFlags) -> dict:
    """Run the full per-study pipeline; returns a JSON-ready record."""
    gt = load_label_volume(row.gt_path)
    pred = load_label_volume(row.pred_path)
    assert_same_grid(gt, pred)
    regions = {}
    for name, path in sorted(row.region_paths.items()):
        vol = load_label_volume(path)
        assert_same_grid(gt, vol)
        regions[name] = vol

    if flags.repair_gap > 0:
        gt = repair_split_lesions(gt, flags.repair_gap)
        pred = repair_split_lesions(pred, flags.repair_gap)

    sides = {}
    for source, vol in ((GROUND_TRUTH, gt), (PREDICTED, pred)):
        extracted = extract_instances(vol, flags.connectivity, source=source)
        desat = remove_satellite_clusters(extracted, flags.min_cluster_voxels)
        morph = measure_all(desat)
        kept, micro = filter_micro_nodules(desat, morph, flags.min_diameter_mm)
        sides[source] = {
            "n_extracted": len(extracted),
            "n_satellites_removed": len(extracted) - len(desat),
            "n_micro_excluded": len(micro),
            "kept": kept,
            "morph": morph,
        }

    gt_side, pred_side = sides[GROUND_TRUTH], sides[PREDICTED]
    match = match_lesions(gt_side["kept"], pred_side["kept"], flags.min_match_dice)
    scores = per_pair_scores(match, gt_side["kept"], pred_side["kept"], gt.geometry)
    det = detection_scores(match, gt_side["morph"], pred_side["morph"])

    gt_burden = study_burden(gt_side["kept"], gt.geometry, row.patient_id, row.study_order)
    pred_burden = study_burden(pred_side["kept"], gt.geometry, row.patient_id, row.study_order)
    gt_regions = region_burden(gt_side["kept"], regions) if regions else {}
    pred_regions = region_burden(pred_side["kept"], regions) if regions else {}

    pair_records = [
        {
            "gt_id": gt_id,
            "pred_id": pred_id,
            "dice": s.dice,
            "hausdorff_mm": s.hausdorff_mm,
            "stratum": gt_side["morph"][gt_id].stratum,
        }
        for gt_id, pred_id, s in scores
    ]
    return {
        "patient_id": row.patient_id,
        "study_order": row.study_order,
        "gt_path": str(row.gt_path),
        "pred_path": str(row.pred_path),
        "gt": {
            "n_extracted": gt_side["n_extracted"],
            "n_satellites_removed": gt_side["n_satellites_removed"],
            "n_micro_excluded": gt_side["n_micro_excluded"],
            "lesions": [_lesion_record(i, gt_side["morph"][i.id]) for i in gt_side["kept"]],
        },
        "pred": {
            "n_extracted": pred_side["n_extracted"],
            "n_satellites_removed": pred_side["n_satellites_removed"],
            "n_micro_excluded": pred_side["n_micro_excluded"],
            "lesions": [_lesion_record(i, pred_side["morph"][i.id]) for i in pred_side["kept"]],
        },
        "match": {
            "pairs": pair_records,
            "false_negatives": [
                {"gt_id": gid, "stratum": gt_side["morph"][gid].stratum} for gid in match.unmatched_gt
            ],
            "false_positives": [
                {"pred_id": pid, "stratum": pred_side["morph"][pid].stratum}
                for pid in match.unmatched_pred
            ],
        },
        "detection": {s: asdict(det[s]) for s in SCORE_STRATA},
        "burden": {
            "gt_cc": gt_burden.burden_cc,
            "pred_cc": pred_burden.burden_cc,
            "signed_diff_cc": pred_burden.burden_cc - gt_burden.burden_cc,
            "gt_lesion_count": gt_burden.lesion_count,
            "pred_lesion_count": pred_burden.lesion_count,
            "gt_per_region_cc": gt_regions,
            "pred_per_region_cc": pred_regions,
        },
    }


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _mean_sd(values: list[float]) -> dict:
    if not values:
        return {"n": 0, "mean": None, "sd": None}
    arr = np.asarray(values, dtype=float)
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if arr.size > 1 else None,
    }


def _test_record(result) -> dict:
    rec = {
        "statistic": result.statistic,
        "p_value": result.p_value,
        "n_effective": result.n_effective,
        "method": result.method,
    }
    if result.effect_size_r is not None:
        rec["effect_size_r"] = result.effect_size_r
    return rec


def _quantile_record(values: list[float]) -> dict | None:
    if not values:
        return None
    q = median_iqr(values)
    return {"median": q.median, "q1": q.q1, "q3": q.q3}


def study_mean_dice(study: dict) -> float | None:
    dices = [p["dice"] for p in study["match"]["pairs"]]
    return float(np.mean(dices)) if dices else None


def friedman_dice_matrix(studies: list[dict]) -> list[list[float]] | None:
    """Per-patient rows of per-visit mean Dice for the across-visit test.

    Uses patients with at least two visits, truncated to the smallest
    shared visit count; patients with a pairless study in range drop out.
    """
    by_patient: dict[str, list[dict]] = {}
    for study in studies:
        by_patient.setdefault(study["patient_id"], []).append(study)
    eligible = {
        pid: sorted(rows, key=lambda s: s["study_order"])
        for pid, rows in by_patient.items()
        if len(rows) >= 2
    }
    if len(eligible) < 2:
        return None
    k = min(len(rows) for rows in eligible.values())
    matrix = []
    for pid in sorted(eligible):
        row = [study_mean_dice(s) for s in eligible[pid][:k]]
        if all(v is not None for v in row):
            matrix.append(row)
    return matrix if len(matrix) >= 2 else None


def build_report(studies: list[dict], flags: AnalysisFlags, row_errors: list[dict] | None = None) -> dict:
    """Assemble the cohort report (unrounded) from per-study records."""
    studies = sorted(studies, key=lambda s: (s["patient_id"], s["study_order"]))

    pooled: dict[str, list[int]] = {s: [0, 0, 0] for s in SCORE_STRATA}
    dice_by_stratum: dict[str, list[float]] = {s: [] for s in SCORE_STRATA}
    hd_by_stratum: dict[str, list[float]] = {s: [] for s in SCORE_STRATA}
    for study in studies:
        for stratum in SCORE_STRATA:
            det = study["detection"][stratum]
            pooled[stratum][0] += det["tp"]
            pooled[stratum][1] += det["fp"]
            pooled[stratum][2] += det["fn"]
        for pair in study["match"]["pairs"]:
            for stratum in (ALL, pair["stratum"]):
                dice_by_stratum[stratum].append(pair["dice"])
                hd_by_stratum[stratum].append(pair["hausdorff_mm"])

    detection = pooled_detection_scores({s: tuple(v) for s, v in pooled.items()})

    gt_cc = [s["burden"]["gt_cc"] for s in studies]
    pred_cc = [s["burden"]["pred_cc"] for s in studies]
    diff_cc = [s["burden"]["signed_diff_cc"] for s in studies]

    regression = None
    if len(studies) >= 2 and len(set(gt_cc)) > 1:
        fit = linear_regression(gt_cc, pred_cc)
        regression = {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "n": fit.n,
            "x_mean": fit.x_mean,
            "sxx": fit.sxx,
            "residual_se": fit.residual_se,
            "t_crit_95": fit.t_crit_95,
        }
    agreement = None
    if len(studies) >= 2:
        ba = bland_altman(gt_cc, pred_cc)
        agreement = {
            "bias_cc": ba.bias,
            "sd_diff_cc": ba.sd_diff,
            "loa_lower_cc": ba.loa_lower,
            "loa_upper_cc": ba.loa_upper,
            "n": len(ba.pairs),
        }

    tests: dict[str, dict | None] = {
        "wilcoxon_burden_gt_vs_pred": (
            _test_record(wilcoxon_signed_rank(gt_cc, pred_cc, TWO_SIDED)) if studies else None
        )
    }
    matrix = friedman_dice_matrix(studies)
    tests["friedman_dice_across_visits"] = _test_record(friedman(matrix)) if matrix else None

    trajectories = []
    by_patient: dict[str, list[dict]] = {}
    for study in studies:
        by_patient.setdefault(study["patient_id"], []).append(study)
    for pid in sorted(by_patient):
        rows = sorted(by_patient[pid], key=lambda s: s["study_order"])
        visits = [
            {
                "study_order": s["study_order"],
                "gt_cc": s["burden"]["gt_cc"],
                "pred_cc": s["burden"]["pred_cc"],
                "signed_diff_cc": s["burden"]["signed_diff_cc"],
            }
            for s in rows
        ]
        gt_vals = [v["gt_cc"] for v in visits]
        pred_vals = [v["pred_cc"] for v in visits]
        trajectories.append(
            {
                "patient_id": pid,
                "visits": visits,
                "gt_deltas_cc": [b - a for a, b in zip(gt_vals, gt_vals[1:])],
                "pred_deltas_cc": [b - a for a, b in zip(pred_vals, pred_vals[1:])],
            }
        )

    report = {
        "schema_version": 1,
        "tool": {"name": "lesiontrack", "version": __version__},
        "flags": asdict(flags),
        "n_patients": len(by_patient),
        "n_studies": len(studies),
        "studies": studies,
        "trajectories": trajectories,
        "aggregates": {
            "detection": {s: asdict(detection[s]) for s in SCORE_STRATA},
            "dice_by_stratum": {s: _mean_sd(v) for s, v in dice_by_stratum.items()},
            "hd_by_stratum": {s: _mean_sd(v) for s, v in hd_by_stratum.items()},
            "burden_gt_cc": _quantile_record(gt_cc),
            "burden_pred_cc": _quantile_record(pred_cc),
            "signed_diff_cc": _quantile_record(diff_cc),
            "regression": regression,
            "bland_altman": agreement,
            "tests": tests,
        },
    }
    if row_errors:
        report["row_errors"] = sorted(row_errors, key=lambda e: (e["patient_id"], e["study_order"]))
    return report


def run_analyze(
    manifest_path,
    flags: AnalysisFlags | None = None,
    out_dir=None,
    keep_going: bool = False,
    threads: int = 1,
    figures: bool = True,
) -> dict:
    """Analyze a cohort manifest; optionally write report, CSVs and figures.

    Returns the rounded, JSON-ready report dict.
    """
    flags = flags or AnalysisFlags()
    manifest = load_manifest(manifest_path)

    records: list[dict] = []
    errors: list[dict] = []

    def _one(row: ManifestRow):
        try:
            return row, analyze_study(row, flags), None
        except LesionTrackError as exc:
            return row, None, str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_one, manifest.rows))
    else:
        outcomes = [_one(row) for row in manifest.rows]

    outcomes.sort(key=lambda o: (o[0].patient_id, o[0].study_order))
    for row, record, error in outcomes:
        if error is not None:
            if not keep_going:
                raise LesionTrackError(
                    f"study ({row.patient_id}, {row.study_order}): {error}"
                )
            errors.append(
                {"patient_id": row.patient_id, "study_order": row.study_order, "error": error}
            )
        else:
            records.append(record)

    if not records:
        raise LesionTrackError("no studies could be analyzed")

    report = round6(build_report(records, flags, errors))
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir / "report.json")
        emit_plot_data(report, out_dir)
        if figures:
            from .plots import render_figures

            render_figures(report, out_dir / "figures")
    return report


# ---------------------------------------------------------------------------
# Report comparison
# ---------------------------------------------------------------------------


def _pair_index(report: dict) -> dict[tuple, tuple[float, float, str]]:
    index = {}
    for study in report["studies"]:
        for pair in study["match"]["pairs"]:
            key = (study["patient_id"], study["study_order"], pair["gt_id"])
            index[key] = (pair["dice"], pair["hausdorff_mm"], pair["stratum"])
    return index


def run_compare(report_a, report_b, alternative: str = TWO_SIDED) -> dict:
    """Paired tests between two reports over the same lesion universe.

    Per-lesion Dice and HD are paired by (patient, study, gt lesion id);
    Wilcoxon runs per stratum, and the across-visit Friedman runs on each
    report's per-study mean Dice.
    """
    if not isinstance(report_a, dict):
        report_a = load_report(report_a)
    if not isinstance(report_b, dict):
        report_b = load_report(report_b)

    idx_a = _pair_index(report_a)
    idx_b = _pair_index(report_b)
    common = sorted(set(idx_a) & set(idx_b))
    if not common:
        raise LesionTrackError("non-overlapping lesion universes: no common matched pairs")

    by_stratum: dict[str, list[tuple]] = {s: [] for s in SCORE_STRATA}
    for key in common:
        da, ha, stratum = idx_a[key]
        db, hb, _ = idx_b[key]
        by_stratum[ALL].append((da, db, ha, hb))
        by_stratum[stratum].append((da, db, ha, hb))

    wilcoxon_dice: dict[str, dict | None] = {}
    wilcoxon_hd: dict[str, dict | None] = {}
    for stratum, rows in by_stratum.items():
        if rows:
            da, db, ha, hb = (list(v) for v in zip(*rows))
            wilcoxon_dice[stratum] = _test_record(wilcoxon_signed_rank(da, db, alternative))
            wilcoxon_hd[stratum] = _test_record(wilcoxon_signed_rank(ha, hb, alternative))
        else:
            wilcoxon_dice[stratum] = None
            wilcoxon_hd[stratum] = None

    friedman_results = {}
    for name, rep in (("report_a", report_a), ("report_b", report_b)):
        matrix = friedman_dice_matrix(rep["studies"])
        friedman_results[name] = _test_record(friedman(matrix)) if matrix else None

    return round6(
        {
            "schema_version": 1,
            "alternative": alternative,
            "n_common_pairs": len(common),
            "wilcoxon_dice": wilcoxon_dice,
            "wilcoxon_hd": wilcoxon_hd,
            "friedman_dice_across_visits": friedman_results,
        }
    )
