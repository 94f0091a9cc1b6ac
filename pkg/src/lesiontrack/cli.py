"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .errors import LesionTrackError
from .manifest import load_manifest  # noqa: F401  (re-exported for CLI users)
from .pipeline import AnalysisFlags, run_analyze, run_compare
from .report import emit_plot_data, load_report, write_report


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="lesiontrack",
        description="Lesion detection/segmentation evaluation and longitudinal burden tracking.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    analyze = sub.add_parser(
        "analyze",
        help="run the full pipeline over a cohort manifest",
        description="Analyze a cohort of gt/pred mask pairs and write report.json, plot CSVs and figures.",
    )
    analyze.add_argument("manifest", help="cohort manifest (.csv or .json)")
    analyze.add_argument("--out", required=True, help="output directory")
    analyze.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=26)
    analyze.add_argument("--min-diameter-mm", type=float, default=3.0,
                         help="micro-nodule exclusion threshold (default 3.0)")
    analyze.add_argument("--min-cluster-voxels", type=int, default=2,
                         help="drop instances below this voxel count (default 2)")
    analyze.add_argument("--repair-gap", type=int, default=0,
                         help="fill z-gaps up to this many slices; 0 = off (default)")
    analyze.add_argument("--min-match-dice", type=float, default=0.0,
                         help="minimum pairwise Dice for a detection match (default 0)")
    analyze.add_argument("--keep-going", action="store_true",
                         help="record per-row errors and continue instead of aborting")
    analyze.add_argument("--threads", type=int, default=1, help="worker pool size (default 1)")
    analyze.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                         help="render figure PNGs alongside the CSVs (default on)")

    compare = sub.add_parser(
        "compare",
        help="paired statistics between two analyze reports",
        description="Pair per-lesion Dice/HD across two reports and run Wilcoxon/Friedman tests.",
    )
    compare.add_argument("report_a")
    compare.add_argument("report_b")
    compare.add_argument("--out", help="directory for compare.json (stdout summary otherwise)")
    compare.add_argument("--alternative", choices=("two-sided", "greater", "less"),
                         default="two-sided")

    plot = sub.add_parser(
        "plot-data",
        help="re-emit the CSV plot bundle (and figures) from an existing report",
    )
    plot.add_argument("report")
    plot.add_argument("--out", required=True)
    plot.add_argument("--figures", action=argparse.BooleanOptionalAction, default=False)

    phantom = sub.add_parser(
        "phantom",
        help="generate a synthetic sphere cohort (NIfTI volumes + manifest) from a spec JSON",
    )
    phantom.add_argument("spec", help="phantom cohort spec (JSON)")
    phantom.add_argument("--out", required=True)
    return parser


def _cmd_analyze(args) -> int:
    flags = AnalysisFlags(
        connectivity=args.connectivity,
        min_diameter_mm=args.min_diameter_mm,
        min_cluster_voxels=args.min_cluster_voxels,
        repair_gap=args.repair_gap,
        min_match_dice=args.min_match_dice,
    )
    report = run_analyze(
        args.manifest,
        flags,
        out_dir=args.out,
        keep_going=args.keep_going,
        threads=args.threads,
        figures=args.figures,
    )
    agg = report["aggregates"]
    det = agg["detection"]["all"]
    print(f"analyzed {report['n_studies']} studies / {report['n_patients']} patients")
    print(
        f"detection (all): P={det['precision']:.3f} S={det['sensitivity']:.3f} F1={det['f1']:.3f}"
        f"  [tp={det['tp']} fp={det['fp']} fn={det['fn']}]"
    )
    dice = agg["dice_by_stratum"]["all"]
    if dice["n"]:
        sd = f" +/- {dice['sd']:.3f}" if dice["sd"] is not None else ""
        print(f"dice (all, n={dice['n']}): {dice['mean']:.3f}{sd}")
    if report.get("row_errors"):
        print(f"warning: {len(report['row_errors'])} studies failed (see report.row_errors)", file=sys.stderr)
    print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


def _cmd_compare(args) -> int:
    result = run_compare(args.report_a, args.report_b, alternative=args.alternative)
    if args.out:
        path = write_report(result, Path(args.out) / "compare.json")
        print(f"comparison written to {path}")
    for stratum, rec in result["wilcoxon_dice"].items():
        if rec is not None:
            print(
                f"wilcoxon dice [{stratum}]: p={rec['p_value']:.4g} "
                f"r={rec.get('effect_size_r', 0.0):.3f} n={rec['n_effective']}"
            )
    return 0


def _cmd_plot_data(args) -> int:
    report = load_report(args.report)
    paths = emit_plot_data(report, args.out)
    if args.figures:
        from .plots import render_figures

        paths += render_figures(report, Path(args.out) / "figures")
    for p in paths:
        print(p)
    return 0


def _cmd_phantom(args) -> int:
    from .phantom_cohort import generate_cohort

    manifest_path = generate_cohort(args.spec, args.out)
    print(f"phantom cohort written; manifest at {manifest_path}")
    return 0


_COMMANDS = {
    "analyze": _cmd_analyze,
    "compare": _cmd_compare,
    "plot-data": _cmd_plot_data,
    "phantom": _cmd_phantom,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except LesionTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
