"""Render report figures to files: box plots, regression, Bland-Altman,
and per-patient burden trajectories. All data comes straight from the
report dict, so the figures always agree with the CSV bundle."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STRATA_ORDER = ("all", "small", "significant")
_STRATA_LABELS = {"all": "All", "small": "3-10 mm", "significant": "> 1 cm"}
_DPI = 150


def _pair_values(report: dict, field: str) -> dict[str, list[float]]:
    values: dict[str, list[float]] = {s: [] for s in _STRATA_ORDER}
    for study in report["studies"]:
        for pair in study["match"]["pairs"]:
            values["all"].append(pair[field])
            if pair["stratum"] in values:
                values[pair["stratum"]].append(pair[field])
    return values


def _box_by_stratum(report: dict, field: str, ylabel: str, path: Path) -> Path | None:
    values = _pair_values(report, field)
    labels = [ _STRATA_LABELS[s] for s in _STRATA_ORDER if values[s] ]
    data = [values[s] for s in _STRATA_ORDER if values[s]]
    if not data:
        return None
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot(data, tick_labels=labels)
    ax.set_ylabel(ylabel)
    ax.set_xlabel("lesion size stratum")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _regression_figure(report: dict, path: Path) -> Path | None:
    reg = report["aggregates"]["regression"]
    x = np.array([s["burden"]["gt_cc"] for s in report["studies"]], dtype=float)
    y = np.array([s["burden"]["pred_cc"] for s in report["studies"]], dtype=float)
    if x.size == 0:
        return None
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.scatter(x, y, s=18, alpha=0.8)
    lim = max(float(x.max()), float(y.max()), 1.0) * 1.05
    ax.plot([0, lim], [0, lim], color="gray", linewidth=0.8, linestyle=":")
    if reg is not None:
        xs = np.linspace(min(0.0, float(x.min())), lim, 100)
        ys = reg["slope"] * xs + reg["intercept"]
        ax.plot(xs, ys, color="tab:blue", label=f"fit (R$^2$={reg['r_squared']:.2f})")
        if reg["n"] > 2:
            hw = reg["t_crit_95"] * reg["residual_se"] * np.sqrt(
                1.0 / reg["n"] + (xs - reg["x_mean"]) ** 2 / reg["sxx"]
            )
            ax.fill_between(xs, ys - hw, ys + hw, color="tab:blue", alpha=0.2, label="95% CI")
        ax.legend()
    ax.set_xlabel("reference burden (cc)")
    ax.set_ylabel("predicted burden (cc)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _bland_altman_figure(report: dict, path: Path) -> Path | None:
    ba = report["aggregates"]["bland_altman"]
    if ba is None:
        return None
    means = [(s["burden"]["gt_cc"] + s["burden"]["pred_cc"]) / 2.0 for s in report["studies"]]
    diffs = [s["burden"]["signed_diff_cc"] for s in report["studies"]]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(means, diffs, s=18, alpha=0.8)
    ax.axhline(ba["bias_cc"], color="gray", linestyle="--", linewidth=1)
    ax.axhline(ba["loa_upper_cc"], color="tab:red", linestyle="--", linewidth=1)
    ax.axhline(ba["loa_lower_cc"], color="tab:red", linestyle="--", linewidth=1)
    ax.set_xlabel("mean of measurements (cc)")
    ax.set_ylabel("predicted - reference (cc)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _trajectory_figure(report: dict, path: Path) -> Path | None:
    trajectories = report["trajectories"]
    if not trajectories:
        return None
    n = len(trajectories)
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.4 * cols, 2.8 * rows), squeeze=False)
    for i, traj in enumerate(trajectories):
        ax = axes[i // cols][i % cols]
        orders = [v["study_order"] for v in traj["visits"]]
        ax.plot(orders, [v["gt_cc"] for v in traj["visits"]], marker="o", label="reference")
        ax.plot(orders, [v["pred_cc"] for v in traj["visits"]], marker="s", label="predicted")
        ax.set_title(f"patient {traj['patient_id']}", fontsize=10)
        ax.set_xlabel("visit")
        ax.set_ylabel("burden (cc)")
        ax.set_xticks(orders)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_figures(report: dict, out_dir) -> list[Path]:
    """Write all report figures into `out_dir`; returns the created paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        _box_by_stratum(report, "dice", "Dice", out_dir / "dice_by_stratum.png"),
        _box_by_stratum(report, "hausdorff_mm", "Hausdorff distance (mm)", out_dir / "hd_by_stratum.png"),
        _regression_figure(report, out_dir / "regression.png"),
        _bland_altman_figure(report, out_dir / "bland_altman.png"),
        _trajectory_figure(report, out_dir / "trajectories.png"),
    ]
    return [p for p in written if p is not None]
