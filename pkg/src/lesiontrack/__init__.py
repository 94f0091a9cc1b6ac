"""Lesion detection/segmentation evaluation and longitudinal burden tracking.

Quantifies instance-level detection accuracy, per-lesion segmentation
quality (Dice, symmetric Hausdorff distance), and total lesion burden
with interval changes across visits, from pairs of 3D ground-truth and
predicted label masks.
"""

__version__ = "0.1.0"

from .burden import PatientTrajectory, StudyBurden, build_trajectory, region_burden, study_burden
from .detection import (
    DetectionScores,
    MatchResult,
    StratumScores,
    detection_scores,
    match_lesions,
)
from .errors import (
    GridMismatchError,
    LesionTrackError,
    ManifestError,
    PhantomSpecError,
    VolumeFormatError,
)
from .instances import (
    GROUND_TRUTH,
    PREDICTED,
    LesionInstance,
    extract_instances,
    filter_micro_nodules,
    remove_satellite_clusters,
    repair_split_lesions,
)
from .manifest import CohortManifest, ManifestRow, load_manifest
from .morphometry import (
    MICRO,
    SIGNIFICANT,
    SMALL,
    Morphometry,
    measure_all,
    measure_lesion,
    stratify,
)
from .overlap import OverlapScores, boundary_mask, dice, hausdorff, per_pair_scores
from .phantom import (
    ExpectedDetection,
    Perturbation,
    PhantomSpec,
    SphereSpec,
    generate,
    load_phantom_cohort,
    perturb,
)
from .pipeline import AnalysisFlags, analyze_study, build_report, run_analyze, run_compare
from .report import emit_plot_data, load_report, write_report
from .stats import (
    AgreementSummary,
    QuantileSummary,
    RegressionFit,
    TestResult,
    bland_altman,
    friedman,
    linear_regression,
    median_iqr,
    wilcoxon_signed_rank,
)
from .volume_io import (
    GridGeometry,
    LabelVolume,
    assert_same_grid,
    load_label_volume,
    save_label_volume,
    voxel_volume_cc,
)
