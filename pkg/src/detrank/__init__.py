"""Rank pre-trained object detectors by predicted transferability.

The package scores detector feature bundles (object-level features plus
ground-truth boxes) with evidence-based regression scores and classical
baselines, combines them into a zoo-normalized ranking, and evaluates
any ranking against fine-tuning ground truth with rank-correlation,
selection, and subset-stability metrics.
"""

from .bundle import (
    BundleManifest,
    FeatureBundle,
    expected_file_size,
    manifest_path,
    read_bundle,
    synth_bundle,
    validate_bundle,
    write_bundle,
)
from .errors import (
    BundleCorruptionError,
    BundleFormatError,
    BundleValidationError,
    DetrankError,
    NotApplicableError,
    NumericalError,
)
from .evidence import (
    EvidenceSolution,
    SpectralCache,
    maximize_evidence,
    naive_maximize_evidence,
    spectral_decompose,
)
from .geometry import (
    BorderBox,
    CenterBox,
    PyramidConfig,
    UnifiedLabelMatrix,
    assign_pyramid_level,
    assign_pyramid_levels,
    border_normalize_boxes,
    center_normalize_boxes,
    expand_unified_labels,
    iou_center_pairs,
    iou_corner_pairs,
    iou_pair,
    to_border_normalized,
    to_center_normalized,
)
from .baselines import (
    FdaProjection,
    ScatterPair,
    compute_scatter,
    fit_fda_projection,
    knas_score,
    sfda_score,
    sfda_score_arrays,
)
from .ranking import (
    FixtureTable,
    OrdinalResult,
    RankRecord,
    ReproCell,
    ReproReport,
    StabilityReport,
    StabilityRow,
    compute_stability,
    kendall_tau_plain,
    kendall_tau_weighted,
    packaged_fixtures_dir,
    pearson_weighted,
    read_fixture_csv,
    recall_at_1,
    rel_at_1,
    reproduce_tables,
    sample_subsets,
    unrank_combination,
)
from .scores import (
    ScoreConfig,
    ZooScores,
    normalized_box_targets,
    score_det_logme,
    score_iou_logme,
    score_logme,
    score_u_logme,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "DetrankError",
    "BundleFormatError",
    "BundleCorruptionError",
    "BundleValidationError",
    "NotApplicableError",
    "NumericalError",
    # bundle container
    "FeatureBundle",
    "BundleManifest",
    "read_bundle",
    "write_bundle",
    "validate_bundle",
    "synth_bundle",
    "manifest_path",
    "expected_file_size",
    # geometry
    "CenterBox",
    "BorderBox",
    "PyramidConfig",
    "UnifiedLabelMatrix",
    "to_center_normalized",
    "to_border_normalized",
    "center_normalize_boxes",
    "border_normalize_boxes",
    "assign_pyramid_level",
    "assign_pyramid_levels",
    "expand_unified_labels",
    "iou_pair",
    "iou_corner_pairs",
    "iou_center_pairs",
    # evidence
    "SpectralCache",
    "EvidenceSolution",
    "spectral_decompose",
    "maximize_evidence",
    "naive_maximize_evidence",
    # scores
    "ScoreConfig",
    "ZooScores",
    "normalized_box_targets",
    "score_logme",
    "score_u_logme",
    "score_iou_logme",
    "score_det_logme",
    # baselines
    "ScatterPair",
    "FdaProjection",
    "compute_scatter",
    "fit_fda_projection",
    "sfda_score",
    "sfda_score_arrays",
    "knas_score",
    # ranking / evaluation
    "RankRecord",
    "kendall_tau_plain",
    "kendall_tau_weighted",
    "rel_at_1",
    "recall_at_1",
    "pearson_weighted",
    "sample_subsets",
    "unrank_combination",
    "StabilityRow",
    "StabilityReport",
    "compute_stability",
    "FixtureTable",
    "read_fixture_csv",
    "packaged_fixtures_dir",
    "ReproCell",
    "OrdinalResult",
    "ReproReport",
    "reproduce_tables",
]
