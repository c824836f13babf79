"""Detector feature extraction into transferability-scoring bundles.

This package converts a detector checkpoint plus a COCO-style annotated
image set into a feature bundle — the binary interchange the scoring
core consumes. It talks to the core exclusively through that file format
and the core's command-line tool.
"""

from .bundlefmt import BUNDLE_SUFFIX, manifest_path, write_feature_bundle
from .dataset import (
    DetectionDataset,
    ImageRecord,
    load_dataset,
    make_synthetic_dataset,
)
from .extract import ExtractionResult, run_extraction
from .jobs import ExtractionJob, parse_job_file
from .levels import PyramidSettings, assign_level
from .model import (
    SUPPORTED_ARCHS,
    build_backbone,
    init_checkpoint,
    load_backbone,
)

__version__ = "0.1.0"

__all__ = [
    "BUNDLE_SUFFIX",
    "DetectionDataset",
    "ExtractionJob",
    "ExtractionResult",
    "ImageRecord",
    "PyramidSettings",
    "SUPPORTED_ARCHS",
    "assign_level",
    "build_backbone",
    "init_checkpoint",
    "load_backbone",
    "load_dataset",
    "make_synthetic_dataset",
    "manifest_path",
    "parse_job_file",
    "run_extraction",
    "write_feature_bundle",
]
