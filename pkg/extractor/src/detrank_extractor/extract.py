"""The extraction pipeline: images + annotations + checkpoint -> bundle.

Per image, the backbone+FPN runs once; every ground-truth box is assigned
a pyramid level from its pixel size, cropped from that level's feature map
with ROIAlign (half-pixel aligned), and global-average pooled to one
vector. Rows keep annotation order. Optionally each object also gets the
gradient of a seeded linear classification head at a fixed random sample
of its parameters — the cheap per-object gradient signal some baseline
scores consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision.ops import roi_align

from .bundlefmt import write_feature_bundle
from .dataset import DetectionDataset, ImageRecord, load_dataset
from .jobs import ExtractionJob
from .levels import assign_level
from .model import (
    FPN_CHANNELS,
    FPN_MAX_LEVEL,
    FPN_MIN_LEVEL,
    load_backbone,
)

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass(frozen=True)
class ExtractionResult:
    """Summary of one completed extraction."""

    output: Path
    num_objects: int
    num_classes: int
    feature_dim: int
    levels_used: tuple[int, ...]


def _image_tensor(record: ImageRecord) -> torch.Tensor:
    with Image.open(record.file_path) as image:
        rgb = image.convert("RGB")
        if (rgb.width, rgb.height) != (record.width, record.height):
            raise ValueError(
                f"annotation/image size mismatch for {record.file_path}: "
                f"annotation says {record.width}x{record.height}, image is "
                f"{rgb.width}x{rgb.height}"
            )
        pixels = np.asarray(rgb, dtype=np.float32) / 255.0
    pixels = (pixels - _IMAGENET_MEAN) / _IMAGENET_STD
    return torch.from_numpy(pixels.transpose(2, 0, 1)).unsqueeze(0)


def _pool_image_features(
    feature_maps: dict[str, torch.Tensor],
    record: ImageRecord,
    job: ExtractionJob,
) -> tuple[np.ndarray, np.ndarray]:
    """ROIAlign + global-average pool every box of one image.

    Returns (pooled (n, C) float32, levels (n,) uint8), rows in the
    record's annotation order.
    """
    n = len(record.labels)
    widths = record.boxes[:, 2] - record.boxes[:, 0]
    heights = record.boxes[:, 3] - record.boxes[:, 1]
    levels = np.array(
        [
            assign_level(float(w), float(h), job.pyramid)
            for w, h in zip(widths, heights)
        ],
        dtype=np.uint8,
    )
    pooled = np.empty((n, FPN_CHANNELS), dtype=np.float32)
    for level in np.unique(levels):
        rows = np.nonzero(levels == level)[0]
        boxes = torch.from_numpy(record.boxes[rows].astype(np.float32))
        crops = roi_align(
            feature_maps[str(int(level) - FPN_MIN_LEVEL)],
            [boxes],
            output_size=job.roi_output_size,
            spatial_scale=2.0 ** -int(level),
            sampling_ratio=job.sampling_ratio,
            aligned=True,
        )
        pooled[rows] = crops.mean(dim=(2, 3)).numpy()
    return pooled, levels


def _head_gradients(
    features: np.ndarray, labels: np.ndarray, num_classes: int, job: ExtractionJob
) -> np.ndarray:
    """Per-object gradient of a seeded linear head, at sampled coordinates.

    For logits z = f W + b and cross-entropy at the true label, the
    gradient is closed-form: dW = f ⊗ (softmax(z) − onehot), db = the
    second factor. Each row flattens (dW, db) and keeps a fixed random
    subset of coordinates.
    """
    m, dim = features.shape
    rng = np.random.default_rng(job.gradient_seed)
    head_w = rng.normal(scale=1.0 / np.sqrt(dim), size=(dim, num_classes))
    head_b = rng.normal(scale=0.01, size=num_classes)
    total_params = dim * num_classes + num_classes
    sample_size = min(job.gradient_params, total_params)
    picked = np.sort(rng.choice(total_params, size=sample_size, replace=False))

    logits = features.astype(np.float64) @ head_w + head_b
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[np.arange(m), labels] -= 1.0  # softmax minus one-hot

    gradients = np.empty((m, sample_size), dtype=np.float32)
    weight_mask = picked < dim * num_classes
    weight_rows = picked[weight_mask] // num_classes
    weight_cols = picked[weight_mask] % num_classes
    bias_cols = picked[~weight_mask] - dim * num_classes
    gradients[:, weight_mask] = (
        features[:, weight_rows] * probs[:, weight_cols]
    ).astype(np.float32)
    gradients[:, ~weight_mask] = probs[:, bias_cols].astype(np.float32)
    return gradients


def _extractor_info(job: ExtractionJob, sampled_params: int | None) -> str:
    projection = (
        "none"
        if job.pooled_dim == FPN_CHANNELS
        else f"gaussian({FPN_CHANNELS}->{job.pooled_dim}, seed={job.projection_seed})"
    )
    gradients = (
        "none"
        if sampled_params is None
        else f"linear-head(seed={job.gradient_seed}, sampled={sampled_params})"
    )
    return (
        f"arch={job.arch}; checkpoint={job.checkpoint.name}; "
        f"roi_align={job.roi_output_size}x{job.roi_output_size} "
        f"(aligned, sampling_ratio={job.sampling_ratio}); "
        f"pool=global-average; projection={projection}; "
        f"normalization=imagenet-mean-std; gradients={gradients}"
    )


def run_extraction(job: ExtractionJob) -> ExtractionResult:
    """Execute one job and write its bundle + manifest.

    Raises:
        ValueError: bad job settings, unloadable checkpoint, or
            annotation/image mismatch (nothing is written).
        OSError: unreadable inputs or unwritable output.
    """
    if job.pyramid.min_level < FPN_MIN_LEVEL or job.pyramid.max_level > FPN_MAX_LEVEL:
        raise ValueError(
            f"arch {job.arch} provides pyramid levels "
            f"{FPN_MIN_LEVEL}..{FPN_MAX_LEVEL}, job asks for "
            f"{job.pyramid.min_level}..{job.pyramid.max_level}"
        )
    dataset: DetectionDataset = load_dataset(job.annotations, job.images_dir)
    if dataset.num_objects == 0:
        raise ValueError(f"{job.annotations}: dataset has no annotated objects")
    model = load_backbone(job.arch, job.checkpoint)

    feature_rows: list[np.ndarray] = []
    level_rows: list[np.ndarray] = []
    box_rows: list[np.ndarray] = []
    label_rows: list[np.ndarray] = []
    dim_rows: list[np.ndarray] = []
    with torch.no_grad():
        for record in dataset.images:
            if len(record.labels) == 0:
                continue
            feature_maps = model(_image_tensor(record))
            pooled, levels = _pool_image_features(feature_maps, record, job)
            feature_rows.append(pooled)
            level_rows.append(levels)
            box_rows.append(record.boxes.astype(np.float32))
            label_rows.append(record.labels.astype(np.uint32))
            dim_rows.append(
                np.tile(
                    np.array([record.width, record.height], dtype=np.float32),
                    (len(record.labels), 1),
                )
            )

    features = np.vstack(feature_rows)
    if job.pooled_dim != FPN_CHANNELS:
        rng = np.random.default_rng(job.projection_seed)
        projection = rng.normal(
            scale=1.0 / np.sqrt(FPN_CHANNELS),
            size=(FPN_CHANNELS, job.pooled_dim),
        ).astype(np.float32)
        features = features @ projection
    labels = np.concatenate(label_rows)

    gradients = None
    sampled_params = None
    if job.gradients:
        gradients = _head_gradients(
            features.astype(np.float64),
            labels.astype(np.int64),
            dataset.num_classes,
            job,
        )
        sampled_params = gradients.shape[1]

    levels = np.concatenate(level_rows)
    write_feature_bundle(
        job.output,
        model_name=job.model_name or job.checkpoint.stem,
        dataset_name=dataset.name,
        features=features,
        boxes=np.vstack(box_rows),
        labels=labels,
        image_dims=np.vstack(dim_rows),
        num_classes=dataset.num_classes,
        levels=levels,
        gradients=gradients,
        extractor_info=_extractor_info(job, sampled_params),
    )
    return ExtractionResult(
        output=job.output,
        num_objects=int(features.shape[0]),
        num_classes=dataset.num_classes,
        feature_dim=int(features.shape[1]),
        levels_used=tuple(int(v) for v in np.unique(levels)),
    )
