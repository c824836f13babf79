"""Bounding-box representations, normalization, pyramid-level assignment,
class-slotted target expansion, and IoU.

Boxes arrive as corner pixel coordinates (x1, y1, x2, y2) together with the
source-image size. Two normalized representations are supported:

* center form (xc, yc, wc, hc): box midpoint and size, each divided by the
  image dimension, so every coordinate of a valid box lies in [0, 1];
* border form (x1n, y1n, x2n, y2n): corners divided by the image dimension.

The center form is the default regression target everywhere downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class CenterBox(NamedTuple):
    """Normalized center-form box: midpoint (xc, yc) and size (wc, hc)."""

    xc: float
    yc: float
    wc: float
    hc: float


class BorderBox(NamedTuple):
    """Normalized corner-form box."""

    x1n: float
    y1n: float
    x2n: float
    y2n: float


# Object scale (pixels, sqrt of box area) that maps to the base pyramid level.
BASE_LEVEL_SCALE = 224.0


@dataclass(frozen=True)
class PyramidConfig:
    """Size-based assignment of objects to feature-pyramid levels.

    An object whose longest side is below ``small_thresh`` pixels is forced
    to ``min_level``; above ``large_thresh`` it is forced to ``max_level``.
    Both comparisons are strict, so boxes sized exactly at a threshold fall
    through to the logarithmic rule. Otherwise the level is

        floor(base_level + log2(sqrt(w * h) / BASE_LEVEL_SCALE))

    clamped to [min_level, max_level]. Defaults match a 4-level P2..P5
    pyramid with P3 as the base.
    """

    base_level: int = 3
    min_level: int = 2
    max_level: int = 5
    small_thresh: float = 64.0
    large_thresh: float = 512.0

    def __post_init__(self) -> None:
        if not self.min_level <= self.base_level <= self.max_level:
            raise ValueError(
                "need min_level <= base_level <= max_level, got "
                f"{self.min_level}, {self.base_level}, {self.max_level}"
            )
        if self.small_thresh <= 0 or self.large_thresh <= self.small_thresh:
            raise ValueError("need 0 < small_thresh < large_thresh")


@dataclass(frozen=True)
class UnifiedLabelMatrix:
    """Class-slotted box-target matrix.

    Row i of ``matrix`` (shape M x 4K for K classes) holds the
    center-normalized box of object i in the 4-column block of its class,
    ``matrix[i, 4*c : 4*c + 4]``, and zeros everywhere else, so a single
    regression fit carries both the localization and the class-membership
    signal.
    """

    matrix: np.ndarray
    num_classes: int
    source_labels: np.ndarray


def _check_image(width: float, height: float) -> None:
    if not (width > 0 and height > 0):
        raise ValueError(f"image dims must be positive, got {width}x{height}")


def to_center_normalized(
    box: Sequence[float], image: Sequence[float]
) -> CenterBox:
    """Convert a corner pixel box to center form normalized by image size.

    Args:
        box: (x1, y1, x2, y2) in pixels with x1 < x2 and y1 < y2.
        image: (width, height) in pixels.

    Returns:
        CenterBox with xc=(x1+x2)/(2W), yc=(y1+y2)/(2H), wc=(x2-x1)/W,
        hc=(y2-y1)/H.

    Raises:
        ValueError: degenerate box or non-positive image dims.
    """
    x1, y1, x2, y2 = (float(v) for v in box)
    width, height = (float(v) for v in image)
    _check_image(width, height)
    if x2 <= x1 or y2 <= y1:
        raise ValueError(f"degenerate box ({x1}, {y1}, {x2}, {y2})")
    return CenterBox(
        xc=(x1 + x2) / (2.0 * width),
        yc=(y1 + y2) / (2.0 * height),
        wc=(x2 - x1) / width,
        hc=(y2 - y1) / height,
    )


def to_border_normalized(
    box: Sequence[float], image: Sequence[float]
) -> BorderBox:
    """Convert a corner pixel box to corners divided by image size."""
    x1, y1, x2, y2 = (float(v) for v in box)
    width, height = (float(v) for v in image)
    _check_image(width, height)
    return BorderBox(x1 / width, y1 / height, x2 / width, y2 / height)


def center_normalize_boxes(boxes: np.ndarray, image_dims: np.ndarray) -> np.ndarray:
    """Vectorized center normalization.

    Args:
        boxes: (M, 4) corner pixel boxes.
        image_dims: (M, 2) per-object (width, height).

    Returns:
        (M, 4) array of (xc, yc, wc, hc) rows.
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    dims = np.asarray(image_dims, dtype=np.float64)
    w = dims[:, 0]
    h = dims[:, 1]
    out = np.empty_like(boxes)
    out[:, 0] = (boxes[:, 0] + boxes[:, 2]) / (2.0 * w)
    out[:, 1] = (boxes[:, 1] + boxes[:, 3]) / (2.0 * h)
    out[:, 2] = (boxes[:, 2] - boxes[:, 0]) / w
    out[:, 3] = (boxes[:, 3] - boxes[:, 1]) / h
    return out


def border_normalize_boxes(boxes: np.ndarray, image_dims: np.ndarray) -> np.ndarray:
    """Vectorized border normalization: corners divided by (W, H, W, H)."""
    boxes = np.asarray(boxes, dtype=np.float64)
    dims = np.asarray(image_dims, dtype=np.float64)
    return boxes / dims[:, [0, 1, 0, 1]]


def center_to_corner(cbox: Sequence[float], image: Sequence[float]) -> tuple:
    """Invert center normalization back to corner pixel coordinates."""
    xc, yc, wc, hc = (float(v) for v in cbox)
    width, height = (float(v) for v in image)
    _check_image(width, height)
    return (
        (xc - wc / 2.0) * width,
        (yc - hc / 2.0) * height,
        (xc + wc / 2.0) * width,
        (yc + hc / 2.0) * height,
    )


def assign_pyramid_level(
    box_w: float, box_h: float, cfg: PyramidConfig | None = None
) -> int:
    """Pick the feature-pyramid level for an object of the given pixel size.

    Raises:
        ValueError: non-positive box dimensions.
    """
    if cfg is None:
        cfg = PyramidConfig()
    if box_w <= 0 or box_h <= 0:
        raise ValueError(f"box dims must be positive, got {box_w}x{box_h}")
    longest = max(box_w, box_h)
    if longest < cfg.small_thresh:
        return cfg.min_level
    if longest > cfg.large_thresh:
        return cfg.max_level
    level = math.floor(
        cfg.base_level + math.log2(math.sqrt(box_w * box_h) / BASE_LEVEL_SCALE)
    )
    return min(max(level, cfg.min_level), cfg.max_level)


def assign_pyramid_levels(
    widths: np.ndarray, heights: np.ndarray, cfg: PyramidConfig | None = None
) -> np.ndarray:
    """Vectorized :func:`assign_pyramid_level` over parallel (w, h) arrays."""
    if cfg is None:
        cfg = PyramidConfig()
    w = np.asarray(widths, dtype=np.float64)
    h = np.asarray(heights, dtype=np.float64)
    if np.any(w <= 0) or np.any(h <= 0):
        raise ValueError("box dims must be positive")
    level = np.floor(cfg.base_level + np.log2(np.sqrt(w * h) / BASE_LEVEL_SCALE))
    level = np.clip(level, cfg.min_level, cfg.max_level).astype(np.int64)
    longest = np.maximum(w, h)
    level[longest < cfg.small_thresh] = cfg.min_level
    level[longest > cfg.large_thresh] = cfg.max_level
    return level


def expand_unified_labels(
    boxes_cen: np.ndarray, labels: np.ndarray, num_classes: int
) -> UnifiedLabelMatrix:
    """Scatter center-normalized boxes into per-class column blocks.

    Args:
        boxes_cen: (M, 4) center-normalized boxes.
        labels: (M,) zero-based class ids.
        num_classes: class count K.

    Returns:
        UnifiedLabelMatrix whose matrix has shape (M, 4*K).

    Raises:
        ValueError: any label outside [0, K).
    """
    boxes_cen = np.asarray(boxes_cen, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if boxes_cen.ndim != 2 or boxes_cen.shape[1] != 4:
        raise ValueError(f"boxes_cen must be (M, 4), got {boxes_cen.shape}")
    if labels.shape != (boxes_cen.shape[0],):
        raise ValueError("labels length must match box count")
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    bad = np.nonzero((labels < 0) | (labels >= num_classes))[0]
    if bad.size:
        raise ValueError(
            f"label out of range at row {bad[0]}: {labels[bad[0]]} "
            f"(num_classes={num_classes})"
        )
    num_objects = boxes_cen.shape[0]
    unified = np.zeros((num_objects, 4 * num_classes), dtype=np.float64)
    cols = 4 * labels[:, None] + np.arange(4)[None, :]
    np.put_along_axis(unified, cols, boxes_cen, axis=1)
    return UnifiedLabelMatrix(
        matrix=unified, num_classes=num_classes, source_labels=labels
    )


def _center_to_corner_array(boxes: np.ndarray) -> np.ndarray:
    """Center-form array (..., 4) to corner form, clamping sizes at zero."""
    half_w = np.maximum(boxes[..., 2], 0.0) / 2.0
    half_h = np.maximum(boxes[..., 3], 0.0) / 2.0
    return np.stack(
        [
            boxes[..., 0] - half_w,
            boxes[..., 1] - half_h,
            boxes[..., 0] + half_w,
            boxes[..., 1] + half_h,
        ],
        axis=-1,
    )


def iou_corner_pairs(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Elementwise IoU between paired corner-form boxes.

    Predictions with non-positive extent get area 0 and therefore IoU 0;
    pairs with zero union also score 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    ix1 = np.maximum(pred[..., 0], gt[..., 0])
    iy1 = np.maximum(pred[..., 1], gt[..., 1])
    ix2 = np.minimum(pred[..., 2], gt[..., 2])
    iy2 = np.minimum(pred[..., 3], gt[..., 3])
    inter = np.clip(ix2 - ix1, 0.0, None) * np.clip(iy2 - iy1, 0.0, None)
    area_pred = np.clip(pred[..., 2] - pred[..., 0], 0.0, None) * np.clip(
        pred[..., 3] - pred[..., 1], 0.0, None
    )
    area_gt = np.clip(gt[..., 2] - gt[..., 0], 0.0, None) * np.clip(
        gt[..., 3] - gt[..., 1], 0.0, None
    )
    union = area_pred + area_gt - inter
    return np.where(union > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)


def iou_center_pairs(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Elementwise IoU between paired center-form boxes (pred sizes clamped)."""
    return iou_corner_pairs(
        _center_to_corner_array(np.asarray(pred, dtype=np.float64)),
        _center_to_corner_array(np.asarray(gt, dtype=np.float64)),
    )


def iou_pair(a: Sequence[float], b: Sequence[float]) -> float:
    """IoU of one predicted center-form box against one valid center-form box.

    Total on finite inputs: a degenerate prediction (non-positive width or
    height after clamping) or an empty union returns 0.
    """
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    return float(iou_center_pairs(a_arr[None, :], b_arr[None, :])[0])
