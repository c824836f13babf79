"""Transferability scores for detector feature bundles.

Four scores, all driven by the evidence solver on top of box geometry:

* plain evidence score — mean of independent single-target evidence fits
  over the 4 normalized box coordinates, plus (for multi-class bundles)
  over K one-hot class columns; the classic feature-quality baseline.
* unified evidence score — one joint fit of the class-slotted target
  matrix (all 4K columns share a prior/noise precision pair), capturing
  localization and class membership together.
* IoU score — overlap between the boxes predicted by the converged joint
  fit and the ground-truth boxes, mean over objects.
* combined score — zoo-normalized unified score plus ``mu`` times the
  zoo-normalized IoU score.

The combined score only exists relative to a model zoo: both ingredients
are min-max normalized across the zoo before mixing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import evidence, geometry
from ._parallel import worker_count
from .bundle import FeatureBundle

SCORE_CSV_COLUMNS = (
    "model_name",
    "u_logme_raw",
    "iou_logme_raw",
    "u_norm",
    "iou_norm",
    "det_logme",
)


@dataclass(frozen=True)
class ScoreConfig:
    """Knobs shared by all transferability scores.

    Attributes:
        mu: weight of the normalized IoU term in the combined score (>= 0).
        normalization: box target representation, "center" (midpoint/size
            over image dims) or "border" (corners over image dims).
        pyramid: level-assignment config (carried for extractor parity;
            scoring itself never resamples features).
        tol / max_iter: evidence fixed-point controls.
        norm_by_targets: divide log-evidence by M*T (default) or by M.
        joint_unified_fit: fit the full class-slotted target matrix
            (default). When False, the unified score degrades to a joint
            4-column fit on the normalized boxes alone and the IoU score
            reuses that single 4-column map for every object — a simpler
            reading kept for comparison, not recommended.
    """

    mu: float = 1.0
    normalization: str = "center"
    pyramid: geometry.PyramidConfig = field(default_factory=geometry.PyramidConfig)
    tol: float = evidence.DEFAULT_TOL
    max_iter: int = evidence.DEFAULT_MAX_ITER
    norm_by_targets: bool = True
    joint_unified_fit: bool = True

    def __post_init__(self) -> None:
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.normalization not in ("center", "border"):
            raise ValueError(
                f"normalization must be 'center' or 'border', got "
                f"{self.normalization!r}"
            )


@dataclass(frozen=True)
class ZooScores:
    """Raw and zoo-normalized scores for every model in one zoo."""

    model_ids: tuple[str, ...]
    u_logme_raw: np.ndarray
    iou_logme_raw: np.ndarray
    u_norm: np.ndarray
    iou_norm: np.ndarray
    det_logme: np.ndarray
    mu: float

    def to_records(self) -> list[dict]:
        """One dict per model with exactly the score CSV columns."""
        return [
            {
                "model_name": name,
                "u_logme_raw": float(self.u_logme_raw[i]),
                "iou_logme_raw": float(self.iou_logme_raw[i]),
                "u_norm": float(self.u_norm[i]),
                "iou_norm": float(self.iou_norm[i]),
                "det_logme": float(self.det_logme[i]),
            }
            for i, name in enumerate(self.model_ids)
        ]


def normalized_box_targets(bundle: FeatureBundle, cfg: ScoreConfig) -> np.ndarray:
    """(M, 4) regression targets under the configured normalization."""
    boxes = bundle.boxes.astype(np.float64)
    dims = bundle.image_dims.astype(np.float64)
    if cfg.normalization == "center":
        return geometry.center_normalize_boxes(boxes, dims)
    return geometry.border_normalize_boxes(boxes, dims)


def score_logme(bundle: FeatureBundle, cfg: ScoreConfig | None = None) -> float:
    """Mean single-target evidence over box coordinates and class columns.

    Each of the 4 normalized box coordinates is fit independently with its
    own precision pair; for multi-class bundles each of the K one-hot label
    columns is fit the same way. The score is the mean of the regression
    average and (when present) the classification average.
    """
    cfg = cfg or ScoreConfig()
    features = bundle.features.astype(np.float64)
    cache = evidence.spectral_decompose(features)
    targets = normalized_box_targets(bundle, cfg)

    def solve(column: np.ndarray) -> float:
        return evidence.maximize_evidence(
            features,
            column,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            norm_by_targets=cfg.norm_by_targets,
            cache=cache,
        ).logml

    regression = float(np.mean([solve(targets[:, j]) for j in range(4)]))
    sub_scores = [regression]
    if bundle.num_classes >= 2:
        labels = bundle.labels.astype(np.int64)
        one_hot = np.zeros((bundle.num_objects, bundle.num_classes))
        one_hot[np.arange(bundle.num_objects), labels] = 1.0
        classification = float(
            np.mean([solve(one_hot[:, c]) for c in range(bundle.num_classes)])
        )
        sub_scores.append(classification)
    return float(np.mean(sub_scores))


def score_u_logme(
    bundle: FeatureBundle, cfg: ScoreConfig | None = None
) -> tuple[float, evidence.EvidenceSolution]:
    """Joint evidence of the class-slotted box targets.

    Returns the normalized log-evidence together with the converged
    solution so the IoU score can reuse the fitted weight matrix.
    """
    cfg = cfg or ScoreConfig()
    features = bundle.features.astype(np.float64)
    targets = normalized_box_targets(bundle, cfg)
    if cfg.joint_unified_fit:
        targets = geometry.expand_unified_labels(
            targets, bundle.labels.astype(np.int64), bundle.num_classes
        ).matrix
    solution = evidence.maximize_evidence(
        features,
        targets,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        norm_by_targets=cfg.norm_by_targets,
    )
    return solution.logml, solution


def score_iou_logme(
    bundle: FeatureBundle,
    solution: evidence.EvidenceSolution,
    cfg: ScoreConfig | None = None,
) -> float:
    """Mean IoU between fitted-weight box predictions and ground truth.

    For the class-slotted fit (weights D x 4K) each object's prediction
    uses only the 4-column block of its own class; a plain 4-column fit is
    applied to every object unchanged. Degenerate predictions score 0, so
    the result always lies in [0, 1].
    """
    cfg = cfg or ScoreConfig()
    features = bundle.features.astype(np.float64)
    targets = normalized_box_targets(bundle, cfg)
    weights = solution.weights
    num_slots = 4 * bundle.num_classes
    if weights.shape[1] == 4:
        preds = features @ weights
    elif weights.shape[1] == num_slots:
        all_preds = features @ weights  # (M, 4K)
        cols = 4 * bundle.labels.astype(np.int64)[:, None] + np.arange(4)[None, :]
        preds = np.take_along_axis(all_preds, cols, axis=1)
    else:
        raise ValueError(
            f"solution weights have {weights.shape[1]} columns; expected 4 "
            f"or {num_slots} for this bundle"
        )
    if cfg.normalization == "center":
        ious = geometry.iou_center_pairs(preds, targets)
    else:
        ious = geometry.iou_corner_pairs(preds, targets)
    return float(np.mean(ious))


def _min_max_normalize(values: np.ndarray) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def score_det_logme(
    zoo: list[FeatureBundle], cfg: ScoreConfig | None = None
) -> ZooScores:
    """Combined zoo score: normalized unified evidence + mu * normalized IoU.

    Models are scored concurrently (capped by TRANSFER_RANK_THREADS); the
    min-max normalization over the zoo is a sequential reduction at the
    end. A vector of identical raw scores normalizes to all 0.5 so that
    degenerate zoos still produce a total order.

    Raises:
        ValueError: fewer than 2 bundles, or bundles disagree on the class
            count (the slotted target layout must match across the zoo).
    """
    cfg = cfg or ScoreConfig()
    if len(zoo) < 2:
        raise ValueError("combined scoring requires a zoo of >= 2 bundles")
    class_counts = {b.num_classes for b in zoo}
    if len(class_counts) > 1:
        raise ValueError(
            f"zoo bundles disagree on class count: {sorted(class_counts)}"
        )

    def score_one(b: FeatureBundle) -> tuple[float, float]:
        u_score, solution = score_u_logme(b, cfg)
        return u_score, score_iou_logme(b, solution, cfg)

    with ThreadPoolExecutor(max_workers=worker_count(len(zoo))) as pool:
        results = list(pool.map(score_one, zoo))

    u_raw = np.array([r[0] for r in results])
    iou_raw = np.array([r[1] for r in results])
    u_norm = _min_max_normalize(u_raw)
    iou_norm = _min_max_normalize(iou_raw)
    return ZooScores(
        model_ids=tuple(b.model_name for b in zoo),
        u_logme_raw=u_raw,
        iou_logme_raw=iou_raw,
        u_norm=u_norm,
        iou_norm=iou_norm,
        det_logme=u_norm + cfg.mu * iou_norm,
        mu=cfg.mu,
    )
