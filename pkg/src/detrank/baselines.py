"""Comparison baselines: class-separability (regularized Fisher
discriminant) and gradient-kernel scores.

Both consume bundle contents directly — no box geometry involved. The
Fisher score asks how well a shrinkage-regularized discriminant subspace
separates the object classes; the gradient-kernel score is the mean
pairwise inner product of per-object gradient vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bundle import FeatureBundle
from .errors import NotApplicableError, NumericalError

logger = logging.getLogger(__name__)

# Below this smallest eigenvalue the regularized within-class scatter is
# treated as ill-conditioned and gets an extra diagonal jitter.
CONDITION_FLOOR = 1e-10
JITTER = 1e-8


@dataclass(frozen=True)
class ScatterPair:
    """Between/within-class scatter and the statistics behind them."""

    between: np.ndarray
    within: np.ndarray
    class_means: np.ndarray
    global_mean: np.ndarray
    class_counts: np.ndarray


@dataclass(frozen=True)
class FdaProjection:
    """Discriminant basis plus the shrinkage state used to compute it.

    ``jittered`` records whether the regularized within-class scatter was
    ill-conditioned and received an extra diagonal jitter.
    """

    basis: np.ndarray
    shrinkage: float
    shrinkage_rate: float
    jittered: bool


def compute_scatter(
    features: np.ndarray, labels: np.ndarray, num_classes: int
) -> ScatterPair:
    """Between- and within-class scatter matrices of labeled features.

    Raises:
        ValueError: a class id has no objects (its mean is undefined).
    """
    F = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes)
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise ValueError(f"class {int(empty[0])} has no objects")

    global_mean = F.mean(axis=0)
    class_sums = np.zeros((num_classes, F.shape[1]))
    np.add.at(class_sums, labels, F)
    class_means = class_sums / counts[:, None]

    centered_within = F - class_means[labels]
    within = centered_within.T @ centered_within
    offset = class_means - global_mean
    between = (counts[:, None] * offset).T @ offset
    return ScatterPair(
        between=(between + between.T) / 2.0,
        within=(within + within.T) / 2.0,
        class_means=class_means,
        global_mean=global_mean,
        class_counts=counts,
    )


def fit_fda_projection(
    scatter: ScatterPair, shrinkage_rate: float = 1.0
) -> FdaProjection:
    """Solve the regularized discriminant eigenproblem.

    The within-class scatter is blended with the identity using
    shrinkage = exp(-shrinkage_rate * largest_within_eigenvalue); the
    basis maximizes between-class over regularized within-class variance
    and keeps the top min(K-1, D) directions.

    Raises:
        NumericalError: regularized scatter still not positive definite
            after jitter.
    """
    if shrinkage_rate <= 0:
        raise ValueError(f"shrinkage_rate must be positive, got {shrinkage_rate}")
    within, between = scatter.within, scatter.between
    dim = within.shape[0]
    largest_within = float(np.linalg.eigvalsh(within)[-1])
    shrinkage = float(np.exp(-shrinkage_rate * max(largest_within, 0.0)))
    regularized = (1.0 - shrinkage) * within + shrinkage * np.eye(dim)

    eigvals, eigvecs = np.linalg.eigh(regularized)
    jittered = False
    if float(eigvals.min()) < CONDITION_FLOOR:
        jittered = True
        logger.warning(
            "regularized within-class scatter is ill-conditioned "
            "(min eigenvalue %.3e); adding %.0e diagonal jitter",
            float(eigvals.min()),
            JITTER,
        )
        regularized = regularized + JITTER * np.eye(dim)
        eigvals, eigvecs = np.linalg.eigh(regularized)
        if float(eigvals.min()) <= 0.0:
            raise NumericalError(
                "regularized within-class scatter singular even after "
                f"jitter (min eigenvalue {float(eigvals.min()):.3e}, "
                f"shrinkage {shrinkage:.3e})"
            )

    whitener = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    target = whitener @ between @ whitener
    target = (target + target.T) / 2.0
    _, directions = np.linalg.eigh(target)
    num_components = min(scatter.class_counts.size - 1, dim)
    basis = whitener @ directions[:, -num_components:]
    return FdaProjection(
        basis=basis,
        shrinkage=shrinkage,
        shrinkage_rate=shrinkage_rate,
        jittered=jittered,
    )


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def sfda_score_arrays(
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    shrinkage_rate: float = 1.0,
) -> float:
    """Class-separability score of labeled features.

    Features are projected onto the regularized discriminant basis; each
    object gets a Gaussian-classifier logit per class (projected inner
    product with the class mean, minus half the mean's projected energy,
    plus the log class prior) and the score is the mean softmax
    probability assigned to the true class.

    Raises:
        NotApplicableError: single-class input — separability is undefined.
        ValueError: a class id has no objects.
    """
    if num_classes < 2:
        raise NotApplicableError(
            "class-separability score is not applicable to a single-class task"
        )
    F = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    scatter = compute_scatter(F, labels, num_classes)
    projection = fit_fda_projection(scatter, shrinkage_rate)

    projected_feats = F @ projection.basis
    projected_means = scatter.class_means @ projection.basis
    priors = scatter.class_counts / float(F.shape[0])
    logits = (
        projected_feats @ projected_means.T
        - 0.5 * np.sum(projected_means * projected_means, axis=1)[None, :]
        + np.log(priors)[None, :]
    )
    posteriors = _softmax_rows(logits)
    return float(posteriors[np.arange(F.shape[0]), labels].mean())


def sfda_score(bundle: FeatureBundle, shrinkage_rate: float = 1.0) -> float:
    """Bundle adapter for :func:`sfda_score_arrays`."""
    return sfda_score_arrays(
        bundle.features, bundle.labels, bundle.num_classes, shrinkage_rate
    )


def knas_score(gradients: np.ndarray) -> float:
    """Mean pairwise inner product of per-object gradient rows.

    Computed as |sum of rows|^2 / M^2, which equals the mean of all M^2
    Gram entries without ever materializing the Gram matrix.

    Raises:
        ValueError: empty gradient matrix.
    """
    G = np.asarray(gradients, dtype=np.float64)
    if G.ndim != 2:
        raise ValueError(f"gradients must be (M, P), got shape {G.shape}")
    num_rows = G.shape[0]
    if num_rows < 1 or G.size == 0:
        raise ValueError("empty gradient matrix")
    summed = G.sum(axis=0)
    return float(summed @ summed) / float(num_rows * num_rows)
