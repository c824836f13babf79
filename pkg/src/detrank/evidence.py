"""Marginal-likelihood maximization for a Bayesian linear model.

Given features F (M x D) and targets Y (M x T), the model places an
isotropic Gaussian prior with precision ``alpha`` on the weights and
Gaussian observation noise with precision ``beta`` on the targets. Both
precisions are fit by the classic fixed-point iteration on the evidence;
all T target columns share one (alpha, beta) pair, treating the targets
as M*T scalar observations.

Two equivalent solvers are provided:

* :func:`maximize_evidence` — fast path that eigendecomposes the D x D
  Gram matrix once and runs every iteration in O(D*T);
* :func:`naive_maximize_evidence` — a deliberately independent reference
  that forms and inverts the posterior precision matrix every iteration.

The second exists purely as a correctness oracle for the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

LOG_2PI = math.log(2.0 * math.pi)

# Gram eigenvalues below this are treated as exact zeros.
EIGENVALUE_FLOOR = 1e-10
# Squared residuals are floored here so beta stays finite on exact fits.
RESIDUAL_FLOOR = 1e-12
# Precisions are clamped into this range to keep every iterate positive
# and the log-evidence finite even on degenerate inputs.
PRECISION_MIN = 1e-12
PRECISION_MAX = 1e12

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class SpectralCache:
    """Eigendecomposition of the feature Gram matrix F^T F.

    ``eigvecs @ diag(eigvals) @ eigvecs.T`` reconstructs the Gram matrix;
    eigenvalues below :data:`EIGENVALUE_FLOOR` are clamped to zero.
    """

    eigvecs: np.ndarray
    eigvals: np.ndarray


@dataclass(frozen=True)
class EvidenceSolution:
    """Converged state of one evidence maximization.

    Attributes:
        alpha: prior precision (> 0).
        beta: noise precision (> 0).
        gamma: effective number of well-determined parameters (>= 0).
        weights: posterior mean weight matrix, shape (D, T).
        logml: log marginal evidence normalized by the observation count.
        iterations: fixed-point iterations performed.
        converged: whether both precisions met the relative tolerance.
    """

    alpha: float
    beta: float
    gamma: float
    weights: np.ndarray
    logml: float
    iterations: int
    converged: bool


def _as_feature_matrix(features: np.ndarray) -> np.ndarray:
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {F.shape}")
    if not np.isfinite(F).all():
        raise ValueError("features contain non-finite values")
    return F


def _as_target_matrix(targets: np.ndarray, num_rows: int) -> np.ndarray:
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != num_rows:
        raise ValueError(f"targets must be ({num_rows}, T), got shape {Y.shape}")
    if not np.isfinite(Y).all():
        raise ValueError("targets contain non-finite values")
    return Y


def spectral_decompose(features: np.ndarray) -> SpectralCache:
    """Eigendecompose F^T F once so solves against many targets are cheap.

    Raises:
        NumericalError: the symmetric eigensolver failed to converge.
    """
    F = _as_feature_matrix(features)
    gram = F.T @ F
    gram = (gram + gram.T) / 2.0
    try:
        eigvals, eigvecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Gram eigendecomposition failed: {exc}") from exc
    eigvals = np.where(eigvals < EIGENVALUE_FLOOR, 0.0, eigvals)
    return SpectralCache(eigvecs=eigvecs, eigvals=eigvals)


def _clamp_precision(value: float) -> float:
    return min(max(value, PRECISION_MIN), PRECISION_MAX)


def _normalized(logml_total: float, num_rows: int, num_targets: int,
                norm_by_targets: bool) -> float:
    return logml_total / (num_rows * num_targets if norm_by_targets else num_rows)


def maximize_evidence(
    features: np.ndarray,
    targets: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    norm_by_targets: bool = True,
    cache: SpectralCache | None = None,
) -> EvidenceSolution:
    """Fit (alpha, beta) by fixed point and return the evidence solution.

    Starting from alpha = beta = 1, each iteration computes the posterior
    mean through the Gram eigenbasis, the effective dimensionality gamma,
    and then re-estimates alpha = gamma / |m|^2 and
    beta = (M*T - gamma) / |F m - Y|^2. Iteration stops when both
    precisions change by a relative factor below ``tol``.

    Args:
        features: (M, D) feature matrix, M >= 2.
        targets: (M,) or (M, T) target matrix.
        tol: relative convergence tolerance on alpha and beta jointly.
        max_iter: iteration cap; on hitting it the best iterate is
            returned with ``converged=False``.
        norm_by_targets: divide the log-evidence by M*T (default) instead
            of by M.
        cache: optional precomputed :func:`spectral_decompose` output for
            these features.

    Returns:
        EvidenceSolution; ``logml`` is finite on every input accepted by
        the preconditions (exact fits have their residual floored).
    """
    F = _as_feature_matrix(features)
    num_rows, num_feats = F.shape
    if num_rows < 2:
        raise ValueError("need at least 2 observations")
    Y = _as_target_matrix(targets, num_rows)
    num_targets = Y.shape[1]

    if cache is None:
        cache = spectral_decompose(F)
    eigvecs, eigvals = cache.eigvecs, cache.eigvals

    projected = eigvecs.T @ (F.T @ Y)  # (D, T) targets in the eigenbasis
    targets_sq = float(np.sum(Y * Y))

    def step(alpha: float, beta: float):
        shrink = alpha + beta * eigvals
        coeff = beta * projected / shrink[:, None]  # weights in the eigenbasis
        weights_sq = float(np.sum(coeff * coeff))
        # |F m - Y|^2 expanded through the eigenbasis; clamp tiny negative
        # round-off since the exact value is non-negative.
        residual_sq = (
            targets_sq
            - 2.0 * float(np.sum(coeff * projected))
            + float(np.sum(eigvals[:, None] * coeff * coeff))
        )
        residual_sq = max(residual_sq, 0.0)
        gamma = num_targets * float(np.sum(beta * eigvals / shrink))
        return shrink, coeff, weights_sq, residual_sq, gamma

    alpha = beta = 1.0
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        _, _, weights_sq, residual_sq, gamma = step(alpha, beta)
        alpha_new = _clamp_precision(gamma / max(weights_sq, RESIDUAL_FLOOR))
        beta_new = _clamp_precision(
            (num_rows * num_targets - gamma) / max(residual_sq, RESIDUAL_FLOOR)
        )
        converged = (
            abs(alpha_new - alpha) < tol * abs(alpha)
            and abs(beta_new - beta) < tol * abs(beta)
        )
        alpha, beta = alpha_new, beta_new
        if converged:
            break

    shrink, coeff, weights_sq, residual_sq, gamma = step(alpha, beta)
    weights = eigvecs @ coeff
    logml_total = 0.5 * (
        num_rows * num_targets * math.log(beta)
        + num_feats * num_targets * math.log(alpha)
        - num_rows * num_targets * LOG_2PI
        - beta * residual_sq
        - alpha * weights_sq
        - num_targets * float(np.sum(np.log(shrink)))
    )
    return EvidenceSolution(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        weights=weights,
        logml=_normalized(logml_total, num_rows, num_targets, norm_by_targets),
        iterations=iterations,
        converged=converged,
    )


def naive_maximize_evidence(
    features: np.ndarray,
    targets: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    norm_by_targets: bool = True,
) -> EvidenceSolution:
    """Reference solver with the same contract as :func:`maximize_evidence`.

    Forms the posterior precision A = alpha*I + beta*F^T F explicitly each
    iteration, solves for the weights, and reads gamma off the trace of
    A^{-1}. Quadratic per-iteration cost; exists as an independent oracle.
    """
    F = _as_feature_matrix(features)
    num_rows, num_feats = F.shape
    if num_rows < 2:
        raise ValueError("need at least 2 observations")
    Y = _as_target_matrix(targets, num_rows)
    num_targets = Y.shape[1]

    gram = F.T @ F
    gram = (gram + gram.T) / 2.0
    cross = F.T @ Y
    identity = np.eye(num_feats)

    def step(alpha: float, beta: float):
        posterior_precision = alpha * identity + beta * gram
        try:
            weights = beta * np.linalg.solve(posterior_precision, cross)
            precision_inv = np.linalg.inv(posterior_precision)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"posterior precision solve failed: {exc}") from exc
        residual = F @ weights - Y
        residual_sq = float(np.sum(residual * residual))
        weights_sq = float(np.sum(weights * weights))
        gamma = num_targets * (num_feats - alpha * float(np.trace(precision_inv)))
        gamma = max(gamma, 0.0)
        return posterior_precision, weights, weights_sq, residual_sq, gamma

    alpha = beta = 1.0
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        _, _, weights_sq, residual_sq, gamma = step(alpha, beta)
        alpha_new = _clamp_precision(gamma / max(weights_sq, RESIDUAL_FLOOR))
        beta_new = _clamp_precision(
            (num_rows * num_targets - gamma) / max(residual_sq, RESIDUAL_FLOOR)
        )
        converged = (
            abs(alpha_new - alpha) < tol * abs(alpha)
            and abs(beta_new - beta) < tol * abs(beta)
        )
        alpha, beta = alpha_new, beta_new
        if converged:
            break

    posterior_precision, weights, weights_sq, residual_sq, gamma = step(alpha, beta)
    sign, logdet = np.linalg.slogdet(posterior_precision)
    if sign <= 0:
        raise NumericalError("posterior precision is not positive definite")
    logml_total = 0.5 * (
        num_rows * num_targets * math.log(beta)
        + num_feats * num_targets * math.log(alpha)
        - num_rows * num_targets * LOG_2PI
        - beta * residual_sq
        - alpha * weights_sq
        - num_targets * float(logdet)
    )
    return EvidenceSolution(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        weights=weights,
        logml=_normalized(logml_total, num_rows, num_targets, norm_by_targets),
        iterations=iterations,
        converged=converged,
    )
