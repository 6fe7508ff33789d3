from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Bag, BagClassifier, CachedEvaluator, MILError
from .kernels import SHAP_FULL_WEIGHT, KernelSpec

RIDGE = 1e-8


class DegenerateSampleError(MILError):
    pass


@dataclass
class SurrogateFit:
    phi0: float
    phis: np.ndarray
    c: int
    residual_loss: float
    coalition_count: int
    distinct_coalitions: int


def solve_weighted(Z: np.ndarray, Y: np.ndarray, w: np.ndarray, ridge: float = RIDGE):
    """Weighted ridge least squares with an unpenalised intercept.

    ``Z`` is ``n x k`` (0/1), ``Y`` is ``n`` or ``n x m``. Returns
    ``(intercepts, coefs, losses)`` where ``coefs`` is ``k x m`` and each loss is
    the weighted sum of squared residuals.
    """
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    n, k = Z.shape
    A = np.hstack([np.ones((n, 1)), Z])
    Aw = A * w[:, None]
    gram = A.T @ Aw
    reg = np.full(k + 1, ridge)
    reg[0] = 0.0
    gram[np.diag_indices_from(gram)] += reg
    try:
        beta = np.linalg.solve(gram, Aw.T @ Y)
    except np.linalg.LinAlgError:
        raise DegenerateSampleError("normal equations are singular even with the ridge term") from None
    resid = Y - A @ beta
    losses = (w[:, None] * resid**2).sum(axis=0)
    if squeeze:
        return beta[0, 0], beta[1:, 0], losses[0]
    return beta[0], beta[1:], losses


def normalised_weights(kernel: KernelSpec, masks: np.ndarray, ranks=None) -> np.ndarray:
    """Kernel weights rescaled so the partial coalitions average 1.

    Rescaling leaves the weighted fit unchanged but keeps the ridge term and
    the pinned full-coalition weight on a fixed scale regardless of ``k``.
    """
    w = kernel.weights(masks, ranks)
    full = masks.all(axis=1)
    if (~full).any():
        w = w / w[~full].mean()
    if kernel.variant == "shap":
        w[full] = SHAP_FULL_WEIGHT
    return w


def _check_sample(masks):
    if len(masks) < 2 or (masks == masks[0]).all():
        raise DegenerateSampleError("all sampled coalitions are identical")


def fit_surrogate(
    model: BagClassifier,
    bag: Bag,
    c: int,
    coalitions,
    kernel: KernelSpec,
    ranks=None,
    evaluator: CachedEvaluator | None = None,
) -> SurrogateFit:
    """Fit ``F_c(S) ~ phi0 + sum_i phi_i z_i`` over the given coalitions."""
    masks = np.asarray(coalitions, dtype=bool)
    if masks.ndim != 2 or masks.shape[1] != bag.k:
        raise ValueError(f"coalitions must be n x {bag.k}")
    if len(masks) < bag.k + 2:
        raise DegenerateSampleError(f"need at least k + 2 = {bag.k + 2} coalitions, got {len(masks)}")
    _check_sample(masks)
    ev = evaluator or CachedEvaluator(model, bag)
    y = ev(masks)[:, c]
    w = normalised_weights(kernel, masks, ranks)
    phi0, phis, loss = solve_weighted(masks, y, w)
    return SurrogateFit(float(phi0), phis, c, float(loss), len(masks), len({m.tobytes() for m in masks}))


def fit_all_classes(ev: CachedEvaluator, masks: np.ndarray, kernel: KernelSpec, classes, ranks=None) -> dict:
    """One surrogate per class over a shared sample; classifier outputs come from the cache."""
    _check_sample(masks)
    outputs = ev(masks)
    w = normalised_weights(kernel, masks, ranks)
    phi0, phis, losses = solve_weighted(masks, outputs[:, classes], w)
    distinct = len({m.tobytes() for m in masks})
    return {
        c: SurrogateFit(float(phi0[j]), phis[:, j], c, float(losses[j]), len(masks), distinct)
        for j, c in enumerate(classes)
    }
