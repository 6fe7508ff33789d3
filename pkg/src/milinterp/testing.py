"""Analytic bag classifiers with known attributions, for tests and sanity checks.

Outputs stay valid class distributions for any bag of up to ``max_bag``
instances: per-instance and pairwise terms sum to zero across classes and are
scaled so the total moves a probability less than ``1/C`` away from uniform.
"""

from __future__ import annotations

import numpy as np

from .core import BagClassifier


class ConstantClassifier(BagClassifier):
    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        super().__init__(len(p))
        self.probs = p

    def _forward(self, x):
        return self.probs.copy()

    def _forward_masks(self, x, masks):
        return np.tile(self.probs, (len(masks), 1))


def _centred(t: np.ndarray) -> np.ndarray:
    return t - t.mean(axis=-1, keepdims=True)


class AdditiveClassifier(BagClassifier):
    """``F(S) = 1/C + sum_{i in S} g(x_i)`` with ``g`` summing to zero over classes."""

    def __init__(self, num_classes: int, feature_dim: int, seed: int = 0, max_bag: int = 16):
        super().__init__(num_classes)
        rng = np.random.default_rng(seed)
        self.A = rng.normal(size=(feature_dim, num_classes))
        # |g_c| <= 2 * scale, so max_bag terms shift each class by at most 1/(2C).
        self.scale = 1.0 / (4 * num_classes * max_bag)
        self.max_bag = max_bag

    def contributions(self, x: np.ndarray) -> np.ndarray:
        """Per-instance terms, ``k x C``."""
        # row-wise reduction, not BLAS: an instance must score identically alone and inside a bag
        return self.scale * _centred(np.tanh((np.atleast_2d(x)[:, :, None] * self.A).sum(axis=1)))

    def _forward(self, x):
        return np.full(self.num_classes, 1.0 / self.num_classes) + self.contributions(x).sum(axis=0)

    def _forward_masks(self, x, masks):
        return 1.0 / self.num_classes + masks.astype(float) @ self.contributions(x)


class InteractionClassifier(AdditiveClassifier):
    """Additive terms plus symmetric pairwise interactions ``h(x_i, x_j)``."""

    def __init__(self, num_classes: int, feature_dim: int, seed: int = 0, max_bag: int = 16):
        super().__init__(num_classes, feature_dim, seed, max_bag)
        rng = np.random.default_rng(seed + 1)
        self.B = rng.normal(size=(feature_dim, num_classes))
        self.pair_scale = 1.0 / (4 * num_classes * max_bag * (max_bag - 1))

    def pair_terms(self, x: np.ndarray) -> np.ndarray:
        """``k x k x C`` symmetric interaction terms with a zero diagonal."""
        u = np.atleast_2d(x) @ self.B
        h = self.pair_scale * _centred(np.tanh(u[:, None, :] * u[None, :, :]))
        h[np.arange(len(u)), np.arange(len(u))] = 0.0
        return h

    def _forward(self, x):
        return super()._forward(x) + 0.5 * self.pair_terms(x).sum(axis=(0, 1))

    def _forward_masks(self, x, masks):
        m = masks.astype(float)
        pairs = np.einsum("ni,ijc,nj->nc", m, self.pair_terms(x), m)
        return super()._forward_masks(x, masks) + 0.5 * pairs
