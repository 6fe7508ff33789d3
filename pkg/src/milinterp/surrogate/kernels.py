"""Coalition weight kernels.

The rank curve ``pi_r`` maps an instance's position in an importance ranking
to a probability. It is used both as the MILLI weight (averaged over the
instances present in a coalition) and as the per-instance inclusion
probability of the ranked Bernoulli sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import ContractViolation, EmptyCoalitionError, MILError

# Weight given to the full coalition under the Shapley kernel, where the exact weight is infinite.
SHAP_FULL_WEIGHT = 1e6
BETA_EPS = 1e-9


class KernelParameterError(MILError, ValueError):
    pass


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise KernelParameterError(f"alpha must lie in [0, 1], got {alpha}")


def beta_hat(alpha: float, beta: float) -> float:
    _check_alpha(alpha)
    return beta if alpha < 0.5 else -beta


def pi_r(rank, k: int, alpha: float, beta: float):
    """Rank curve: ``alpha`` at rank 0 and ``1 - alpha`` at rank ``k``, shaped by ``beta``."""
    if k < 1:
        raise ContractViolation("k must be at least 1")
    bh = beta_hat(alpha, beta)
    r = np.asarray(rank, dtype=float)
    if np.any(r < 0) or np.any(r > k):
        raise ContractViolation(f"rank must lie in [0, {k}]")
    if bh >= 0:
        out = (2 * alpha - 1) * (1 - r / k) * np.exp(-bh * r) + 1 - alpha
    else:
        out = (1 - 2 * alpha) * (1 + (r - k) / k) * np.exp(abs(bh) * (r - k)) + alpha
    return float(out) if out.ndim == 0 else out


def expected_coalition_size(k: int, alpha: float, beta: float) -> float:
    """Closed-form mean coalition size: the integral of ``pi_r`` over ranks ``[0, k]``.

    This is the continuous approximation; the sampler draws integer ranks, whose
    exact mean is :func:`coalition_size_mean`. The two differ by at most about
    ``|1 - 2 alpha| / 2``.
    """
    if k < 1:
        raise ContractViolation("k must be at least 1")
    bh = beta_hat(alpha, beta)
    if abs(bh) < BETA_EPS:
        return k / 2.0
    b = abs(bh)
    # exp(-b k) + b k - 1, computed without cancellation for small b k
    tail = math.expm1(-b * k) + b * k
    if bh >= 0:
        return (2 * alpha - 1) / (k * b * b) * tail + k * (1 - alpha)
    return (1 - 2 * alpha) / (k * b * b) * tail + k * alpha


def coalition_size_mean(k: int, alpha: float, beta: float) -> float:
    """Exact mean of ``|z|`` under the ranked Bernoulli sampler (ranks ``0..k-1``)."""
    return float(np.sum(pi_r(np.arange(k), k, alpha, beta)))


def milli_kernel(z, ranks, alpha: float, beta: float) -> float:
    z = np.asarray(z, dtype=bool)
    if not z.any():
        raise EmptyCoalitionError("MILLI weight is undefined for the empty coalition")
    ranks = np.asarray(ranks)
    return float(np.mean(pi_r(ranks[z], len(z), alpha, beta)))


def default_lime_width(k: int) -> float:
    """Width that gives the half coalition a weight of exactly 0.5."""
    return math.sqrt((k / 2.0) / math.log(2.0))


def lime_kernel(z, sigma: Optional[float] = None) -> float:
    z = np.asarray(z, dtype=bool)
    k = len(z)
    sigma = default_lime_width(k) if sigma is None else sigma
    if not sigma > 0:
        raise KernelParameterError("LIME width must be positive")
    dist2 = k - int(z.sum())
    return math.exp(-dist2 / sigma**2)


def shap_kernel(size: int, k: int) -> float:
    """Shapley kernel weight of a coalition of ``size`` instances out of ``k``."""
    if size <= 0:
        raise EmptyCoalitionError("Shapley weight is undefined for the empty coalition")
    if size > k:
        raise ContractViolation("coalition larger than the bag")
    if size == k:
        return SHAP_FULL_WEIGHT
    if k <= 60:
        return (k - 1) / (math.comb(k, size) * size * (k - size))
    log_comb = math.lgamma(k + 1) - math.lgamma(size + 1) - math.lgamma(k - size + 1)
    return math.exp(math.log(k - 1) - log_comb - math.log(size) - math.log(k - size))


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    sigma: Optional[float] = None
    alpha: float = 0.5
    beta: float = 0.0

    def __post_init__(self):
        if self.variant not in ("lime", "shap", "milli"):
            raise KernelParameterError(f"unknown kernel {self.variant!r}")
        if self.variant == "lime" and self.sigma is not None and not self.sigma > 0:
            raise KernelParameterError("LIME width must be positive")
        if self.variant == "milli":
            _check_alpha(self.alpha)

    @classmethod
    def lime(cls, sigma=None):
        return cls("lime", sigma=sigma)

    @classmethod
    def shap(cls):
        return cls("shap")

    @classmethod
    def milli(cls, alpha, beta):
        return cls("milli", alpha=alpha, beta=beta)

    @property
    def beta_hat(self) -> float:
        return beta_hat(self.alpha, self.beta)

    def weights(self, masks, ranks=None) -> np.ndarray:
        """Kernel weight for every row of a coalition matrix."""
        m = np.asarray(masks, dtype=bool)
        n, k = m.shape
        sizes = m.sum(axis=1)
        if (sizes == 0).any():
            raise EmptyCoalitionError("empty coalition in sample")
        if self.variant == "lime":
            sigma = default_lime_width(k) if self.sigma is None else self.sigma
            return np.exp(-(k - sizes) / sigma**2)
        if self.variant == "shap":
            table = np.array([0.0] + [shap_kernel(s, k) for s in range(1, k + 1)])
            return table[sizes]
        if ranks is None:
            raise ContractViolation("the MILLI kernel needs an instance ranking")
        p = pi_r(np.asarray(ranks), k, self.alpha, self.beta)
        return (m @ p) / sizes
