from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..core import MethodInapplicableError
from .kernels import KernelSpec, pi_r

STRATEGIES = ("equal_random", "guided", "ranked_bernoulli")


class BudgetError(MethodInapplicableError, ValueError):
    """Budget too small for this bag; callers evaluating many bags skip it."""


class RepeatedCoalitionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    strategy: str
    n: int
    allow_repeats: bool = False
    seed: int = 0
    ranks: Optional[tuple] = None
    alpha: float = 0.5
    beta: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        if self.strategy == "ranked_bernoulli":
            if self.ranks is None:
                raise ValueError("ranked_bernoulli sampling needs a ranking")
            r = np.asarray(self.ranks)
            if sorted(r.tolist()) != list(range(len(r))):
                raise ValueError("ranking must be a permutation of 0..k-1")


def guided_order(variant: str, k: int) -> Iterator[tuple]:
    """Coalitions (as index tuples) in non-increasing kernel weight, full coalition excluded.

    Shapley: sizes 1 and k-1 interleaved, then 2 and k-2, and so on.
    LIME: sizes k-1, k-2, ..., 1. Within a size, lexicographic order.
    """
    if variant == "shap":
        for s in range(1, k // 2 + 1):
            small = itertools.combinations(range(k), s)
            if 2 * s == k:
                yield from small
                continue
            large = itertools.combinations(range(k), k - s)
            for a, b in zip(small, large):
                yield a
                yield b
    elif variant == "lime":
        for s in range(k - 1, 0, -1):
            yield from itertools.combinations(range(k), s)
    else:
        raise ValueError(f"guided sampling is not defined for the {variant!r} kernel")


def _guided(spec: SamplerSpec, kernel: KernelSpec, k: int) -> np.ndarray:
    masks = [np.ones(k, dtype=bool)]
    pool = guided_order(kernel.variant, k)
    for combo in itertools.islice(pool, spec.n - 1):
        z = np.zeros(k, dtype=bool)
        z[list(combo)] = True
        masks.append(z)
    if len(masks) < spec.n:
        if not spec.allow_repeats:
            warnings.warn(
                f"only {len(masks)} distinct coalitions exist for k={k}; repeating to reach n={spec.n}",
                RepeatedCoalitionWarning,
                stacklevel=3,
            )
        distinct = len(masks)
        for j in range(spec.n - distinct):
            masks.append(masks[j % distinct].copy())
    return np.stack(masks)


def _bernoulli(rng, p: np.ndarray, count: int) -> np.ndarray:
    out = []
    while len(out) < count:
        draw = rng.random((count - len(out), len(p))) < p
        out.extend(draw[draw.any(axis=1)])
    return np.stack(out)


def _random(spec: SamplerSpec, k: int, p: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    full = np.ones(k, dtype=bool)
    if spec.allow_repeats:
        return np.vstack([full, _bernoulli(rng, p, spec.n - 1)])
    masks = [full]
    seen = {full.tobytes()}
    pool_size = 2**k - 1 if k < 63 else np.inf
    attempts, max_attempts = 0, 100 * spec.n
    while len(masks) < spec.n and len(seen) < pool_size and attempts < max_attempts:
        batch = _bernoulli(rng, p, spec.n - len(masks))
        attempts += len(batch)
        for z in batch:
            key = z.tobytes()
            if key not in seen:
                seen.add(key)
                masks.append(z)
    if len(masks) < spec.n:
        warnings.warn(
            f"found {len(masks)} distinct coalitions for k={k}; sampling the remaining "
            f"{spec.n - len(masks)} with repeats",
            RepeatedCoalitionWarning,
            stacklevel=3,
        )
        masks.extend(_bernoulli(rng, p, spec.n - len(masks)))
    return np.stack(masks)


def sample_coalitions(spec: SamplerSpec, kernel: KernelSpec, k: int) -> np.ndarray:
    """Draw ``spec.n`` non-empty coalitions as an ``n x k`` boolean matrix.

    Row 0 is always the full coalition. Without ``allow_repeats`` the rows are
    distinct unless the pool of coalitions runs out, in which case the rest is
    filled with repeats and a :class:`RepeatedCoalitionWarning` is issued.
    """
    if spec.n < k + 2:
        raise BudgetError(f"sample budget {spec.n} is below k + 2 = {k + 2}")
    if spec.strategy == "guided":
        return _guided(spec, kernel, k)
    if spec.strategy == "equal_random":
        p = np.full(k, 0.5)
    else:
        ranks = np.asarray(spec.ranks)
        if len(ranks) != k:
            raise ValueError(f"ranking has {len(ranks)} entries for a bag of {k}")
        p = pi_r(ranks, k, spec.alpha, spec.beta)
    return _random(spec, k, p)
