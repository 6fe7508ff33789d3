"""Ranking metrics for attribution quality.

NDCG@n compares an attribution ordering with ground-truth instance relevance
(+1 supporting, 0 neutral, -1 refuting; unlabeled instances are dropped).
AOPC measures the mean drop in the class probability as instances are
removed most-relevant-first; AOPC-R subtracts the AOPC of random orderings.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    UNLABELED,
    Bag,
    BagClassifier,
    CachedEvaluator,
    ContractViolation,
    MethodInapplicableError,
    MetricUnavailableError,
    argsort_descending,
)
from .datasets import ClassRule

CLASS_POLICIES = ("all", "true_negative")
METRICS = ("ndcg", "aopc_r")


@dataclass(frozen=True)
class RelevanceView:
    relevance: np.ndarray  # +1 / 0 / -1 per instance
    labeled: np.ndarray  # False where the instance has no label

    @property
    def supporting(self) -> int:
        return int(np.count_nonzero((self.relevance > 0) & self.labeled))


def relevance_view(bag: Bag, c: int, rule: ClassRule) -> RelevanceView:
    if bag.instance_tags is None:
        raise MetricUnavailableError(f"bag {bag.bag_id} has no instance tags")
    tags = bag.instance_tags
    rel = np.array([rule.relevance(int(t), c) if t != UNLABELED else 0 for t in tags], dtype=int)
    return RelevanceView(rel, tags != UNLABELED)


def default_n(view: RelevanceView) -> int:
    n_labeled = int(view.labeled.sum())
    return min(max(view.supporting, 1), n_labeled)


def ndcg_at_n(attr_row, view: RelevanceView, n: Optional[int] = None) -> float:
    attr = np.asarray(attr_row, dtype=float)
    if attr.shape != view.relevance.shape:
        raise ContractViolation("attribution row and relevance differ in length")
    idx = np.flatnonzero(view.labeled)
    if idx.size == 0:
        raise MetricUnavailableError("no labeled instances")
    n = default_n(view) if n is None else int(n)
    if not 1 <= n <= idx.size:
        raise MetricUnavailableError(f"n={n} outside [1, {idx.size}]")
    order = idx[argsort_descending(attr[idx])][:n]
    discounts = 1.0 / np.log2(np.arange(2, n + 2))
    return float(np.dot(view.relevance[order], discounts) / discounts.sum())


def _morf_masks(ordering, k: int, depth: int) -> np.ndarray:
    masks = np.ones((depth, k), dtype=bool)
    for i in range(depth):
        masks[i:, ordering[i]] = False
    return masks


def _check_ordering(ordering, k):
    o = np.asarray(ordering, dtype=int)
    if sorted(o.tolist()) != list(range(k)):
        raise ContractViolation("ordering must be a permutation of the bag's instances")
    return o


def aopc(model: BagClassifier, bag: Bag, ordering, c: int, depth: Optional[int] = None, evaluator=None) -> float:
    """Mean drop in ``F_c`` over the first ``depth - 1`` most-relevant-first removals.

    ``depth`` defaults to ``k``; the empty bag is never evaluated.
    """
    if bag.k < 2:
        raise MethodInapplicableError("AOPC needs at least two instances")
    o = _check_ordering(ordering, bag.k)
    steps = bag.k - 1 if depth is None else min(max(int(depth), 2), bag.k) - 1
    ev = evaluator or CachedEvaluator(model, bag)
    base = ev.full()[c]
    perturbed = ev(_morf_masks(o, bag.k, steps))[:, c]
    return float(np.mean(base - perturbed))


def aopc_r(
    model: BagClassifier,
    bag: Bag,
    ordering,
    c: int,
    r: int = 10,
    seed: int = 0,
    depth: Optional[int] = None,
    evaluator=None,
) -> float:
    if r < 1:
        raise ContractViolation("need at least one random ordering")
    ev = evaluator or CachedEvaluator(model, bag)
    target = aopc(model, bag, ordering, c, depth, ev)
    rng = np.random.default_rng(seed)
    rand = [aopc(model, bag, rng.permutation(bag.k), c, depth, ev) for _ in range(r)]
    return float(target - np.mean(rand))


def bag_seed(seed: int, bag_id: str) -> int:
    """Per-bag seed so serial and parallel evaluation draw the same random orderings."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(bag_id.encode())])
    return int(ss.generate_state(1)[0])


def policy_classes(bag: Bag, num_classes: int, policy: str) -> list[int]:
    if policy == "all":
        return list(range(num_classes))
    if policy == "true_negative":
        return sorted({0, bag.bag_label})
    raise ValueError(f"unknown class policy {policy!r}")


def sem(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class EvalResult:
    metric: str
    class_policy: str
    method: str
    scores: dict = field(default_factory=dict)  # (bag_id, class) -> score
    bag_scores: dict = field(default_factory=dict)  # bag_id -> mean over its classes
    skipped: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.bag_scores.values()))) if self.bag_scores else float("nan")

    @property
    def sem(self) -> float:
        return sem(list(self.bag_scores.values()))

    @property
    def n_bags(self) -> int:
        return len(self.bag_scores)


# method(model, bag, classes, seed) -> AttributionMatrix
AttributionMethod = Callable[..., object]


def evaluate_method(
    model: BagClassifier,
    bags,
    method: AttributionMethod,
    metric: str = "ndcg",
    class_policy: str = "all",
    rule: Optional[ClassRule] = None,
    seed: int = 0,
    method_name: str = "",
    aopc_orderings: int = 10,
) -> EvalResult:
    """Score ``method`` on every bag and aggregate mean and standard error over bags."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "ndcg" and rule is None:
        raise ValueError("NDCG needs the dataset's class rule")
    result = EvalResult(metric, class_policy, method_name or getattr(method, "__name__", "method"))
    for bag in bags:
        classes = policy_classes(bag, model.num_classes, class_policy)
        s = bag_seed(seed, bag.bag_id)
        try:
            attr = method(model, bag, classes, s)
        except MethodInapplicableError as e:
            result.skipped.append((bag.bag_id, str(e)))
            continue
        per_class = []
        for c in classes:
            row = attr.row(c)
            if metric == "ndcg":
                score = ndcg_at_n(row, relevance_view(bag, c, rule))
            else:
                score = aopc_r(model, bag, argsort_descending(row), c, aopc_orderings, s + c)
            result.scores[(bag.bag_id, c)] = score
            per_class.append(score)
        result.bag_scores[bag.bag_id] = float(np.mean(per_class))
    if result.skipped:
        warnings.warn(
            f"{result.method}: skipped {len(result.skipped)} bag(s), first: {result.skipped[0][1]}", stacklevel=2
        )
    return result
