"""Domain types shared by every part of the toolkit.

A bag is an ordered collection of feature vectors. Classifiers map bags (and
sub-bags selected by a coalition mask) to probability distributions over
classes. Attribution methods return an :class:`AttributionMatrix` holding one
row per class and one column per instance.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

PROB_TOL = 1e-9

# Per-instance tag values: 0 is neutral background, c > 0 marks a key instance
# whose concept is associated with class c, UNLABELED marks a missing label.
NEUTRAL = 0
UNLABELED = -1


class MILError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(MILError, ValueError):
    pass


class EmptyCoalitionError(ContractViolation):
    pass


class MethodInapplicableError(MILError):
    pass


class MetricUnavailableError(MILError):
    pass


@dataclass(frozen=True)
class Bag:
    instances: np.ndarray
    bag_label: int = 0
    instance_tags: Optional[np.ndarray] = None
    bag_id: str = ""

    def __post_init__(self):
        x = np.array(self.instances, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ContractViolation(f"bag instances must be a non-empty k x d array, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "instances", x)
        if self.instance_tags is not None:
            tags = np.array(self.instance_tags, dtype=int)
            if tags.shape != (x.shape[0],):
                raise ContractViolation(f"expected {x.shape[0]} instance tags, got {tags.shape}")
            tags.setflags(write=False)
            object.__setattr__(self, "instance_tags", tags)
        object.__setattr__(self, "bag_label", int(self.bag_label))

    @property
    def k(self) -> int:
        return self.instances.shape[0]

    @property
    def d(self) -> int:
        return self.instances.shape[1]

    def __len__(self):
        return self.k

    def __eq__(self, other):
        if not isinstance(other, Bag):
            return NotImplemented
        if self.bag_label != other.bag_label or self.bag_id != other.bag_id:
            return False
        if not np.array_equal(self.instances, other.instances):
            return False
        if (self.instance_tags is None) != (other.instance_tags is None):
            return False
        return self.instance_tags is None or np.array_equal(self.instance_tags, other.instance_tags)

    __hash__ = None


def as_mask(mask, k: Optional[int] = None) -> np.ndarray:
    """Coerce ``mask`` to a boolean vector and check the coalition invariants."""
    if isinstance(mask, str):
        mask = [c == "1" for c in mask]
    z = np.asarray(mask).astype(bool)
    if z.ndim != 1:
        raise ContractViolation("coalition mask must be one-dimensional")
    if k is not None and z.shape[0] != k:
        raise ContractViolation(f"coalition length {z.shape[0]} does not match bag size {k}")
    if not z.any():
        raise EmptyCoalitionError("empty coalition: a bag needs at least one instance")
    return z


def mask_key(mask: np.ndarray) -> bytes:
    return np.packbits(np.asarray(mask, dtype=bool)).tobytes() + bytes([len(mask) % 256])


def sub_bag(bag: Bag, coalition) -> Bag:
    """Return the bag made of the instances selected by ``coalition``, in order."""
    z = as_mask(coalition, bag.k)
    tags = None if bag.instance_tags is None else bag.instance_tags[z]
    return Bag(bag.instances[z], bag.bag_label, tags, bag.bag_id)


def argsort_descending(values) -> np.ndarray:
    """Indices that sort ``values`` non-increasingly, ties by ascending index."""
    v = np.asarray(values, dtype=float)
    if np.isnan(v).any():
        raise ContractViolation("cannot order NaN values")
    return np.argsort(-v, kind="stable")


def ranks_from_values(values) -> np.ndarray:
    """Position of each instance in the descending order (0 = largest value)."""
    order = argsort_descending(values)
    ranks = np.empty(len(order), dtype=int)
    ranks[order] = np.arange(len(order))
    return ranks


def check_distribution(probs, tol: float = PROB_TOL) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ContractViolation("class distribution contains non-finite values")
    if p.min(initial=0.0) < -tol or p.max(initial=0.0) > 1 + tol:
        raise ContractViolation("class probabilities must lie in [0, 1]")
    if abs(p.sum(axis=-1) - 1).max(initial=0.0) > tol:
        raise ContractViolation("class probabilities must sum to 1")
    return p


class BagClassifier:
    """Black-box bag classifier with an instrumented call counter.

    Subclasses implement :meth:`_forward` on a raw ``k x d`` instance array.
    Those that can evaluate many sub-bags of the same bag at once override
    :meth:`_forward_masks`; every row counts as one prediction.
    """

    num_classes: int

    def __init__(self, num_classes: int):
        self.num_classes = int(num_classes)
        self._calls = 0
        self._lock = threading.Lock()

    # pickling (used by parallel workers) cannot carry the lock
    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return self._calls

    def reset_calls(self):
        with self._lock:
            self._calls = 0

    def _count(self, n: int):
        with self._lock:
            self._calls += n

    def predict(self, bag) -> np.ndarray:
        x = bag.instances if isinstance(bag, Bag) else np.asarray(bag, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise EmptyCoalitionError("classifiers are undefined on the empty bag")
        self._count(1)
        return self._forward(x)

    def predict_masks(self, bag: Bag, masks) -> np.ndarray:
        """Predictions for every sub-bag selected by the rows of ``masks``."""
        m = np.asarray(masks, dtype=bool)
        if m.ndim != 2 or m.shape[1] != bag.k:
            raise ContractViolation(f"mask matrix must be n x {bag.k}")
        if m.shape[0] and not m.any(axis=1).all():
            raise EmptyCoalitionError("empty coalition in mask matrix")
        self._count(m.shape[0])
        if m.shape[0] == 0:
            return np.zeros((0, self.num_classes))
        return self._forward_masks(bag.instances, m)

    def _forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _forward_masks(self, x: np.ndarray, masks: np.ndarray) -> np.ndarray:
        return np.stack([self._forward(x[z]) for z in masks])


class CachedEvaluator:
    """Evaluates sub-bags of one bag, calling the classifier once per distinct mask."""

    def __init__(self, model: BagClassifier, bag: Bag):
        self.model = model
        self.bag = bag
        self._cache: dict[bytes, np.ndarray] = {}

    @property
    def distinct(self) -> int:
        return len(self._cache)

    def __call__(self, masks) -> np.ndarray:
        m = np.atleast_2d(np.asarray(masks, dtype=bool))
        keys = [mask_key(z) for z in m]
        todo, seen = [], set()
        for key, z in zip(keys, m):
            if key not in self._cache and key not in seen:
                seen.add(key)
                todo.append((key, z))
        if todo:
            out = self.model.predict_masks(self.bag, np.stack([z for _, z in todo]))
            for (key, _), p in zip(todo, out):
                self._cache[key] = p
        return np.stack([self._cache[key] for key in keys])

    def full(self) -> np.ndarray:
        return self(np.ones((1, self.bag.k), dtype=bool))[0]

    def singletons(self) -> np.ndarray:
        return self(np.eye(self.bag.k, dtype=bool))

    def leave_one_out(self) -> np.ndarray:
        return self(~np.eye(self.bag.k, dtype=bool))


@dataclass
class AttributionMatrix:
    """``values[c, i]`` is the attribution of instance ``i`` towards class ``c``.

    Rows for classes that were not requested are NaN and flagged in ``present``.
    """

    values: np.ndarray
    method_name: str
    present: np.ndarray = field(default=None)
    intercepts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ContractViolation("attribution values must be C x k")
        if self.present is None:
            self.present = np.ones(self.values.shape[0], dtype=bool)
        self.present = np.asarray(self.present, dtype=bool)
        self.values[~self.present] = np.nan
        if not np.all(np.isfinite(self.values[self.present])):
            raise ContractViolation(f"{self.method_name}: non-finite attribution values")

    @classmethod
    def from_rows(cls, rows: dict, num_classes: int, k: int, method_name: str, intercepts: Optional[dict] = None):
        values = np.full((num_classes, k), np.nan)
        present = np.zeros(num_classes, dtype=bool)
        for c, row in rows.items():
            values[c] = row
            present[c] = True
        icp = None
        if intercepts is not None:
            icp = np.full(num_classes, np.nan)
            for c, v in intercepts.items():
                icp[c] = v
        return cls(values, method_name, present, icp)

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def classes(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.present)]

    def row(self, c: int) -> np.ndarray:
        if not self.present[c]:
            raise KeyError(f"class {c} was not computed by {self.method_name}")
        return self.values[c]


def resolve_classes(classes: Optional[Iterable[int]], num_classes: int) -> list[int]:
    if classes is None:
        return list(range(num_classes))
    out = sorted({int(c) for c in classes})
    if not out or out[0] < 0 or out[-1] >= num_classes:
        raise ContractViolation(f"requested classes {out} outside [0, {num_classes})")
    return out


def bag_from_rows(rows: Sequence[Sequence[float]], label: int = 0, tags=None, bag_id: str = "") -> Bag:
    return Bag(np.asarray(rows, dtype=float), label, tags, bag_id)
