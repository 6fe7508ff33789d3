"""Attribution methods that treat instances as independent.

* single: each instance on its own, ``F_c({x_i})``
* one removed: drop in prediction when the instance is taken out,
  ``F_c(X) - F_c(X \\ {x_i})``
* combined: the mean of the two
"""

from __future__ import annotations

from typing import Iterable, Optional

from .core import AttributionMatrix, Bag, BagClassifier, CachedEvaluator, MethodInapplicableError, resolve_classes


def _rows(values, classes):
    return {c: values[:, c] for c in classes}


def single_attribution(model: BagClassifier, bag: Bag, classes: Optional[Iterable[int]] = None, evaluator=None):
    classes = resolve_classes(classes, model.num_classes)
    ev = evaluator or CachedEvaluator(model, bag)
    return AttributionMatrix.from_rows(_rows(ev.singletons(), classes), model.num_classes, bag.k, "single")


def _require_pair(bag: Bag, method: str):
    if bag.k < 2:
        raise MethodInapplicableError(f"{method} needs a bag of at least two instances, got k={bag.k}")


def one_removed_attribution(model, bag, classes=None, evaluator=None):
    _require_pair(bag, "one_removed")
    classes = resolve_classes(classes, model.num_classes)
    ev = evaluator or CachedEvaluator(model, bag)
    diff = ev.full()[None, :] - ev.leave_one_out()
    return AttributionMatrix.from_rows(_rows(diff, classes), model.num_classes, bag.k, "one_removed")


def combined_attribution(model, bag, classes=None, evaluator=None):
    _require_pair(bag, "combined")
    classes = resolve_classes(classes, model.num_classes)
    ev = evaluator or CachedEvaluator(model, bag)
    single = ev.singletons()
    removed = ev.full()[None, :] - ev.leave_one_out()
    return AttributionMatrix.from_rows(_rows(0.5 * (single + removed), classes), model.num_classes, bag.k, "combined")
