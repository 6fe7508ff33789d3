"""Surrogate explanation pipelines: MILLI, LIME and SHAP for MIL bags."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from ..core import AttributionMatrix, Bag, BagClassifier, CachedEvaluator, ranks_from_values, resolve_classes
from .fit import fit_all_classes
from .kernels import KernelSpec
from .sampling import SamplerSpec, sample_coalitions


def rank_by_single(model: BagClassifier, bag: Bag, evaluator: Optional[CachedEvaluator] = None) -> np.ndarray:
    """Rank of each instance by its singleton prediction for the bag's predicted class.

    Rank 0 is the instance with the largest value; ties go to the lower index.
    """
    ev = evaluator or CachedEvaluator(model, bag)
    c = int(np.argmax(ev.full()))
    return ranks_from_values(ev.singletons()[:, c])


def surrogate_explain(
    model: BagClassifier,
    bag: Bag,
    kernel: KernelSpec,
    sampler: SamplerSpec,
    classes: Optional[Iterable[int]] = None,
    ranks=None,
    name: str = "surrogate",
    evaluator: Optional[CachedEvaluator] = None,
    fits: Optional[dict] = None,
) -> AttributionMatrix:
    classes = resolve_classes(classes, model.num_classes)
    ev = evaluator or CachedEvaluator(model, bag)
    masks = sample_coalitions(sampler, kernel, bag.k)
    result = fit_all_classes(ev, masks, kernel, classes, ranks)
    if fits is not None:
        fits.update(result)
    return AttributionMatrix.from_rows(
        {c: f.phis for c, f in result.items()},
        model.num_classes,
        bag.k,
        name,
        intercepts={c: f.phi0 for c, f in result.items()},
    )


def milli_explain(
    model: BagClassifier,
    bag: Bag,
    classes=None,
    alpha: float = 0.05,
    beta: float = 0.01,
    n: int = 150,
    seed: int = 0,
    allow_repeats: bool = False,
    evaluator: Optional[CachedEvaluator] = None,
    fits: Optional[dict] = None,
) -> AttributionMatrix:
    """Rank instances with Single, sample coalitions with the rank curve, fit one surrogate per class."""
    ev = evaluator or CachedEvaluator(model, bag)
    ranks = rank_by_single(model, bag, ev)
    kernel = KernelSpec.milli(alpha, beta)
    sampler = SamplerSpec(
        "ranked_bernoulli", n, allow_repeats, seed, ranks=tuple(int(r) for r in ranks), alpha=alpha, beta=beta
    )
    return surrogate_explain(model, bag, kernel, sampler, classes, ranks, "milli", ev, fits)


def _strategy(sampling: str) -> str:
    if sampling in ("random", "equal_random"):
        return "equal_random"
    if sampling == "guided":
        return "guided"
    raise ValueError(f"sampling must be 'random' or 'guided', got {sampling!r}")


def lime_explain(
    model, bag, classes=None, sampling="random", n=150, seed=0, sigma=None, allow_repeats=False, evaluator=None
):
    strategy = _strategy(sampling)
    name = ("guided" if strategy == "guided" else "random") + "_lime"
    sampler = SamplerSpec(strategy, n, allow_repeats, seed)
    return surrogate_explain(model, bag, KernelSpec.lime(sigma), sampler, classes, None, name, evaluator)


def shap_explain(model, bag, classes=None, sampling="random", n=150, seed=0, allow_repeats=False, evaluator=None):
    strategy = _strategy(sampling)
    name = ("guided" if strategy == "guided" else "random") + "_shap"
    sampler = SamplerSpec(strategy, n, allow_repeats, seed)
    return surrogate_explain(model, bag, KernelSpec.shap(), sampler, classes, None, name, evaluator)
