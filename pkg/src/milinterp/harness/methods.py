"""Name -> attribution method, each with the uniform ``(model, bag, classes, seed)`` signature."""

from __future__ import annotations

from ..core import MethodInapplicableError
from ..models import inherent_attributions
from ..pointwise import combined_attribution, one_removed_attribution, single_attribution
from ..surrogate import lime_explain, milli_explain, shap_explain


def make_method(name: str, params: dict):
    p = dict(params)
    if name == "inherent":

        def run(model, bag, classes, seed):
            return inherent_attributions(model, bag)

    elif name == "single":

        def run(model, bag, classes, seed):
            return single_attribution(model, bag, classes)

    elif name == "one_removed":

        def run(model, bag, classes, seed):
            return one_removed_attribution(model, bag, classes)

    elif name == "combined":

        def run(model, bag, classes, seed):
            return combined_attribution(model, bag, classes)

    elif name in ("random_lime", "guided_lime"):
        sampling = name.split("_")[0]

        def run(model, bag, classes, seed):
            return lime_explain(model, bag, classes, sampling=sampling, seed=seed, **p)

    elif name in ("random_shap", "guided_shap"):
        sampling = name.split("_")[0]

        def run(model, bag, classes, seed):
            return shap_explain(model, bag, classes, sampling=sampling, seed=seed, **p)

    elif name == "milli":

        def run(model, bag, classes, seed):
            return milli_explain(model, bag, classes, seed=seed, **p)

    else:
        raise KeyError(name)
    run.__name__ = name
    return run


def applicable(name: str, model) -> bool:
    """Whether a method can run on this model at all (only inherent can refuse)."""
    return name != "inherent" or bool(getattr(model, "has_inherent", False))


__all__ = ["MethodInapplicableError", "applicable", "make_method"]
