import numpy as np

from milinterp.core import Bag


def bag_from_tags(dataset, tags, seed=0, noise=0.3, label=None, bag_id="b"):
    """Bag whose instances sit near the dataset centres matching ``tags`` (0 = first background centre)."""
    rng = np.random.default_rng(seed)
    rows = [int(np.flatnonzero(dataset.centre_tags == t)[0]) for t in tags]
    x = dataset.centres[rows] + noise * rng.standard_normal((len(tags), dataset.feature_dim))
    tags = np.asarray(tags)
    if label is None:
        label = dataset.rule.label(np.bincount(tags, minlength=dataset.num_classes))
    return Bag(x, label, tags, bag_id)


def random_bag(rng, k, d=4, label=0, bag_id="r"):
    return Bag(rng.normal(size=(k, d)), label, None, bag_id)
