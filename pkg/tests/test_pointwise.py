import numpy as np
import pytest

from helpers import bag_from_tags, random_bag
from milinterp.core import Bag, MethodInapplicableError
from milinterp.pointwise import combined_attribution, one_removed_attribution, single_attribution
from milinterp.testing import ConstantClassifier, InteractionClassifier

EPS = 0.01
METHODS = (single_attribution, one_removed_attribution, combined_attribution)


def test_single_on_concept_a(fourclass, oracle4):
    bag = bag_from_tags(fourclass, [0, 1, 0])
    phi = single_attribution(oracle4, bag).values
    assert phi[1, 1] == pytest.approx(1 - 3 * EPS)
    assert phi[0, 1] == pytest.approx(EPS)


def test_single_on_singleton_bag(rng):
    m = InteractionClassifier(3, 4)
    b = random_bag(rng, 1)
    np.testing.assert_array_equal(single_attribution(m, b).values[:, 0], m.predict(b))


def test_one_removed_constant_model(rng):
    phi = one_removed_attribution(ConstantClassifier([0.2, 0.3, 0.5]), random_bag(rng, 4)).values
    assert np.all(phi == 0)


def test_one_removed_oracle_flip(fourclass, oracle4):
    bag = bag_from_tags(fourclass, [1, 0, 0, 0, 0])
    phi = one_removed_attribution(oracle4, bag).values
    assert phi[1, 0] == pytest.approx((1 - 3 * EPS) - EPS)
    assert np.all(phi[1, 1:] == 0)


def test_combined_oracle_arithmetic(fourclass, oracle4):
    bag = bag_from_tags(fourclass, [1, 0, 0, 0, 0])
    phi = combined_attribution(oracle4, bag).values
    assert phi[1, 0] == pytest.approx(0.5 * ((1 - 3 * EPS) + (1 - 3 * EPS) - EPS))


def test_combined_is_exact_mean(rng):
    m = InteractionClassifier(3, 4, max_bag=8)
    b = random_bag(rng, 7)
    expected = 0.5 * (single_attribution(m, b).values + one_removed_attribution(m, b).values)
    assert np.array_equal(combined_attribution(m, b).values, expected)


def test_combined_constant_model_is_half_single(rng):
    m = ConstantClassifier([0.2, 0.8])
    b = random_bag(rng, 3)
    np.testing.assert_array_equal(combined_attribution(m, b).values, 0.5 * single_attribution(m, b).values)


@pytest.mark.parametrize("k", [3, 6, 11])
def test_call_counts(k, rng):
    b = random_bag(rng, k)
    for fn, expected in zip(METHODS, (k, k + 1, 2 * k + 1)):
        m = InteractionClassifier(4, 4, max_bag=16)
        fn(m, b, classes=[0, 2, 3])
        assert m.call_count == expected


def test_two_instance_bag_reuses_shared_sub_bags(rng):
    # with k=2 each leave-one-out sub-bag is the other singleton
    m = InteractionClassifier(3, 4)
    combined_attribution(m, random_bag(rng, 2))
    assert m.call_count == 3


@pytest.mark.parametrize("fn", [one_removed_attribution, combined_attribution])
def test_single_instance_bag_refused(fn, rng):
    with pytest.raises(MethodInapplicableError):
        fn(InteractionClassifier(2, 4), random_bag(rng, 1))


def test_class_sums_and_ranges(rng):
    m = InteractionClassifier(4, 4, max_bag=10)
    b = random_bag(rng, 10)
    single, removed, comb = (fn(m, b).values for fn in METHODS)
    assert single.min() >= 0 and single.max() <= 1
    assert np.abs(removed).max() <= 1
    np.testing.assert_allclose(single.sum(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(removed.sum(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(comb.sum(axis=0), 0.5, atol=1e-9)


def test_permutation_equivariance(rng):
    m = InteractionClassifier(3, 4, max_bag=9)
    b = random_bag(rng, 9)
    perm = rng.permutation(9)
    pb = Bag(b.instances[perm])
    for fn in METHODS:
        np.testing.assert_allclose(fn(m, pb).values, fn(m, b).values[:, perm], atol=1e-12)


def test_requested_classes_only(rng):
    a = single_attribution(InteractionClassifier(4, 4), random_bag(rng, 3), classes=[2])
    assert a.classes == [2]
