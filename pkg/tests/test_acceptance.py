"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see ``conftest.py``). A failing
criterion also fails its test; nothing here is relaxed to make a line green.
"""

import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE, small_config
from helpers import bag_from_tags
from milinterp.core import Bag
from milinterp.datasets import generate_fourclass
from milinterp.harness import config_from_dict, run_experiment
from milinterp.harness.cli import main as cli_main
from milinterp.metrics import RelevanceView, aopc_r, ndcg_at_n, sem
from milinterp.models import (
    AttentionModel,
    InstanceModel,
    OracleModel,
    TrainConfig,
    build_model,
    gradient_check,
    inherent_attributions,
    train,
)
from milinterp.pointwise import combined_attribution, one_removed_attribution, single_attribution
from milinterp.surrogate import (
    KernelSpec,
    expected_coalition_size,
    fit_surrogate,
    lime_explain,
    milli_explain,
    pi_r,
    rank_by_single,
    shap_explain,
)
from milinterp.surrogate.sampling import SamplerSpec, sample_coalitions
from milinterp.testing import AdditiveClassifier, ConstantClassifier, InteractionClassifier
from oracles import (
    exact_expected_size,
    monte_carlo_size,
    ndcg_reference,
    shapley_brute_force,
    shapley_without_empty,
)

# tolerances and sizes fixed by the acceptance criteria
SHAPLEY_TOL = 1e-4
SHAPLEY_BAGS = 50
SHAPLEY_SECONDS = 10.0
ADDITIVE_TOL = 1e-6
ALGEBRA_PAIRS = 1000
ALGEBRA_TOL = 1e-9
PI_TUPLES = 10_000
SIZE_SETTINGS = 100
MC_DRAWS = 50_000
NDCG_TOL = 1e-9
MONOTONE_ROWS = 1000
AOPC_TRIALS = 200
ACCURACY_FLOOR = 0.95
TABLE2_SECONDS = 30 * 60
GRAD_TOL = 1e-4
GRAD_BAGS = 20


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def all_coalitions(k):
    return np.array([[(m >> i) & 1 for i in range(k)] for m in range(2**k - 1, 0, -1)], dtype=bool)


def game(model, bag, c):
    k = bag.k
    return lambda s: float(model.predict_masks(bag, np.isin(np.arange(k), list(s))[None])[0, c])


# 1 -------------------------------------------------------------------------


def test_criterion_1_shapley_oracle():
    rng = np.random.default_rng(101)
    worst_closed = worst_completed = 0.0
    elapsed = 0.0  # fitting time only; the factorial oracles are deliberately slow
    for j in range(SHAPLEY_BAGS):
        k = int(rng.integers(3, 9))
        m = InteractionClassifier(3, 4, seed=j, max_bag=8)
        bag = Bag(rng.normal(size=(k, 4)))
        masks = all_coalitions(k)
        for c in range(3):
            start = time.perf_counter()
            fit = fit_surrogate(m, bag, c, masks, KernelSpec.shap())
            elapsed += time.perf_counter() - start
            v = game(m, bag, c)
            worst_closed = max(worst_closed, np.abs(fit.phis - shapley_without_empty(v, k)).max())
            completed = lambda s, v=v, t=fit.phi0: t if not s else v(s)
            worst_completed = max(worst_completed, np.abs(fit.phis - shapley_brute_force(completed, k)).max())
    ok = worst_closed <= SHAPLEY_TOL and worst_completed <= SHAPLEY_TOL and elapsed < SHAPLEY_SECONDS
    record(
        1,
        ok,
        f"max |err| {worst_closed:.2e} (closed-form optimum) / {worst_completed:.2e} (factorial Shapley, "
        f"v(empty)=fitted intercept), {SHAPLEY_BAGS} bags in {elapsed:.1f}s",
    )


# 2 -------------------------------------------------------------------------


def test_criterion_2_additive_recovery():
    rng = np.random.default_rng(202)
    worst = {}
    single_exact = True
    for j in range(20):
        k = int(rng.integers(2, 13))
        m = AdditiveClassifier(3, 4, seed=j, max_bag=12)
        bag = Bag(rng.normal(size=(k, 4)))
        g = m.contributions(bag.instances)
        n = 4 * k
        runs = {
            "random_lime": lambda: lime_explain(m, bag, sampling="random", n=n, seed=j),
            "guided_lime": lambda: lime_explain(m, bag, sampling="guided", n=n, seed=j),
            "random_shap": lambda: shap_explain(m, bag, sampling="random", n=n, seed=j),
            "guided_shap": lambda: shap_explain(m, bag, sampling="guided", n=n, seed=j),
            "milli": lambda: milli_explain(m, bag, n=n, seed=j),
        }
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # tiny bags exhaust the distinct coalitions
            for name, run in runs.items():
                err = np.abs(run().values - g.T).max()
                worst[name] = max(worst.get(name, 0.0), err)
        single = single_attribution(m, bag).values
        direct = np.stack([m.predict(Bag(bag.instances[i : i + 1])) for i in range(k)], axis=1)
        single_exact &= bool(np.array_equal(single, direct))
    ok = max(worst.values()) <= ADDITIVE_TOL and single_exact
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(2, ok, f"max |err| {detail}; Single exact: {single_exact}")


# 3 -------------------------------------------------------------------------


def random_classifier(rng, j):
    kind = j % 4
    C = int(rng.integers(2, 6))
    if kind == 0:
        return InteractionClassifier(C, 4, seed=j, max_bag=12)
    if kind == 1:
        return AdditiveClassifier(C, 4, seed=j, max_bag=12)
    if kind == 2:
        return InstanceModel(C, 4, pooling=["mean", "max", "geometric"][j % 3], hidden=3, seed=j)
    return AttentionModel(C, 4, hidden=5, attention_hidden=3, seed=j)


def test_criterion_3_pointwise_algebra():
    rng = np.random.default_rng(303)
    worst = {"single_sum": 0.0, "removed_sum": 0.0, "combined": 0.0}
    single_min = np.inf
    for j in range(ALGEBRA_PAIRS):
        m = random_classifier(rng, j)
        bag = Bag(rng.normal(size=(int(rng.integers(2, 13)), 4)))
        s = single_attribution(m, bag).values
        r = one_removed_attribution(m, bag).values
        c = combined_attribution(m, bag).values
        worst["single_sum"] = max(worst["single_sum"], np.abs(s.sum(axis=0) - 1).max())
        worst["removed_sum"] = max(worst["removed_sum"], np.abs(r.sum(axis=0)).max())
        worst["combined"] = max(worst["combined"], np.abs(c - 0.5 * (s + r)).max())
        single_min = min(single_min, s.min())
    ok = max(worst.values()) <= ALGEBRA_TOL and single_min >= 0
    record(3, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", min Single {single_min:.2e}")


# 4 -------------------------------------------------------------------------


def test_criterion_4_kernel_and_sampler_laws():
    rng = np.random.default_rng(404)
    bound_fail = mono_fail = 0
    for _ in range(PI_TUPLES):
        k = int(rng.integers(1, 301))
        a = float(rng.random())
        b = float(rng.uniform(-5, 5))
        r = int(rng.integers(0, k + 1))
        p = pi_r(r, k, a, b)
        if not min(a, 1 - a) - 1e-12 <= p <= max(a, 1 - a) + 1e-12:
            bound_fail += 1
        if r < k:
            step = pi_r(r + 1, k, a, b) - p
            if (a > 0.5 and step > 1e-12) or (a < 0.5 and step < -1e-12):
                mono_fail += 1

    settings = [(30, 0.05, 0.01), (30, 0.05, -0.01), (264, 0.008, -5.0)]
    while len(settings) < SIZE_SETTINGS:
        settings.append((int(rng.integers(1, 61)), float(rng.random()), float(rng.uniform(-1, 1))))
    closed_miss, exact_miss = [], 0
    for i, (k, a, b) in enumerate(settings):
        mean, se = monte_carlo_size(k, a, b, MC_DRAWS, seed=10_000 + i)
        tol = 3 * max(se, 1e-12)
        if abs(expected_coalition_size(k, a, b) - mean) > tol:
            closed_miss.append((k, a, b))
        if abs(exact_expected_size(k, a, b) - mean) > tol:
            exact_miss += 1
    published = expected_coalition_size(30, 0.05, 0.01)
    limit_ok = all(expected_coalition_size(k, a, 0.0) == k / 2 for k in (1, 7, 30, 264) for a in (0.0, 0.05, 0.9))

    ok = bound_fail == 0 and mono_fail == 0 and not closed_miss and round(published) == 16 and limit_ok
    record(
        4,
        ok,
        f"pi_r bound/monotone violations {bound_fail}/{mono_fail} of {PI_TUPLES}; "
        f"closed form outside 3 SE of Monte-Carlo in {len(closed_miss)}/{SIZE_SETTINGS} settings "
        f"(exact rank sum: {exact_miss}/{SIZE_SETTINGS}); E|z|(30,.05,.01)={published:.2f}; beta->0 gives k/2: {limit_ok}",
    )


# 5 -------------------------------------------------------------------------


def test_criterion_5_metrics():
    fixtures = [
        ([0.9, 0.8, 0.1], [1, 1, 0], 2, 1.0),
        ([0.9, 0.8, 0.1], [0, 1, 1], 1, 0.0),
        ([3.0, 2.0, 1.0], [-1, 1, 0], 2, (-1 + 1 / math.log2(3)) / (1 + 1 / math.log2(3))),
    ]
    fixture_err = max(
        abs(ndcg_at_n(a, RelevanceView(np.array(r), np.ones(len(r), bool)), n) - want) for a, r, n, want in fixtures
    )
    fixture_ok = fixture_err <= NDCG_TOL and abs(fixtures[2][3] - (-0.2263)) < 5e-5

    rng = np.random.default_rng(505)
    mono_fail = ref_fail = 0
    for _ in range(MONOTONE_ROWS):
        k = int(rng.integers(1, 30))
        attr = rng.normal(size=k)
        rel = rng.integers(-1, 2, size=k)
        labeled = rng.random(k) < 0.85
        labeled[rng.integers(k)] = True
        view = RelevanceView(rel, labeled)
        n = int(rng.integers(1, labeled.sum() + 1))
        base = ndcg_at_n(attr, view, n)
        if ndcg_at_n(np.exp(attr) * 3.0 - 1.0, view, n) != base or ndcg_at_n(attr**3, view, n) != base:
            mono_fail += 1
        if abs(base - ndcg_reference(attr, rel, labeled, n)) > NDCG_TOL:
            ref_fail += 1

    m = InteractionClassifier(3, 4, max_bag=12)
    bag = Bag(rng.normal(size=(12, 4)))
    trials = [aopc_r(m, bag, rng.permutation(12), 1, seed=int(s)) for s in rng.integers(0, 2**31, AOPC_TRIALS)]
    mean, se = float(np.mean(trials)), sem(trials)
    random_ok = abs(mean) <= 3 * se
    const = ConstantClassifier([0.2, 0.3, 0.5])
    const_ok = all(aopc_r(const, bag, rng.permutation(12), c, seed=c) == 0.0 for c in range(3))

    ok = fixture_ok and mono_fail == 0 and ref_fail == 0 and random_ok and const_ok
    record(
        5,
        ok,
        f"fixture max err {fixture_err:.1e}; monotone-map mismatches {mono_fail}/{MONOTONE_ROWS} "
        f"(reference mismatches {ref_fail}); random-ordering AOPC-R {mean:+.2e} (3 SE {3 * se:.2e}); constant F exact 0: {const_ok}",
    )


# 6 -------------------------------------------------------------------------


def ordered_with_gaps(table, order):
    """Strict ordering on the overall column with each gap above twice the larger sem."""
    vals = [table.get(m) for m in order]
    gaps = []
    for (hi, s_hi), (lo, s_lo) in zip(vals, vals[1:]):
        gaps.append((hi - lo, 2 * max(s_hi, s_lo)))
    return all(g > t for g, t in gaps), gaps


@pytest.mark.slow
def test_criterion_6_interaction_ordering(tmp_path):
    cfg = config_from_dict(
        {
            "dataset": {"generator": "fourclass", "num_train": 2500, "num_val": 1000, "num_test": 1000,
                        "bag_size_mean": 30},
            "models": ["oracle", "instance", "attention"],
            "methods": ["milli", "random_lime", "single"],
            "repeats": 10,
            "seed": 0,
        }
    )
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = run_experiment(cfg, tmp_path, jobs=1)
    elapsed = time.perf_counter() - start
    print(table.render())
    acc = {m: table.accuracy[m][0] for m in ("instance", "attention")}
    acc_ok = all(a >= ACCURACY_FLOOR for a in acc.values())
    order_ok, gaps = ordered_with_gaps(table, ["milli", "random_lime", "single"])
    per_model = "; ".join(
        f"{model}: " + " ".join(f"{m}={table.get(m, model)[0]:.3f}" for m in ("milli", "random_lime", "single"))
        for model in table.models
    )
    overall = " > ".join(f"{m} {table.get(m)[0]:.3f}±{table.get(m)[1]:.3f}" for m in ("milli", "random_lime", "single"))
    ok = acc_ok and order_ok and not table.failures and elapsed < TABLE2_SECONDS
    record(
        6,
        ok,
        f"overall {overall}; gaps vs 2·sem {[(round(g, 3), round(t, 3)) for g, t in gaps]}; "
        f"accuracy {acc}; {elapsed / 60:.1f} min; per model [{per_model}]",
    )


# 7 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_independence_regime(tmp_path):
    cfg = config_from_dict(
        {
            "dataset": {"generator": "single_positive", "num_test": 200},
            "models": ["oracle", "instance", "attention"],
            "class_policy": "true_negative",
            "repeats": 10,
            "seed": 0,
        }
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = run_experiment(cfg, tmp_path, jobs=1)
    print(table.render())
    best = max(table.methods, key=lambda m: table.get(m)[0])
    b_mean, b_sem = table.get(best)
    close = {}
    for m in ("single", "combined", "guided_shap"):
        mean, s = table.get(m)
        close[m] = b_mean - mean <= 2 * max(s, b_sem)
    inherent = table.get("inherent", "attention")[0]
    combined = table.get("combined", "attention")[0]
    ok = all(close.values()) and inherent < combined and not table.failures
    summary = ", ".join(f"{m} {table.get(m)[0]:.3f}±{table.get(m)[1]:.3f}" for m in table.methods)
    record(
        7,
        ok,
        f"best {best}; within 2·sem {close}; attention inherent {inherent:.3f} vs combined {combined:.3f}; overall [{summary}]",
    )


# 8 -------------------------------------------------------------------------


def test_criterion_8_what_question():
    ds = generate_fourclass(small_config(seed=8))
    oracle = OracleModel.from_dataset(ds)
    tags = [0] * 30
    tags[4], tags[17] = 1, 2  # one concept-A, one concept-B instance
    bag = bag_from_tags(ds, tags, seed=3)
    a, b = 4, 17
    phi = milli_explain(oracle, bag, alpha=0.05, beta=0.01, n=150, seed=0)
    milli_ok = phi.row(2)[a] < 0 and phi.row(1)[b] < 0

    # the same sign pattern over every class-3 test bag, reported for context
    hits = total = 0
    for j, other in enumerate(x for x in ds.test if x.bag_label == 3):
        p = milli_explain(oracle, other, alpha=0.05, beta=0.01, n=150, seed=j)
        ia, ib = other.instance_tags == 1, other.instance_tags == 2
        hits += int((p.row(2)[ia] < 0).all() and (p.row(1)[ib] < 0).all())
        total += 1

    model, _ = train("attention", ds, TrainConfig(max_epochs=5, patience=2, seed=1))
    inh = inherent_attributions(model, bag).values
    rows_equal = all(np.array_equal(inh[c], inh[0]) for c in range(1, inh.shape[0]))
    single = single_attribution(oracle, bag)
    record(
        8,
        milli_ok and rows_equal,
        f"MILLI phi[2][A]={phi.row(2)[a]:+.3f}, phi[1][B]={phi.row(1)[b]:+.3f}; "
        f"attention rows identical: {rows_equal}; Single min {single.values.min():.3f} (cannot refute); "
        f"sign pattern on {hits}/{total} class-3 test bags",
    )


# 9 -------------------------------------------------------------------------


def test_criterion_9_gradient_checks():
    rng = np.random.default_rng(909)
    worst = {}
    for kind in ("instance", "attention"):
        model = build_model(kind, 4, 10, TrainConfig(seed=2))
        errs = [
            gradient_check(model, Bag(rng.normal(size=(int(rng.integers(1, 31)), 10)), int(rng.integers(0, 4))))
            for _ in range(GRAD_BAGS)
        ]
        worst[kind] = max(errs)
    record(9, max(worst.values()) <= GRAD_TOL, ", ".join(f"{k} max rel err {v:.1e}" for k, v in worst.items()))


# 10 ------------------------------------------------------------------------


def test_criterion_10_budget_accounting():
    rng = np.random.default_rng(1010)
    problems = []
    checked = 0
    for j in range(30):
        k = int(rng.integers(3, 16))
        bag = Bag(rng.normal(size=(k, 4)))
        classes = sorted(rng.choice(4, size=int(rng.integers(1, 5)), replace=False).tolist())
        for fn, want in ((single_attribution, k), (one_removed_attribution, k + 1), (combined_attribution, 2 * k + 1)):
            m = InteractionClassifier(4, 4, seed=j, max_bag=16)
            fn(m, bag, classes)
            if m.call_count != want:
                problems.append(f"{fn.__name__} k={k}: {m.call_count} != {want}")
            checked += 1
        n = 2 * k + 2 + int(rng.integers(0, 40))
        surrogates = {
            "milli": (lambda m: milli_explain(m, bag, classes, n=n, seed=j), "ranked_bernoulli"),
            "random_lime": (lambda m: lime_explain(m, bag, classes, n=n, seed=j), "equal_random"),
            "guided_shap": (lambda m: shap_explain(m, bag, classes, sampling="guided", n=n, seed=j), "guided"),
        }
        for name, (run, strategy) in surrogates.items():
            m = InteractionClassifier(4, 4, seed=j, max_bag=16)
            run(m)
            # independent recount of the distinct sub-bags the method has to see
            if strategy == "ranked_bernoulli":
                ranks = rank_by_single(InteractionClassifier(4, 4, seed=j, max_bag=16), bag)
                spec = SamplerSpec(strategy, n, seed=j, ranks=tuple(ranks.tolist()), alpha=0.05, beta=0.01)
                kernel = KernelSpec.milli(0.05, 0.01)
            else:
                spec = SamplerSpec(strategy, n, seed=j)
                kernel = KernelSpec.shap() if "shap" in name else KernelSpec.lime()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                masks = sample_coalitions(spec, kernel, k)
            seen = {z.tobytes() for z in masks}
            if strategy == "ranked_bernoulli":
                seen |= {z.tobytes() for z in np.eye(k, dtype=bool)}
            if m.call_count != len(seen) or m.call_count > n + k + 1:
                problems.append(f"{name} k={k} n={n}: {m.call_count} calls, expected {len(seen)} <= {n + k + 1}")
            checked += 1
    record(10, not problems, f"{checked} explain calls checked; mismatches: {problems[:3] or 'none'}")


# 11 ------------------------------------------------------------------------


def test_criterion_11_determinism(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(
        "dataset: {generator: fourclass, num_train: 80, num_val: 40, num_test: 30}\n"
        "models: [oracle, instance, attention]\n"
        "repeats: 2\n"
        "seed: 17\n"
        "train: {max_epochs: 5, patience: 2}\n"
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        first = cli_main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "a")])
        ledger = (tmp_path / "a" / "results.tsv").read_text().splitlines()[1]
        master = int(ledger.split("master_seed=")[1].split()[0])
        second = cli_main(["evaluate", "--config", str(cfg), "--seed", str(master), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "results.tsv").read_bytes()
    b = (tmp_path / "b" / "results.tsv").read_bytes()
    record(
        11,
        first == second == 0 and a == b,
        f"exit codes {first}/{second}; results files {len(a)} bytes, identical: {a == b}",
    )
