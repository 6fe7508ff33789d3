"""Synthetic MIL datasets and a line-based text format for storing them.

Every instance is drawn from an isotropic unit-variance Gaussian around one of
a handful of cluster centres: one or more background centres and one centre
per concept. All centres sit on orthogonal axes so that every pair is exactly
``class_separation`` apart.

Tags follow the convention of :mod:`milinterp.core`: ``0`` for background,
``c > 0`` for an instance of the concept associated with class ``c`` and
``-1`` for an unlabeled instance. Which classes a tagged instance supports or
refutes is a property of the dataset's :class:`ClassRule`, not of the file.

File format (version 1)::

    MILBAGS 1
    header C=<int> d=<int> rule=<name> train=<int> val=<int> test=<int>
    centre <tag> <d comma-separated floats>          (zero or more)
    bag <bag_id> <label> <k>
    <d comma-separated floats>[<TAB><tag>]           (exactly k rows)
    ...

Bags are stored in split order (train, then val, then test). Blank lines and
lines starting with ``#`` are ignored. Tags are either present on every row of
a bag or on none; a tag is an integer or ``-`` for unlabeled. Anything that
does not fit the grammar is a :class:`ParseError` carrying the line number.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import NEUTRAL, UNLABELED, Bag, MetricUnavailableError, MILError

log = logging.getLogger(__name__)

FORMAT_MAGIC = "MILBAGS"
FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")


class GenerationError(MILError):
    pass


class ConfigError(MILError, ValueError):
    pass


class ParseError(MILError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(ParseError):
    pass


class ClassRule:
    """Maps the set of concepts present in a bag to its label.

    ``relevance(tag, c)`` gives +1 when an instance with ``tag`` supports
    class ``c``, -1 when it refutes it and 0 otherwise. Background supports
    class 0, the label of a bag holding nothing else, and is neutral for the
    positive classes.
    """

    name = ""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes

    def label(self, counts: np.ndarray) -> int:
        """``counts[t]`` is how many instances with tag ``t`` are in the bag."""
        raise NotImplementedError

    def supports(self, tag: int) -> frozenset:
        raise NotImplementedError

    def relevance(self, tag: int, c: int) -> int:
        if tag < NEUTRAL:
            return 0
        if tag == NEUTRAL:
            return int(c == 0)
        if c in self.supports(tag):
            return 1
        return -1 if c in self.refutes(tag) else 0

    def refutes(self, tag: int) -> frozenset:
        # A key instance refutes every class whose rule requires its concept to be absent.
        return frozenset(range(self.num_classes)) - self.supports(tag)

    def relevance_table(self) -> np.ndarray:
        """Array ``R[t, c]`` for tags ``0..num_classes-1``."""
        return np.array([[self.relevance(t, c) for c in range(self.num_classes)] for t in range(self.num_classes)])


class FourClassRule(ClassRule):
    """Class 1 if concept A (tag 1) is present, 2 if B (tag 2), 3 if both, else 0."""

    name = "fourclass"

    def __init__(self, num_classes: int = 4):
        if num_classes != 4:
            raise ConfigError("the four-class rule has exactly 4 classes")
        super().__init__(4)

    def label(self, counts):
        a = len(counts) > 1 and counts[1] > 0
        b = len(counts) > 2 and counts[2] > 0
        return int(a) + 2 * int(b)

    def supports(self, tag):
        return frozenset({1: (1, 3), 2: (2, 3)}.get(tag, ()))


class SMILRule(ClassRule):
    """Standard MIL: positive iff any instance is positive."""

    name = "smil"

    def __init__(self, num_classes: int = 2):
        if num_classes != 2:
            raise ConfigError("the SMIL rule is binary")
        super().__init__(2)

    def label(self, counts):
        return int(len(counts) > 1 and counts[1] > 0)

    def supports(self, tag):
        return frozenset({1}) if tag == 1 else frozenset()


class SinglePositiveRule(ClassRule):
    """Bag label is the positive concept it contains.

    Generated bags never mix concepts. For arbitrary bags the most frequent
    concept wins, ties going to the smaller class index.
    """

    name = "single_positive"

    def label(self, counts):
        pos = np.asarray(counts[1 : self.num_classes])
        if pos.size == 0 or pos.max() == 0:
            return 0
        return int(np.argmax(pos)) + 1

    def supports(self, tag):
        return frozenset({tag}) if 0 < tag < self.num_classes else frozenset()


RULES = {r.name: r for r in (FourClassRule, SMILRule, SinglePositiveRule)}


def make_rule(name: str, num_classes: int) -> ClassRule:
    try:
        return RULES[name](num_classes)
    except KeyError:
        raise ConfigError(f"unknown class rule {name!r}") from None


@dataclass
class GeneratorConfig:
    num_train: int = 2500
    num_val: int = 1000
    num_test: int = 1000
    bag_size_mean: float = 30.0
    bag_size_std: float = math.sqrt(2.0)
    feature_dim: int = 10
    class_separation: float = 8.0
    seed: int = 0
    concept_count_min: int = 1
    concept_count_max: int = 4
    num_background: int = 1

    def validate(self):
        if min(self.num_train, self.num_val, self.num_test) < 0:
            raise ConfigError("split sizes must be non-negative")
        if self.bag_size_mean < 2:
            raise ConfigError("bag_size_mean must be at least 2")
        if self.bag_size_std < 0:
            raise ConfigError("bag_size_std must be non-negative")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be at least 1")
        if not self.class_separation > 0:
            raise ConfigError("class_separation must be positive")
        if not 1 <= self.concept_count_min <= self.concept_count_max:
            raise ConfigError("need 1 <= concept_count_min <= concept_count_max")
        if self.num_background < 1:
            raise ConfigError("need at least one background cluster")
        return self

    @property
    def split_sizes(self):
        return {"train": self.num_train, "val": self.num_val, "test": self.num_test}


@dataclass
class Dataset:
    bags: list
    num_classes: int
    rule: ClassRule
    split_sizes: dict = field(default_factory=dict)
    centres: Optional[np.ndarray] = None
    centre_tags: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.split_sizes:
            self.split_sizes = {"train": len(self.bags), "val": 0, "test": 0}
        if sum(self.split_sizes.values()) != len(self.bags):
            raise SchemaError("split sizes do not cover the bags exactly")
        for b in self.bags:
            if not 0 <= b.bag_label < self.num_classes:
                raise SchemaError(f"bag {b.bag_id}: label {b.bag_label} outside [0, {self.num_classes})")
            if b.instance_tags is not None and b.instance_tags.max() >= self.num_classes:
                raise SchemaError(f"bag {b.bag_id}: tag outside [0, {self.num_classes})")

    @property
    def feature_dim(self) -> int:
        return self.bags[0].d

    def split(self, name: str) -> list:
        start = 0
        for s in SPLITS:
            n = self.split_sizes.get(s, 0)
            if s == name:
                return self.bags[start : start + n]
            start += n
        raise KeyError(name)

    @property
    def train(self):
        return self.split("train")

    @property
    def val(self):
        return self.split("val")

    @property
    def test(self):
        return self.split("test")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_centres = (self.centres is None and other.centres is None) or (
            self.centres is not None
            and other.centres is not None
            and np.array_equal(self.centres, other.centres)
            and np.array_equal(self.centre_tags, other.centre_tags)
        )
        return (
            self.num_classes == other.num_classes
            and self.rule.name == other.rule.name
            and self.split_sizes == other.split_sizes
            and same_centres
            and len(self.bags) == len(other.bags)
            and all(a == b for a, b in zip(self.bags, other.bags))
        )


def _centres(cfg: GeneratorConfig, num_concepts: int):
    n = cfg.num_background + num_concepts
    if n > cfg.feature_dim:
        raise GenerationError(f"{n} clusters need feature_dim >= {n}, got {cfg.feature_dim}")
    centres = np.zeros((n, cfg.feature_dim))
    centres[np.arange(n), np.arange(n)] = cfg.class_separation / math.sqrt(2.0)
    tags = np.array([NEUTRAL] * cfg.num_background + list(range(1, num_concepts + 1)))
    return centres, tags


def _bag_size(rng, cfg):
    return max(2, int(round(rng.normal(cfg.bag_size_mean, cfg.bag_size_std))))


def _make_bag(rng, cfg, centres, centre_tags, concept_counts: dict, label: int, bag_id: str, k=None) -> Bag:
    k = _bag_size(rng, cfg) if k is None else k
    needed = sum(concept_counts.values())
    if needed > k:
        raise GenerationError(f"bag {bag_id}: {needed} concept instances do not fit in a bag of {k}")
    tags = np.full(k, NEUTRAL)
    pos = 0
    for tag, count in concept_counts.items():
        tags[pos : pos + count] = tag
        pos += count
    tags = rng.permutation(tags)
    bg_rows = np.flatnonzero(centre_tags == NEUTRAL)
    rows = np.empty(k, dtype=int)
    for i, t in enumerate(tags):
        rows[i] = rng.choice(bg_rows) if t == NEUTRAL else np.flatnonzero(centre_tags == t)[0]
    x = centres[rows] + rng.standard_normal((k, cfg.feature_dim))
    return Bag(x, label, tags, bag_id)


def _concept_count(rng, cfg, k_budget: int) -> int:
    hi = min(cfg.concept_count_max, k_budget)
    if hi < cfg.concept_count_min:
        raise GenerationError("bag too small for the required number of concept instances")
    return int(rng.integers(cfg.concept_count_min, hi + 1))


def _balanced_labels(rng, n: int, num_classes: int) -> np.ndarray:
    return rng.permutation(np.resize(np.arange(num_classes), n))


def _generate(cfg: GeneratorConfig, rule: ClassRule, concepts_for_label, num_concepts: int) -> Dataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    centres, centre_tags = _centres(cfg, num_concepts)
    min_needed = cfg.concept_count_min * max(len(concepts_for_label(c)) for c in range(rule.num_classes))
    if round(cfg.bag_size_mean) < min_needed:
        raise GenerationError(f"mean bag size {cfg.bag_size_mean} is below the {min_needed} required concept instances")
    bags = []
    for split in SPLITS:
        n = cfg.split_sizes[split]
        for j, label in enumerate(_balanced_labels(rng, n, rule.num_classes)):
            required = concepts_for_label(int(label))
            # tail draws below the concept minimum are clamped so one unlucky bag cannot abort generation
            k = max(_bag_size(rng, cfg), cfg.concept_count_min * len(required))
            budget = k // max(1, len(required))
            counts = {t: _concept_count(rng, cfg, budget) for t in required}
            bags.append(_make_bag(rng, cfg, centres, centre_tags, counts, int(label), f"{split}-{j}", k))
    return Dataset(bags, rule.num_classes, rule, dict(cfg.split_sizes), centres, centre_tags)


def generate_fourclass(cfg: GeneratorConfig) -> Dataset:
    """Interaction dataset: label 1 for concept A, 2 for B, 3 for both, 0 for neither."""
    return _generate(cfg, FourClassRule(), lambda c: [t for t in (1, 2) if c & t], 2)


def generate_single_positive(cfg: GeneratorConfig, num_positive_classes: int) -> Dataset:
    if num_positive_classes < 1:
        raise ConfigError("need at least one positive class")
    rule = SinglePositiveRule(num_positive_classes + 1)
    return _generate(cfg, rule, lambda c: [c] if c > 0 else [], num_positive_classes)


def generate_smil(cfg: GeneratorConfig, witness_rate_target: float) -> Dataset:
    """Binary SMIL dataset where positive bags hold roughly ``witness_rate_target`` key instances."""
    if not 0 < witness_rate_target < 1:
        raise ConfigError("witness rate must lie strictly between 0 and 1")
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    centres, centre_tags = _centres(cfg, 1)
    bags = []
    for split in SPLITS:
        for j, label in enumerate(_balanced_labels(rng, cfg.split_sizes[split], 2)):
            k = _bag_size(rng, cfg)
            counts = {}
            if label:
                # one guaranteed positive, the rest Binomial so the mean count is rate * k
                p = min(1.0, max(0.0, (witness_rate_target * k - 1) / (k - 1)))
                counts[1] = 1 + int(rng.binomial(k - 1, p))
            bags.append(_make_bag(rng, cfg, centres, centre_tags, counts, int(label), f"{split}-{j}", k))
    return Dataset(bags, 2, SMILRule(), dict(cfg.split_sizes), centres, centre_tags)


def witness_rate(dataset, bags: Optional[list] = None) -> float:
    """Mean fraction of key (non-neutral, labeled) instances per bag."""
    bags = dataset.bags if bags is None else bags
    if not bags:
        raise MetricUnavailableError("no bags")
    rates = []
    for b in bags:
        if b.instance_tags is None:
            raise MetricUnavailableError(f"bag {b.bag_id} has no instance tags")
        rates.append(np.count_nonzero(b.instance_tags > NEUTRAL) / b.k)
    return float(np.mean(rates))


# ---------------------------------------------------------------------- file format


def _fmt_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_dataset(dataset: Dataset, path) -> None:
    lines = [f"{FORMAT_MAGIC} {FORMAT_VERSION}"]
    splits = " ".join(f"{s}={dataset.split_sizes.get(s, 0)}" for s in SPLITS)
    lines.append(f"header C={dataset.num_classes} d={dataset.feature_dim} rule={dataset.rule.name} {splits}")
    if dataset.centres is not None:
        for tag, c in zip(dataset.centre_tags, dataset.centres):
            lines.append(f"centre {int(tag)} {_fmt_row(c)}")
    for b in dataset.bags:
        if not b.bag_id or any(ch.isspace() for ch in b.bag_id):
            raise SchemaError(f"bag id {b.bag_id!r} must be non-empty without whitespace")
        lines.append(f"bag {b.bag_id} {b.bag_label} {b.k}")
        for i, row in enumerate(b.instances):
            line = _fmt_row(row)
            if b.instance_tags is not None:
                t = int(b.instance_tags[i])
                line += "\t" + ("-" if t == UNLABELED else str(t))
            lines.append(line)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_floats(text: str, d: int, lineno: int) -> list:
    parts = text.split(",")
    if len(parts) != d:
        raise SchemaError(f"expected {d} features, found {len(parts)}", lineno)
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"malformed feature value in {text!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite feature value", lineno)
    return vals


def _parse_int(text: str, what: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"malformed {what}: {text!r}", lineno) from None


def load_dataset(path) -> Dataset:
    raw = Path(path).read_text().split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    lines = [(i + 1, ln.rstrip("\r")) for i, ln in enumerate(raw) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty dataset file", 1)
    it = iter(lines)
    lineno, first = next(it)
    if first.split() != [FORMAT_MAGIC, str(FORMAT_VERSION)]:
        raise ParseError(f"expected '{FORMAT_MAGIC} {FORMAT_VERSION}' header", lineno)
    try:
        lineno, hdr = next(it)
    except StopIteration:
        raise ParseError("missing header line", lineno) from None
    fields = hdr.split()
    if not fields or fields[0] != "header":
        raise ParseError("expected 'header' line", lineno)
    meta = {}
    for f in fields[1:]:
        key, sep, val = f.partition("=")
        if not sep:
            raise ParseError(f"malformed header field {f!r}", lineno)
        meta[key] = val
    for key in ("C", "d", "rule", *SPLITS):
        if key not in meta:
            raise ParseError(f"header missing {key}", lineno)
    num_classes = _parse_int(meta["C"], "C", lineno)
    d = _parse_int(meta["d"], "d", lineno)
    splits = {s: _parse_int(meta[s], s, lineno) for s in SPLITS}
    try:
        rule = make_rule(meta["rule"], num_classes)
    except ConfigError as e:
        raise ParseError(str(e), lineno) from None

    centres, centre_tags, bags = [], [], []
    pending = None
    for lineno, line in it:
        if pending is not None:
            bag_id, label, k, rows, tags = pending
            parts = line.split("\t")
            if len(parts) > 2:
                raise ParseError("trailing fields after tag column", lineno)
            has_tag = len(parts) == 2
            if not rows:
                tags = [] if has_tag else None
            elif has_tag != (tags is not None):
                raise ParseError("tag column must be present on every row of a bag or none", lineno)
            rows.append(_parse_floats(parts[0].strip(), d, lineno))
            if has_tag:
                t = parts[1].strip()
                tags.append(UNLABELED if t == "-" else _parse_int(t, "tag", lineno))
            pending = (bag_id, label, k, rows, tags)
            if len(rows) == k:
                bags.append(_finish_bag(pending, num_classes, lineno))
                pending = None
            continue
        parts = line.split()
        if parts[0] == "centre":
            if bags:
                raise ParseError("centre lines must precede bags", lineno)
            if len(parts) != 3:
                raise ParseError("centre line needs a tag and one feature vector", lineno)
            centre_tags.append(_parse_int(parts[1], "centre tag", lineno))
            centres.append(_parse_floats(parts[2], d, lineno))
        elif parts[0] == "bag":
            if len(parts) != 4:
                raise ParseError("bag record needs bag_id, label and k", lineno)
            label = _parse_int(parts[2], "bag label", lineno)
            k = _parse_int(parts[3], "bag size", lineno)
            if k < 1:
                raise ParseError("bag size must be at least 1", lineno)
            pending = (parts[1], label, k, [], None)
        else:
            raise ParseError(f"unexpected record {parts[0]!r}", lineno)
    if pending is not None:
        raise ParseError(f"bag {pending[0]} truncated: {len(pending[3])} of {pending[2]} rows", lineno)
    try:
        return Dataset(
            bags,
            num_classes,
            rule,
            splits,
            np.array(centres) if centres else None,
            np.array(centre_tags) if centres else None,
        )
    except SchemaError as e:
        raise SchemaError(str(e), lineno) from None


def _finish_bag(pending, num_classes, lineno) -> Bag:
    bag_id, label, k, rows, tags = pending
    if not 0 <= label < num_classes:
        raise SchemaError(f"bag {bag_id}: label {label} outside [0, {num_classes})", lineno)
    return Bag(np.array(rows), label, None if tags is None else np.array(tags), bag_id)
