"""Experiment configuration, loaded from YAML (JSON is accepted as a YAML subset)."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from ..datasets import ConfigError, GeneratorConfig
from ..metrics import CLASS_POLICIES, METRICS
from ..models import TrainConfig

GENERATORS = ("fourclass", "single_positive", "smil")
MODEL_NAMES = ("oracle", "instance", "attention", "embedding")
METHOD_NAMES = (
    "inherent",
    "single",
    "one_removed",
    "combined",
    "random_lime",
    "guided_lime",
    "random_shap",
    "guided_shap",
    "milli",
)
SURROGATE_METHODS = ("random_lime", "guided_lime", "random_shap", "guided_shap", "milli")

# MILLI defaults per regime: instance interactions vs independent instances.
MILLI_DEFAULTS = {
    "fourclass": {"alpha": 0.05, "beta": 0.01, "n": 150},
    "single_positive": {"alpha": 0.05, "beta": -0.01, "n": 200},
    "smil": {"alpha": 0.05, "beta": -0.01, "n": 200},
}


def derive_seed(master: int, *parts) -> int:
    """Stable 31-bit seed for a named stream; independent of process and hash salt."""
    text = ":".join(str(p) for p in (master, *parts))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little") & 0x7FFFFFFF


@dataclass
class DatasetSpec:
    generator: str = "fourclass"
    params: dict = field(default_factory=dict)  # GeneratorConfig fields, minus the seed
    num_positive_classes: int = 3  # single_positive only
    witness_rate: float = 0.1  # smil only

    def generator_config(self, seed: int) -> GeneratorConfig:
        return GeneratorConfig(**{**self.params, "seed": seed}).validate()


@dataclass
class MethodSpec:
    name: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.params.get("label", self.name)


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    models: list = field(default_factory=lambda: ["oracle", "instance", "attention"])
    methods: list = field(default_factory=lambda: [MethodSpec(m) for m in METHOD_NAMES])
    metric: str = "ndcg"
    class_policy: str = "all"
    repeats: int = 10
    seed: int = 0
    train: dict = field(default_factory=dict)
    budget: Optional[int] = None  # surrogate sample budget; None -> regime default
    eval_split: str = "test"
    max_eval_bags: Optional[int] = None
    aopc_orderings: int = 10
    output_dir: Optional[str] = None

    def validate(self):
        if self.dataset.generator not in GENERATORS:
            raise ConfigError(f"unknown dataset generator {self.dataset.generator!r}")
        try:
            self.dataset.generator_config(0)
        except TypeError as e:
            raise ConfigError(f"bad dataset parameter: {e}") from None
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}")
        if not self.methods:
            raise ConfigError("no methods configured")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError("method labels must be unique")
        for m in self.methods:
            if m.name not in METHOD_NAMES:
                raise ConfigError(f"unknown method {m.name!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.class_policy not in CLASS_POLICIES:
            raise ConfigError(f"unknown class policy {self.class_policy!r}")
        if self.eval_split not in ("train", "val", "test"):
            raise ConfigError(f"unknown split {self.eval_split!r}")
        if self.budget is not None and self.budget < 3:
            raise ConfigError("budget must be at least 3")
        try:
            self.train_config(0)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad train parameter: {e}") from None
        return self

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": seed}).validate()

    def method_params(self, spec: MethodSpec) -> dict:
        """Resolved parameters for a method, with regime defaults filled in."""
        params = {k: v for k, v in spec.params.items() if k != "label"}
        regime = MILLI_DEFAULTS[self.dataset.generator]
        if spec.name in SURROGATE_METHODS:
            params.setdefault("n", self.budget if self.budget is not None else regime["n"])
        if spec.name == "milli":
            params.setdefault("alpha", regime["alpha"])
            params.setdefault("beta", regime["beta"])
        return params

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _method(entry) -> MethodSpec:
    if isinstance(entry, str):
        return MethodSpec(entry)
    if isinstance(entry, dict) and "name" in entry:
        params = {k: v for k, v in entry.items() if k != "name"}
        return MethodSpec(entry["name"], params.get("params", params))
    raise ConfigError(f"cannot read method entry {entry!r}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    ds = raw.pop("dataset", {}) or {}
    if not isinstance(ds, dict):
        raise ConfigError("dataset must be a mapping")
    ds = dict(ds)
    dataset = DatasetSpec(
        generator=ds.pop("generator", "fourclass"),
        num_positive_classes=int(ds.pop("num_positive_classes", 3)),
        witness_rate=float(ds.pop("witness_rate", 0.1)),
        params=ds,
    )
    methods = raw.pop("methods", None)
    cfg = ExperimentConfig(dataset=dataset, **raw)
    if methods is not None:
        cfg.methods = [_method(m) for m in methods]
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {e}") from None
    return config_from_dict(raw)
