from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import AttributionMatrix, Bag, MethodInapplicableError, MILError
from .nets import AttentionModel, InstanceModel, ParamModel

log = logging.getLogger(__name__)


class TrainingError(MILError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    optimizer: str = "adam"
    # model construction knobs
    pooling: str = "geometric"
    hidden: int = 16
    attention_hidden: int = 8

    def validate(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if self.max_epochs and self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        return self


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


MODEL_KINDS = ("instance", "attention", "embedding")


def build_model(kind: str, num_classes: int, feature_dim: int, cfg: TrainConfig) -> ParamModel:
    if kind == "instance":
        return InstanceModel(num_classes, feature_dim, pooling=cfg.pooling, hidden=cfg.hidden, seed=cfg.seed)
    if kind in ("attention", "embedding"):
        return AttentionModel(
            num_classes,
            feature_dim,
            hidden=cfg.hidden,
            attention_hidden=cfg.attention_hidden,
            use_attention=kind == "attention",
            seed=cfg.seed,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def evaluate_loss_acc(model: ParamModel, bags) -> tuple[float, float]:
    if not bags:
        return float("nan"), float("nan")
    losses, hits = [], 0
    for b in bags:
        p = model._forward(b.instances)
        losses.append(-np.log(max(p[b.bag_label], 1e-300)))
        hits += int(np.argmax(p) == b.bag_label)
    return float(np.mean(losses)), hits / len(bags)


def accuracy(model, bags) -> float:
    hits = sum(int(np.argmax(model.predict(b)) == b.bag_label) for b in bags)
    return hits / len(bags)


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train(model_kind, dataset, cfg: TrainConfig | None = None) -> tuple[ParamModel, TrainLog]:
    """Fit a model with one update per bag and early stopping on validation loss.

    ``model_kind`` is a kind name or an already constructed model. The
    parameters with the lowest validation loss are restored at the end.
    """
    cfg = (cfg or TrainConfig()).validate()
    model = (
        model_kind
        if isinstance(model_kind, ParamModel)
        else build_model(model_kind, dataset.num_classes, dataset.feature_dim, cfg)
    )
    train_bags, val_bags = dataset.train, dataset.val
    if cfg.max_epochs and (not train_bags or not val_bags):
        raise TrainingError("training needs non-empty train and val splits")
    rng = np.random.default_rng(cfg.seed + 7919)
    opt = _Adam(model.params, cfg.learning_rate) if cfg.optimizer == "adam" else None
    tlog = TrainLog()
    best_loss, best_params, waited = np.inf, model.copy_params(), 0
    for epoch in range(cfg.max_epochs):
        losses, hits = [], 0
        for idx in rng.permutation(len(train_bags)):
            bag = train_bags[idx]
            loss, grads = model.loss_and_grad(bag.instances, bag.bag_label)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            losses.append(loss)
            if opt is not None:
                opt.step(model.params, grads)
            else:
                for k, g in grads.items():
                    model.params[k] = model.params[k] - cfg.learning_rate * g
        train_loss, train_acc = evaluate_loss_acc(model, train_bags)
        val_loss, val_acc = evaluate_loss_acc(model, val_bags)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        tlog.epochs.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
        log.debug("epoch %d train %.4f/%.3f val %.4f/%.3f", epoch, train_loss, train_acc, val_loss, val_acc)
        if val_loss < best_loss:
            best_loss, best_params, waited = val_loss, model.copy_params(), 0
            tlog.best_epoch = epoch
        else:
            waited += 1
            if waited >= cfg.patience:
                tlog.stopped_early = True
                break
    model.params = best_params
    model.reset_calls()
    return model, tlog


def gradient_check(model: ParamModel, bag: Bag, epsilon: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients."""
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    x, y = bag.instances, bag.bag_label
    _, grads = model.loss_and_grad(x, y)
    analytic = np.concatenate([grads[k].ravel() for k in model.params])
    theta = model.get_flat()
    numeric = np.empty_like(theta)
    try:
        for j in range(theta.size):
            t = theta.copy()
            t[j] += epsilon
            model.set_flat(t)
            up = model.loss(x, y)
            t[j] -= 2 * epsilon
            model.set_flat(t)
            down = model.loss(x, y)
            numeric[j] = (up - down) / (2 * epsilon)
    finally:
        model.set_flat(theta)
    # absolute floor keeps near-zero gradients from inflating the ratio
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def inherent_attributions(model, bag: Bag) -> AttributionMatrix:
    """Read attributions straight out of the model (instance predictions or attention)."""
    if not getattr(model, "has_inherent", False):
        raise MethodInapplicableError(f"{type(model).__name__} has no inherent interpretability method")
    return model.inherent_attributions(bag)
