"""Small trainable MIL networks with hand-written gradients.

``InstanceModel`` classifies each instance and pools the per-instance class
distributions: arithmetic mean, renormalised max, or renormalised geometric
mean (equivalently a softmax over the mean instance logits).
``AttentionModel`` embeds instances, pools the embeddings with a learned
softmax attention and classifies the bag embedding; with
``use_attention=False`` it pools with uniform weights instead.
"""

from __future__ import annotations

import numpy as np

from ..core import AttributionMatrix, Bag, BagClassifier, ContractViolation


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class ParamModel(BagClassifier):
    """Classifier whose parameters live in an ordered dict of float arrays."""

    kind = ""
    has_inherent = True

    def __init__(self, num_classes: int, feature_dim: int):
        super().__init__(num_classes)
        self.feature_dim = int(feature_dim)
        self.params: dict[str, np.ndarray] = {}

    def architecture(self) -> dict:
        return {"kind": self.kind, "num_classes": self.num_classes, "feature_dim": self.feature_dim}

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.num_params:
            raise ContractViolation(f"expected {self.num_params} parameters, got {flat.size}")
        pos = 0
        for name, p in self.params.items():
            self.params[name] = flat[pos : pos + p.size].reshape(p.shape).copy()
            pos += p.size

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def _check(self, x):
        if x.shape[1] != self.feature_dim:
            raise ContractViolation(f"instance dimension {x.shape[1]} != model dimension {self.feature_dim}")

    def loss_and_grad(self, x: np.ndarray, y: int):
        """Cross-entropy of the bag prediction and its gradient w.r.t. every parameter."""
        raise NotImplementedError

    def loss(self, x: np.ndarray, y: int) -> float:
        p = self._forward(np.asarray(x, dtype=float))
        return float(-np.log(max(p[y], 1e-300)))

    def inherent_attributions(self, bag: Bag) -> AttributionMatrix:
        raise NotImplementedError


class InstanceModel(ParamModel):
    """Per-instance classifier followed by pooling of instance distributions.

    With ``hidden=0`` the instance logits are linear (``W x + b``); otherwise a
    single tanh layer of that width sits in front of the linear map.
    """

    kind = "instance"

    def __init__(
        self,
        num_classes: int,
        feature_dim: int,
        pooling: str = "mean",
        hidden: int = 0,
        seed: int = 0,
        init_scale: float = 0.1,
    ):
        super().__init__(num_classes, feature_dim)
        if pooling not in ("mean", "max", "geometric"):
            raise ContractViolation(f"unknown pooling {pooling!r}")
        self.pooling = pooling
        self.hidden = int(hidden)
        rng = np.random.default_rng(seed)
        if self.hidden:
            self.params = {
                "V": rng.normal(0.0, 1.0 / np.sqrt(feature_dim), (self.hidden, feature_dim)),
                "v0": np.zeros(self.hidden),
                "W": rng.normal(0.0, 1.0 / np.sqrt(self.hidden), (num_classes, self.hidden)),
                "b": np.zeros(num_classes),
            }
        else:
            self.params = {
                "W": rng.normal(0.0, init_scale, (num_classes, feature_dim)),
                "b": np.zeros(num_classes),
            }

    def architecture(self):
        return {**super().architecture(), "pooling": self.pooling, "hidden": self.hidden}

    def _features(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        if self.hidden:
            return np.tanh(x @ self.params["V"].T + self.params["v0"])
        return x

    def _logits(self, x):
        return self._features(x) @ self.params["W"].T + self.params["b"]

    def instance_probs(self, x) -> np.ndarray:
        return softmax(self._logits(x))

    def _forward(self, x):
        if self.pooling == "geometric":
            return softmax(self._logits(x).mean(axis=0))
        p = self.instance_probs(x)
        if self.pooling == "mean":
            return p.mean(axis=0)
        m = p.max(axis=0)
        return m / m.sum()

    def _forward_masks(self, x, masks):
        z = self._logits(x)
        if self.pooling == "geometric":
            return softmax((masks @ z) / masks.sum(axis=1, keepdims=True), axis=1)
        p = softmax(z)
        if self.pooling == "mean":
            return (masks @ p) / masks.sum(axis=1, keepdims=True)
        m = np.where(masks[:, :, None], p[None], -np.inf).max(axis=1)
        return m / m.sum(axis=1, keepdims=True)

    def loss_and_grad(self, x, y):
        x = np.asarray(x, dtype=float)
        feats = self._features(x)
        z = feats @ self.params["W"].T + self.params["b"]
        p = softmax(z)
        k, C = p.shape
        onehot = np.eye(C)[y]
        if self.pooling == "geometric":
            # normalised geometric mean of instance distributions == softmax of mean logits
            P = softmax(z.mean(axis=0))
            g = np.tile((P - onehot) / k, (k, 1))
            loss = -np.log(P[y])
        elif self.pooling == "mean":
            P = p.mean(axis=0)
            # dL/dz_ic = -(1 / (k P_y)) p_iy (delta_yc - p_ic)
            g = -(p[:, [y]] / (k * P[y])) * (onehot[None, :] - p)
            loss = -np.log(P[y])
        else:
            winners = p.argmax(axis=0)
            M = p[winners, np.arange(C)]
            S = M.sum()
            dM = 1.0 / S - onehot / M[y]
            g = np.zeros_like(p)
            for c in range(C):
                i = winners[c]
                g[i] += dM[c] * p[i, c] * ((np.arange(C) == c) - p[i])
            loss = -np.log(M[y] / S)
        grads = {"W": g.T @ feats, "b": g.sum(axis=0)}
        if self.hidden:
            dpre = (g @ self.params["W"]) * (1.0 - feats**2)
            grads["V"] = dpre.T @ x
            grads["v0"] = dpre.sum(axis=0)
        return float(loss), {name: grads[name] for name in self.params}

    def inherent_attributions(self, bag):
        return AttributionMatrix(self.instance_probs(bag.instances).T, "inherent")


class AttentionModel(ParamModel):
    kind = "attention"

    def __init__(
        self,
        num_classes: int,
        feature_dim: int,
        hidden: int = 16,
        attention_hidden: int = 8,
        use_attention: bool = True,
        seed: int = 0,
    ):
        super().__init__(num_classes, feature_dim)
        self.hidden = int(hidden)
        self.attention_hidden = int(attention_hidden)
        self.use_attention = bool(use_attention)
        rng = np.random.default_rng(seed)
        h, a, d, C = self.hidden, self.attention_hidden, feature_dim, num_classes
        self.params = {
            "V": rng.normal(0.0, 1.0 / np.sqrt(d), (h, d)),
            "v0": np.zeros(h),
            "U": rng.normal(0.0, 1.0 / np.sqrt(h), (a, h)),
            "u0": np.zeros(a),
            "w": rng.normal(0.0, 1.0 / np.sqrt(a), a),
            "Q": rng.normal(0.0, 1.0 / np.sqrt(h), (C, h)),
            "q0": np.zeros(C),
        }
        if not self.use_attention:
            self.has_inherent = False

    def architecture(self):
        return {
            **super().architecture(),
            "hidden": self.hidden,
            "attention_hidden": self.attention_hidden,
            "use_attention": self.use_attention,
        }

    def _embed(self, x):
        self._check(x)
        P = self.params
        H = np.tanh(x @ P["V"].T + P["v0"])
        T = np.tanh(H @ P["U"].T + P["u0"])
        e = T @ P["w"] if self.use_attention else np.zeros(len(x))
        return H, T, e

    def attention(self, x) -> np.ndarray:
        _, _, e = self._embed(np.asarray(x, dtype=float))
        return softmax(e)

    def _forward(self, x):
        H, _, e = self._embed(x)
        z = softmax(e) @ H
        return softmax(self.params["Q"] @ z + self.params["q0"])

    def _forward_masks(self, x, masks):
        H, _, e = self._embed(x)
        A = softmax(np.where(masks, e[None, :], -np.inf), axis=1)
        Z = A @ H
        return softmax(Z @ self.params["Q"].T + self.params["q0"], axis=1)

    def loss_and_grad(self, x, y):
        x = np.asarray(x, dtype=float)
        P = self.params
        H, T, e = self._embed(x)
        a = softmax(e)
        z = a @ H
        prob = softmax(P["Q"] @ z + P["q0"])
        loss = -np.log(prob[y])

        g = prob.copy()
        g[y] -= 1.0
        grads = {"Q": np.outer(g, z), "q0": g}
        dz = P["Q"].T @ g
        dH = np.outer(a, dz)
        if self.use_attention:
            da = H @ dz
            de = a * (da - a @ da)
            grads["w"] = T.T @ de
            dS = np.outer(de, P["w"]) * (1.0 - T**2)
            grads["U"] = dS.T @ H
            grads["u0"] = dS.sum(axis=0)
            dH = dH + dS @ P["U"]
        else:
            grads["w"] = np.zeros_like(P["w"])
            grads["U"] = np.zeros_like(P["U"])
            grads["u0"] = np.zeros_like(P["u0"])
        dpre = dH * (1.0 - H**2)
        grads["V"] = dpre.T @ x
        grads["v0"] = dpre.sum(axis=0)
        return float(loss), {name: grads[name] for name in P}

    def inherent_attributions(self, bag):
        if not self.use_attention:
            raise ContractViolation("embedding model without attention has no inherent attributions")
        a = self.attention(bag.instances)
        return AttributionMatrix(np.tile(a, (self.num_classes, 1)), "inherent")
