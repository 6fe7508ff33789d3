import numpy as np

from ..core import NEUTRAL, BagClassifier, ContractViolation
from ..datasets import ClassRule


class OracleModel(BagClassifier):
    """Noise-free classifier that knows the generating cluster centres.

    Each instance is assigned to its nearest centre; if that centre is a
    concept and lies within ``assignment_radius`` the instance counts as that
    concept, otherwise as background. The dataset's class rule then fixes the
    label, and the output is the one-hot label smoothed to ``eps`` on every
    other class.
    """

    has_inherent = False

    def __init__(self, centres, centre_tags, rule: ClassRule, eps: float = 0.01, assignment_radius: float = np.inf):
        super().__init__(rule.num_classes)
        if not 0 <= eps < 1.0 / rule.num_classes:
            raise ContractViolation("smoothing eps must lie in [0, 1/C)")
        self.centres = np.asarray(centres, dtype=float)
        self.centre_tags = np.asarray(centre_tags, dtype=int)
        self.rule = rule
        self.eps = float(eps)
        self.assignment_radius = float(assignment_radius)
        # label lookup over every presence pattern of the concept tags
        self._max_tag = int(self.centre_tags.max(initial=0))

    @classmethod
    def from_dataset(cls, dataset, **kw):
        return cls(dataset.centres, dataset.centre_tags, dataset.rule, **kw)

    def assign(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.centres.shape[1]:
            raise ContractViolation(f"instance dimension {x.shape[-1]} does not match centres ({self.centres.shape[1]})")
        dist = np.linalg.norm(x[:, None, :] - self.centres[None, :, :], axis=2)
        nearest = dist.argmin(axis=1)
        tags = self.centre_tags[nearest].copy()
        tags[dist[np.arange(len(x)), nearest] > self.assignment_radius] = NEUTRAL
        return tags

    def _distribution(self, label: int) -> np.ndarray:
        p = np.full(self.num_classes, self.eps)
        p[label] = 1.0 - self.eps * (self.num_classes - 1)
        return p

    def label_counts(self, counts) -> np.ndarray:
        return self._distribution(self.rule.label(np.asarray(counts)))

    def _forward(self, x):
        tags = self.assign(x)
        counts = np.bincount(tags, minlength=self._max_tag + 1)
        return self.label_counts(counts)

    def _forward_masks(self, x, masks):
        tags = self.assign(x)
        onehot = np.eye(self._max_tag + 1, dtype=int)[tags]
        counts = masks.astype(int) @ onehot
        labels = np.array([self.rule.label(c) for c in counts])
        out = np.full((len(masks), self.num_classes), self.eps)
        out[np.arange(len(masks)), labels] = 1.0 - self.eps * (self.num_classes - 1)
        return out
