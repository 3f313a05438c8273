"""Precision@k, pseudo-label recovery F1-loss and progression-curve AUC."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


def top_k(scores, k):
    """Indices of the k largest scores; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


def precision_at_k(scores, truth, k):
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    K = scores.shape[-1]
    if not 1 <= k <= K:
        raise InputError(f"k must lie in [1, {K}], got {k}")
    if truth.shape != scores.shape:
        raise InputError(f"truth shape {truth.shape} != scores shape {scores.shape}")
    idx = top_k(scores, k)
    return np.take_along_axis(truth, idx, axis=-1).sum(axis=-1) / k


def mean_precision_at_k(scores, truth, k):
    """P@k averaged over the rows of a score matrix."""
    return float(np.mean(precision_at_k(scores, truth, k)))


def _f1(pred, truth):
    tp = float(np.sum(pred & truth))
    fp = float(np.sum(pred & ~truth))
    fn = float(np.sum(~pred & truth))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def recover_f1_loss(pseudo, truth, unknown_mask):
    """1 - micro-F1 of binary pseudo-labels against the truth over unknown entries."""
    pseudo = np.asarray(pseudo, dtype=np.float64)
    unknown_mask = np.asarray(unknown_mask, dtype=bool)
    p = pseudo[unknown_mask]
    if np.any((p != 0) & (p != 1)):
        raise InputError("pseudo-labels on unknown entries must be 0 or 1")
    t = np.asarray(truth)[unknown_mask] != 0
    return 1.0 - _f1(p == 1, t)


def all_ones_f1_loss(positive_rate):
    """F1-loss of predicting every unknown entry relevant: 1 - 2p/(p+1)."""
    return 1.0 - 2.0 * positive_rate / (positive_rate + 1.0)


def random_f1_loss(truth, unknown_mask, q=0.5, n_samples=0, seed=0):
    """F1-loss of Bernoulli(q) labels on the unknown entries.

    Returns the plug-in expectation ``1 - 2pq/(p+q)`` (F1 of expected counts)
    and, if ``n_samples > 0``, the mean over that many sampled assignments.
    """
    t = np.asarray(truth)[np.asarray(unknown_mask, dtype=bool)] != 0
    p = float(t.mean()) if t.size else 0.0
    analytic = 1.0 - (2.0 * p * q / (p + q) if p + q > 0 else 0.0)
    if n_samples <= 0:
        return analytic, None
    rng = np.random.default_rng(seed)
    sampled = [1.0 - _f1(rng.random(t.size) < q, t) for _ in range(n_samples)]
    return analytic, float(np.mean(sampled))


@dataclass
class ProgressionCurve:
    labels_queried: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, labels_queried, value):
        if self.labels_queried and labels_queried <= self.labels_queried[-1]:
            raise InputError("labels_queried must be strictly increasing")
        if not 0.0 <= value <= 1.0:
            raise InputError(f"curve values must lie in [0, 1], got {value}")
        self.labels_queried.append(int(labels_queried))
        self.values.append(float(value))

    @classmethod
    def from_points(cls, points):
        curve = cls()
        for x, y in points:
            curve.append(x, y)
        return curve

    @property
    def points(self):
        return list(zip(self.labels_queried, self.values))

    def __len__(self):
        return len(self.values)


def curve_auc(curve):
    """Trapezoidal area under the curve divided by the span of the x axis."""
    if len(curve) < 2:
        raise InputError("AUC needs at least two points")
    x = np.asarray(curve.labels_queried, dtype=np.float64)
    y = np.asarray(curve.values, dtype=np.float64)
    area = np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0)
    return float(area / (x[-1] - x[0]))
