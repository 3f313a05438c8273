"""Label hierarchy, datasets and the partially observed fine label matrix."""
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import ConfigError, HierarchyViolationError, InputError, ShapeError


@dataclass(frozen=True)
class LabelHierarchy:
    """Two-level tree: each coarse label owns an ordered list of fine labels.

    Fine labels are indexed globally by concatenating the children lists in
    coarse order.
    """

    coarse: tuple
    children: tuple

    def __post_init__(self):
        coarse = tuple(str(c) for c in self.coarse)
        children = tuple(tuple(str(f) for f in ch) for ch in self.children)
        object.__setattr__(self, "coarse", coarse)
        object.__setattr__(self, "children", children)
        if not coarse:
            raise ConfigError("hierarchy needs at least one coarse label")
        if len(children) != len(coarse):
            raise ConfigError("one children list per coarse label required")
        if len(set(coarse)) != len(coarse):
            raise ConfigError("coarse label names must be unique")
        for name, ch in zip(coarse, children):
            if not ch:
                raise ConfigError(f"coarse label {name!r} has no fine children")
        fine = [f for ch in children for f in ch]
        if len(set(fine)) != len(fine):
            raise ConfigError("fine label names must be globally unique")

    @classmethod
    def from_mapping(cls, mapping):
        return cls(tuple(mapping), tuple(tuple(v) for v in mapping.values()))

    @classmethod
    def balanced(cls, n_coarse, children_per_coarse):
        coarse = [f"c{c}" for c in range(n_coarse)]
        children = [[f"c{c}_f{f}" for f in range(children_per_coarse)] for c in range(n_coarse)]
        return cls(coarse, children)

    def to_mapping(self):
        return {c: list(ch) for c, ch in zip(self.coarse, self.children)}

    @property
    def n_coarse(self):
        return len(self.coarse)

    @property
    def n_fine(self):
        return sum(len(ch) for ch in self.children)

    @property
    def fine(self):
        return tuple(f for ch in self.children for f in ch)

    @property
    def parent(self):
        """Array mapping each fine index to its coarse index."""
        return np.repeat(np.arange(self.n_coarse), [len(ch) for ch in self.children])

    def coarse_from_fine(self, fine):
        fine = np.asarray(fine)
        out = np.zeros((fine.shape[0], self.n_coarse), dtype=np.int8)
        np.maximum.at(out.T, self.parent, fine.T.astype(np.int8))
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features with coarse labels; ``fine`` is ground truth for the oracle and evaluation only."""

    features: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        C = np.asarray(self.coarse, dtype=np.int8)
        if X.ndim != 2 or C.ndim != 2 or X.shape[0] != C.shape[0]:
            raise ShapeError(f"features {X.shape} and coarse labels {C.shape} disagree")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "coarse", C)
        if self.fine is not None:
            F = np.asarray(self.fine, dtype=np.int8)
            if F.ndim != 2 or F.shape[0] != X.shape[0]:
                raise ShapeError(f"fine labels {F.shape} do not match {X.shape[0]} rows")
            object.__setattr__(self, "fine", F)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def has_fine(self):
        return self.fine is not None

    def rows(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.coarse[idx], None if self.fine is None else self.fine[idx])

    def without_fine(self):
        return Dataset(self.features, self.coarse)

    def check_consistency(self, hierarchy):
        """Raise on the first row whose coarse labels are not the OR of its fine labels."""
        if self.coarse.shape[1] != hierarchy.n_coarse:
            raise ShapeError(f"{self.coarse.shape[1]} coarse columns, hierarchy has {hierarchy.n_coarse}")
        if self.fine is None:
            return
        if self.fine.shape[1] != hierarchy.n_fine:
            raise ShapeError(f"{self.fine.shape[1]} fine columns, hierarchy has {hierarchy.n_fine}")
        derived = hierarchy.coarse_from_fine(self.fine)
        bad = np.argwhere(derived != self.coarse)
        if bad.size:
            row, col = bad[0]
            raise HierarchyViolationError(int(row), int(col))


@dataclass(frozen=True, eq=False)
class WarmupSet:
    features: np.ndarray
    fine: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        Y = np.asarray(self.fine, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ShapeError(f"warm-up features {X.shape} and labels {Y.shape} disagree")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "fine", Y)

    def __len__(self):
        return self.features.shape[0]


@dataclass(eq=False)
class PartialLabelMatrix:
    """Fine label values with an observation mask; the mask only ever grows."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64)
        self.mask = np.array(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise ShapeError(f"values {self.values.shape} and mask {self.mask.shape} disagree")
        if np.any((self.values[self.mask] != 0) & (self.values[self.mask] != 1)):
            raise InputError("observed entries must be 0 or 1")

    @classmethod
    def empty(cls, n_rows, n_labels):
        return cls(np.zeros((n_rows, n_labels)), np.zeros((n_rows, n_labels), dtype=bool))

    @classmethod
    def full(cls, fine):
        fine = np.asarray(fine, dtype=np.float64)
        return cls(fine, np.ones(fine.shape, dtype=bool))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_observed(self):
        return int(self.mask.sum())

    def copy(self):
        return PartialLabelMatrix(self.values.copy(), self.mask.copy())

    def unknown_entries(self):
        """Unobserved (row, label) pairs in lexicographic order."""
        return np.argwhere(~self.mask)

    def observe(self, entries, values):
        entries = np.asarray(entries, dtype=np.intp).reshape(-1, 2)
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.shape[0] != entries.shape[0]:
            raise ShapeError("one value per observed entry required")
        if np.any((values != 0) & (values != 1)):
            raise InputError("observed values must be 0 or 1")
        i, j = entries[:, 0], entries[:, 1]
        if np.any(self.mask[i, j]):
            raise InputError("entry already observed")
        self.values[i, j] = values
        self.mask[i, j] = True


def deduce_fine_observations(coarse, hierarchy):
    """Mark every child of an irrelevant coarse label as observed-irrelevant."""
    coarse = np.asarray(coarse)
    if coarse.ndim != 2 or coarse.shape[1] != hierarchy.n_coarse:
        raise ShapeError(f"coarse matrix {coarse.shape} does not have {hierarchy.n_coarse} columns")
    parent_on = coarse[:, hierarchy.parent] != 0
    return PartialLabelMatrix(np.zeros(parent_on.shape), ~parent_on)


def warmup_size(total, log2_ratio):
    return max(1, int(round(2.0 ** log2_ratio * total)))


def split_warmup(full, log2_ratio, seed):
    """Split off ``max(1, round(2**log2_ratio * total))`` rows as the fine-labelled warm-up set.

    The remaining rows keep their ground-truth fine labels so the oracle and
    evaluators can reach them; learners only ever see the partial matrix.
    """
    if len(full) == 0:
        raise InputError("cannot split an empty dataset")
    if not full.has_fine:
        raise InputError("warm-up split needs ground-truth fine labels")
    if log2_ratio > 0:
        raise ConfigError("log2 ratio must be <= 0")
    total = len(full)
    m = warmup_size(total, log2_ratio)
    if m >= total:
        raise ConfigError(f"warm-up size {m} leaves no training rows out of {total}")
    perm = np.random.default_rng(seed).permutation(total)
    warm_idx = np.sort(perm[:m])
    train_idx = np.sort(perm[m:])
    warm = WarmupSet(full.features[warm_idx], full.fine[warm_idx])
    return full.rows(train_idx), warm


def generate_synthetic(n_coarse, children_per_coarse, n_features, n_rows,
                       label_density=0.25, noise=0.5, seed=0):
    """Draw a dataset from a linear ground-truth scorer with calibrated thresholds.

    Fine label ``f`` is relevant when ``w_f . x + noise * eta`` exceeds the
    ``1 - label_density`` quantile of its (Gaussian) score distribution, so
    every label has marginal positive rate ``label_density``.
    """
    for name, v in [("n_coarse", n_coarse), ("children_per_coarse", children_per_coarse),
                    ("n_features", n_features), ("n_rows", n_rows)]:
        if int(v) <= 0:
            raise ConfigError(f"{name} must be positive, got {v}")
    if not 0.0 < label_density < 1.0:
        raise ConfigError(f"label_density must lie in (0, 1), got {label_density}")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")

    hierarchy = LabelHierarchy.balanced(n_coarse, children_per_coarse)
    K = hierarchy.n_fine
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((K, n_features)) / np.sqrt(n_features)
    scale = np.sqrt(np.sum(W * W, axis=1) + noise ** 2)
    thresholds = scale * NormalDist().inv_cdf(1.0 - label_density)

    X = rng.standard_normal((n_rows, n_features))
    scores = X @ W.T + noise * rng.standard_normal((n_rows, K))
    fine = (scores > thresholds).astype(np.int8)
    return Dataset(X, hierarchy.coarse_from_fine(fine), fine), hierarchy
