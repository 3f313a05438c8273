"""Training procedures for the fine-grained classifier.

Four learners share one mini-batch schedule so they can be compared step
for step:

* ``train_fully_supervised`` - warm-up set only
* ``train_leml`` - observed entries of the coarse-labelled rows plus the warm-up set
* ``train_occ`` - one-class weighting, unobserved entries imputed as relevant
* ``train_pseudo`` - unobserved entries get binary pseudo-labels chosen by the
  sign of the validation-loss derivative through a one-step look-ahead

Warm-up rows are pooled with the coarse-labelled rows as fully observed
rows, so every observed entry carries the same weight in a batch.  Batch
order comes from one seeded stream over the pool; the validation subsample
(if any) has its own stream.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError, ShapeError
from .model import init_params, logit_tangent, loss_and_grad, make_optimizer, sgd_step

_TRAIN_STREAM = 1
_VAL_STREAM = 3


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.05
    batch_size: int = 32
    epochs: int = 20
    steps: int = None  # overrides epochs when set
    seed: int = 0
    loss_scaling: str = "mean"
    w_obs: float = 1.0
    w_unobs: float = 0.05
    val_batch_size: int = None  # None: whole warm-up set
    optimizer: str = "sgd"
    warmup_in_update: bool = True
    allow_weight_override: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0 or (self.steps is not None and self.steps < 0):
            raise ConfigError("epochs and steps must be >= 0")
        if self.loss_scaling not in ("sum", "mean"):
            raise ConfigError(f"loss_scaling must be 'sum' or 'mean', got {self.loss_scaling!r}")
        if self.w_obs < 0 or self.w_unobs < 0:
            raise ConfigError("one-class weights must be nonnegative")
        if not self.w_obs > self.w_unobs and not self.allow_weight_override:
            raise ConfigError("one-class weighting expects w_obs > w_unobs (set allow_weight_override)")
        if self.val_batch_size is not None and self.val_batch_size < 1:
            raise ConfigError("val_batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def n_steps(self, n_rows):
        if self.steps is not None:
            return self.steps
        return self.epochs * math.ceil(n_rows / self.batch_size)

    def scale(self, n_rows):
        return 1.0 if self.loss_scaling == "sum" else 1.0 / n_rows


def row_batches(n_rows, batch_size, rng):
    """Endless mini-batches of row indices, reshuffled every pass."""
    while True:
        perm = rng.permutation(n_rows)
        for start in range(0, n_rows, batch_size):
            yield perm[start:start + batch_size]


def _stream(cfg, which, n_rows, batch_size=None):
    rng = np.random.default_rng([cfg.seed, which])
    return row_batches(n_rows, batch_size or cfg.batch_size, rng)


def _check_partial(data, partial, n_labels):
    if partial.shape != (len(data), n_labels):
        raise ShapeError(f"partial matrix {partial.shape} does not match ({len(data)}, {n_labels})")


def _check_arch(arch, n_features):
    if arch.input_dim != n_features:
        raise ShapeError(f"architecture expects {arch.input_dim} features, data has {n_features}")


def _pool(data, warmup, n_labels):
    """Stack coarse-labelled rows and warm-up rows into one training pool."""
    if warmup is None or len(warmup) == 0:
        return data.features, np.zeros((0, n_labels))
    if warmup.fine.shape[1] != n_labels:
        raise ShapeError(f"warm-up labels have {warmup.fine.shape[1]} columns, expected {n_labels}")
    return np.vstack([data.features, warmup.features]), warmup.fine


def _descend(theta, X, targets, weights, cfg):
    """Run the configured schedule of weighted-BCE steps over the rows of ``X``."""
    rows = _stream(cfg, _TRAIN_STREAM, X.shape[0])
    opt = make_optimizer(cfg.optimizer, theta.n_params, cfg.alpha)
    for _ in range(cfg.n_steps(X.shape[0])):
        idx = next(rows)
        w = weights[idx]
        if np.any(w):
            _, g = loss_and_grad(theta, X[idx], targets[idx], w)
            theta = opt.step(theta, cfg.scale(len(idx)) * g)
        else:
            theta = opt.step(theta, np.zeros(theta.n_params))
    return theta


def train_fully_supervised(warmup, arch, cfg, theta0=None):
    """Mean (or summed) BCE over the warm-up examples by mini-batch gradient descent."""
    if warmup is None or len(warmup) == 0:
        raise InputError("fully-supervised training needs a nonempty warm-up set")
    _check_arch(arch, warmup.features.shape[1])
    theta = init_params(arch, cfg.seed) if theta0 is None else theta0
    return _descend(theta, warmup.features, warmup.fine, np.ones_like(warmup.fine), cfg)


def _train_weighted(data, targets, weights, warmup, warm_weight, arch, cfg, theta0):
    _check_arch(arch, data.n_features)
    theta = init_params(arch, cfg.seed) if theta0 is None else theta0
    X, Yw = _pool(data, warmup, arch.n_labels)
    T = np.vstack([targets, Yw])
    W = np.vstack([weights, np.full(Yw.shape, float(warm_weight))])
    return _descend(theta, X, T, W, cfg)


def train_leml(data, partial, warmup, arch, cfg, theta0=None):
    """Empirical risk over observed entries plus every warm-up entry, each entry weighted equally.

    Unobserved entries carry weight zero, so their stored values never reach
    the gradient.  Warm-up rows are sampled from the same pool as the
    coarse-labelled rows.
    """
    _check_partial(data, partial, arch.n_labels)
    weights = partial.mask.astype(np.float64)
    targets = np.where(partial.mask, partial.values, 0.0)
    return _train_weighted(data, targets, weights, warmup, 1.0, arch, cfg, theta0)


def train_occ(data, partial, warmup, arch, cfg, theta0=None):
    """One-class weighting: observed entries at ``w_obs``, unobserved imputed as 1 at ``w_unobs``."""
    _check_partial(data, partial, arch.n_labels)
    if cfg.w_obs < 0 or cfg.w_unobs < 0:
        raise ConfigError("one-class weights must be nonnegative")
    targets = np.where(partial.mask, partial.values, 1.0)
    weights = np.where(partial.mask, cfg.w_obs, cfg.w_unobs)
    return _train_weighted(data, targets, weights, warmup, cfg.w_obs, arch, cfg, theta0)


class PseudoLabelMatrix:
    """Training targets for the pseudo learner.

    Observed entries mirror the partial matrix it was built from; unobserved
    entries hold the latest binary assignment (``init_value`` until a row is
    first visited).
    """

    def __init__(self, partial, init_value=0.5):
        self.partial = partial
        self.values = np.where(partial.mask, partial.values, init_value)

    @property
    def mask(self):
        return self.partial.mask

    @property
    def shape(self):
        return self.values.shape

    def sync(self):
        """Pull in entries observed since the last call (e.g. answered queries)."""
        m = self.partial.mask
        self.values[m] = self.partial.values[m]

    def copy(self):
        out = PseudoLabelMatrix.__new__(PseudoLabelMatrix)
        out.partial = self.partial
        out.values = self.values.copy()
        return out

    def is_binary(self):
        v = self.values
        return bool(np.all((v == 0) | (v == 1)))


@dataclass(eq=False)
class PseudoAssignment:
    rows: np.ndarray
    derivative: np.ndarray  # dL_val / dp for every (row, label) of the batch
    labels: np.ndarray  # 1 where derivative <= 0
    theta_lookahead: object


def pseudo_label_derivative(theta, X, targets, valset, cfg, val_idx=None):
    """d L_val(theta_{t+1}) / d p_ij for every entry of the batch.

    theta_{t+1} = theta - alpha * s * grad(sum BCE(batch, targets)), so
    d theta_{t+1} / d p_ij = alpha * s * d z_j(x_i; theta) / d theta and the
    derivative is that vector dotted with the validation gradient at
    theta_{t+1}; one tangent pass along the validation gradient gives a
    whole row of labels at once.
    """
    s = cfg.scale(X.shape[0])
    _, g = loss_and_grad(theta, X, targets)
    theta_next = sgd_step(theta, s * g, cfg.alpha)
    Xv, Yv = valset.features, valset.fine
    if val_idx is not None:
        Xv, Yv = Xv[val_idx], Yv[val_idx]
    _, g_val = loss_and_grad(theta_next, Xv, Yv)
    return cfg.alpha * s * logit_tangent(theta, X, g_val), theta_next


def assign_pseudo_labels(theta, data, rows, pseudo, valset, cfg, val_idx=None):
    """Refresh the unobserved pseudo-labels of ``rows`` in place (``<= 0`` maps to 1)."""
    if valset is None or len(valset) == 0:
        raise InputError("pseudo-label assignment needs a nonempty validation (warm-up) set")
    rows = np.asarray(rows)
    X = data.features[rows]
    current = pseudo.values[rows]
    deriv, theta_next = pseudo_label_derivative(theta, X, current, valset, cfg, val_idx)
    labels = (deriv <= 0).astype(np.float64)
    unknown = ~pseudo.mask[rows]
    pseudo.values[rows] = np.where(unknown, labels, current)
    return PseudoAssignment(rows, deriv, labels, theta_next)


def train_pseudo(data, partial, warmup, arch, cfg, theta0=None, pseudo=None):
    """Alternate pseudo-label refresh and real update on each mini-batch.

    Per step: sample rows, assign their unobserved entries by the sign rule,
    then update the parameters on those rows with the refreshed labels.
    With ``cfg.warmup_in_update`` the warm-up rows join the sampling pool as
    fully observed rows (they are still the validation set).
    ``theta0``/``pseudo`` allow warm-starting from an earlier run.
    """
    if warmup is None or len(warmup) == 0:
        raise InputError("the pseudo-label learner needs a nonempty warm-up set")
    _check_partial(data, partial, arch.n_labels)
    _check_arch(arch, data.n_features)
    theta = init_params(arch, cfg.seed) if theta0 is None else theta0
    if pseudo is None:
        pseudo = PseudoLabelMatrix(partial)
    else:
        pseudo.sync()

    n = len(data)
    if cfg.warmup_in_update:
        X, Yw = _pool(data, warmup, arch.n_labels)
    else:
        X, Yw = data.features, np.zeros((0, arch.n_labels))
    rows = _stream(cfg, _TRAIN_STREAM, X.shape[0])
    val = None
    if cfg.val_batch_size is not None and cfg.val_batch_size < len(warmup):
        val = _stream(cfg, _VAL_STREAM, len(warmup), cfg.val_batch_size)
    opt = make_optimizer(cfg.optimizer, theta.n_params, cfg.alpha)

    for _ in range(cfg.n_steps(X.shape[0])):
        idx = next(rows)
        own = idx[idx < n]
        if own.size:
            assign_pseudo_labels(theta, data, own, pseudo, warmup, cfg, None if val is None else next(val))
        targets = np.empty((idx.size, arch.n_labels))
        is_own = idx < n
        targets[is_own] = pseudo.values[idx[is_own]]
        targets[~is_own] = Yw[idx[~is_own] - n]
        _, g = loss_and_grad(theta, X[idx], targets)
        theta = opt.step(theta, cfg.scale(len(idx)) * g)
    return theta, pseudo


LEARNERS = ("fs", "leml", "occ", "pseudo")


def train(name, data, partial, warmup, arch, cfg):
    """Dispatch by learner name; always returns ``(theta, pseudo_or_None)``."""
    if name == "fs":
        return train_fully_supervised(warmup, arch, cfg), None
    if name == "leml":
        return train_leml(data, partial, warmup, arch, cfg), None
    if name == "occ":
        return train_occ(data, partial, warmup, arch, cfg), None
    if name == "pseudo":
        return train_pseudo(data, partial, warmup, arch, cfg)
    raise ConfigError(f"unknown learner {name!r}; choose from {LEARNERS}")


def with_schedule(cfg, **changes):
    return replace(cfg, **changes)
