"""Query strategies and the budgeted active-learning loop.

Queries are single (instance, fine label) entries.  Three strategies:
``random``, ``uncertainty`` (prediction entropy) and ``pseudo`` (cross
entropy between current predictions and the predictions after a one-step
look-ahead update driven by pseudo-labels).
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError
from .learners import (
    PseudoLabelMatrix,
    TrainConfig,
    assign_pseudo_labels,
    train_leml,
    train_pseudo,
)
from .metrics import ProgressionCurve, mean_precision_at_k
from .model import clamp_probabilities, loss_and_grad, predict_logits, predict_proba, sgd_step

STRATEGIES = ("random", "uncertainty", "pseudo")


@dataclass(eq=False)
class QueryScores:
    entries: np.ndarray  # [n, 2] (row, label)
    scores: np.ndarray
    yhat: np.ndarray = None
    yhat_lookahead: np.ndarray = None

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class ActiveConfig:
    strategy: str = "pseudo"
    budget: int = 500
    batch_size: int = 50
    reinit_period: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    ks: tuple = (1, 3, 5)
    mode: str = "incremental"  # or "retrain": full Algorithm-2 retraining every round
    base_learner: str = "pseudo"  # or "leml" for plain retraining
    lookahead_alpha: float = None  # None: train.alpha

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.batch_size < 1:
            raise ConfigError("queries per batch must be >= 1")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if self.budget and self.budget < self.batch_size:
            raise ConfigError("budget must be >= queries per batch")
        if self.reinit_period < 1:
            raise ConfigError("reinit period must be >= 1")
        if self.mode not in ("incremental", "retrain"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.base_learner not in ("pseudo", "leml"):
            raise ConfigError(f"unknown base learner {self.base_learner!r}")
        if self.lookahead_alpha is not None and not self.lookahead_alpha > 0:
            raise ConfigError("lookahead_alpha must be positive")


class Oracle:
    """Sealed ground truth for the coarse-labelled rows; counts every answer it gives."""

    def __init__(self, truth):
        truth = np.array(truth, dtype=np.int8)
        truth.flags.writeable = False
        self.__truth = truth
        self.calls = 0

    @classmethod
    def from_dataset(cls, data):
        if not data.has_fine:
            raise InputError("an oracle needs ground-truth fine labels")
        return cls(data.fine)

    @property
    def shape(self):
        return self.__truth.shape

    def query(self, entries):
        entries = np.asarray(entries, dtype=np.intp).reshape(-1, 2)
        self.calls += entries.shape[0]
        return self.__truth[entries[:, 0], entries[:, 1]].astype(np.float64)


def cross_entropy(p, q):
    """-(p log q + (1-p) log(1-q)) on clamped probabilities."""
    p = clamp_probabilities(np.asarray(p, dtype=np.float64))
    q = clamp_probabilities(np.asarray(q, dtype=np.float64))
    return -(p * np.log(q) + (1.0 - p) * np.log(1.0 - q))


def binary_entropy(p):
    return cross_entropy(p, p)


def _entries(entries):
    entries = np.asarray(entries, dtype=np.intp).reshape(-1, 2)
    if entries.shape[0] == 0:
        raise InputError("no candidate entries to score")
    return entries


def score_random(entries, seed):
    entries = _entries(entries)
    return QueryScores(entries, np.random.default_rng(seed).random(entries.shape[0]))


def score_uncertainty(theta, data, entries):
    entries = _entries(entries)
    yhat = predict_proba(theta, data.features)[entries[:, 0], entries[:, 1]]
    return QueryScores(entries, binary_entropy(yhat), yhat=yhat)


def lookahead_params(theta, data, partial, pseudo, valset, cfg, alpha=None):
    """Assign pseudo-labels to every unknown entry, then take one step on all rows with them."""
    work = pseudo.copy() if pseudo is not None else PseudoLabelMatrix(partial)
    work.sync()
    rows = np.arange(len(data))
    assign_pseudo_labels(theta, data, rows, work, valset, cfg)
    _, g = loss_and_grad(theta, data.features, work.values)
    step = cfg.alpha if alpha is None else alpha
    return sgd_step(theta, cfg.scale(len(data)) * g, step), work


def score_pseudo_change(theta, data, partial, pseudo, valset, cfg, entries, alpha=None):
    """Cross entropy between current and look-ahead predictions of each entry."""
    if valset is None or len(valset) == 0:
        raise InputError("pseudo-change scoring needs a nonempty validation (warm-up) set")
    entries = _entries(entries)
    theta_hat, _ = lookahead_params(theta, data, partial, pseudo, valset, cfg, alpha)
    i, j = entries[:, 0], entries[:, 1]
    yhat = predict_proba(theta, data.features)[i, j]
    yhat_la = predict_proba(theta_hat, data.features)[i, j]
    return QueryScores(entries, cross_entropy(yhat, yhat_la), yhat=yhat, yhat_lookahead=yhat_la)


def select_queries(scores, count):
    """Top ``count`` entries by score; ties broken by (row, label) ascending."""
    n = len(scores)
    if count > n:
        raise InputError(f"cannot select {count} entries out of {n}")
    if count <= 0:
        return np.zeros((0, 2), dtype=np.intp)
    e = scores.entries
    if np.unique(e, axis=0).shape[0] != n:
        raise InputError("duplicate entries in scores")
    if not np.all(np.isfinite(scores.scores)):
        raise InputError("scores must be finite")
    order = np.lexsort((e[:, 1], e[:, 0], -scores.scores))
    return e[order[:count]]


@dataclass(eq=False)
class ActiveResult:
    curves: dict  # k -> ProgressionCurve
    params: object
    partial: object
    pseudo: object
    queried: np.ndarray
    oracle_calls: int


def _evaluate(theta, test, ks):
    scores = predict_logits(theta, test.features)
    return {k: mean_precision_at_k(scores, test.fine, k) for k in ks}


def _fit(acfg, data, partial, warmup, arch, cfg, theta0=None, pseudo=None):
    if acfg.base_learner == "leml":
        return train_leml(data, partial, warmup, arch, cfg, theta0), pseudo
    return train_pseudo(data, partial, warmup, arch, cfg, theta0, pseudo)


def _score(acfg, theta, data, partial, pseudo, warmup, entries, round_no):
    cfg = acfg.train
    if acfg.strategy == "random":
        return score_random(entries, [cfg.seed, 4, round_no])
    if acfg.strategy == "uncertainty":
        return score_uncertainty(theta, data, entries)
    return score_pseudo_change(theta, data, partial, pseudo, warmup, cfg, entries, acfg.lookahead_alpha)


def run_active_loop(data, partial, warmup, oracle, arch, acfg, test):
    """Query ``acfg.budget`` entries in rounds of ``acfg.batch_size``.

    The base classifier is trained once up front.  After each round the
    answers join the observed set and the model either gets one more epoch
    (``incremental``) or is rebuilt from scratch (``retrain``, and in
    ``incremental`` mode every ``reinit_period`` rounds).  P@k on ``test``
    is recorded before the first round and after every round.  ``partial``
    is not modified; the grown copy is returned.
    """
    if test is None or not test.has_fine:
        raise InputError("the active loop needs a test set with fine labels")
    partial = partial.copy()
    n_unknown = int((~partial.mask).sum())
    if acfg.budget > n_unknown:
        raise ConfigError(f"budget {acfg.budget} exceeds the {n_unknown} unknown entries")

    cfg = acfg.train
    theta, pseudo = _fit(acfg, data, partial, warmup, arch, cfg)
    curves = {k: ProgressionCurve() for k in acfg.ks}
    for k, v in _evaluate(theta, test, acfg.ks).items():
        curves[k].append(0, v)

    queried = []
    spent = 0
    n_rounds = math.ceil(acfg.budget / acfg.batch_size)
    for r in range(1, n_rounds + 1):
        count = min(acfg.batch_size, acfg.budget - spent)
        entries = partial.unknown_entries()
        scores = _score(acfg, theta, data, partial, pseudo, warmup, entries, r)
        chosen = select_queries(scores, count)
        partial.observe(chosen, oracle.query(chosen))
        queried.append(chosen)
        spent += count

        if pseudo is not None:
            pseudo.sync()
        if acfg.mode == "retrain" or r % acfg.reinit_period == 0:
            theta, pseudo = _fit(acfg, data, partial, warmup, arch, replace(cfg, seed=cfg.seed + r))
        else:
            one_epoch = replace(cfg, seed=cfg.seed + r, epochs=1, steps=None)
            theta, pseudo = _fit(acfg, data, partial, warmup, arch, one_epoch, theta, pseudo)
        for k, v in _evaluate(theta, test, acfg.ks).items():
            curves[k].append(spent, v)

    queried = np.vstack(queried) if queried else np.zeros((0, 2), dtype=np.intp)
    return ActiveResult(curves, theta, partial, pseudo, queried, oracle.calls)
