"""Sigmoid-output feedforward scorer and its differentiation machinery.

Parameters live in one flat float64 vector in canonical order: layer by
layer, each layer's weight matrix (row-major, shape ``out x in``) followed
by its bias.  Gradients and tangents use the same order, so a gradient is
just an ndarray of length ``n_params``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._kernels_py import unpack
from .errors import ConfigError, InputError, ShapeError

PROB_EPS = 1e-7

_ACTIVATIONS = {"relu": 0, "tanh": 1}


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple = ()
    n_labels: int = 1
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim <= 0 or self.n_labels <= 0 or any(h <= 0 for h in self.hidden):
            raise ConfigError(f"all layer dimensions must be positive, got {self.sizes}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def sizes(self):
        return (self.input_dim, *self.hidden, self.n_labels)

    @property
    def act_code(self):
        return _ACTIVATIONS[self.activation]

    @property
    def n_params(self):
        s = self.sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


@dataclass(frozen=True, eq=False)
class ModelParameters:
    """Immutable parameter value; ``flat`` is a read-only float64 vector."""

    arch: Architecture
    flat: np.ndarray = field(repr=False)

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64, copy=True).ravel()
        if flat.size != self.arch.n_params:
            raise ShapeError(f"expected {self.arch.n_params} parameters, got {flat.size}")
        if not np.all(np.isfinite(flat)):
            raise InputError("parameters contain non-finite values")
        flat.flags.writeable = False
        object.__setattr__(self, "flat", flat)

    @property
    def n_params(self):
        return self.flat.size

    @property
    def layers(self):
        return unpack(self.flat, self.arch.sizes)

    def __eq__(self, other):
        return (
            isinstance(other, ModelParameters)
            and self.arch == other.arch
            and np.array_equal(self.flat, other.flat)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def clamp_probabilities(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def init_params(arch, seed):
    """Fan-in scaled uniform weights (He limit ``sqrt(6 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    s = arch.sizes
    for fan_in, fan_out in zip(s[:-1], s[1:]):
        limit = np.sqrt(6.0 / fan_in)
        chunks.append(rng.uniform(-limit, limit, size=fan_out * fan_in))
        chunks.append(np.zeros(fan_out))
    return ModelParameters(arch, np.concatenate(chunks))


def _as_batch(params, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.arch.input_dim:
        raise ShapeError(f"expected inputs with {params.arch.input_dim} features, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("inputs contain non-finite values")
    return np.ascontiguousarray(X), single


def predict_logits(params, X):
    X, single = _as_batch(params, X)
    z = _backend.kernels.forward_logits(params.flat, params.arch.sizes, params.arch.act_code, X)
    return z[0] if single else z


def predict_proba(params, X):
    return clamp_probabilities(sigmoid(predict_logits(params, X)))


def forward(params, x):
    z = predict_logits(params, x)
    return Prediction(z, clamp_probabilities(sigmoid(z)))


def _check_targets(target):
    target = np.asarray(target, dtype=np.float64)
    if np.any(~np.isfinite(target)) or np.any(target < 0) or np.any(target > 1):
        raise InputError("targets must lie in [0, 1]")
    return target


def bce_loss(pred, target, weights=None):
    """Weighted binary cross entropy summed over labels, on clamped probabilities."""
    p = clamp_probabilities(pred.probabilities)
    y = _check_targets(target)
    if y.shape != p.shape:
        raise ShapeError(f"target shape {y.shape} != prediction shape {p.shape}")
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise InputError("weights must be nonnegative")
    return float(np.sum(w * (-y * np.log(p) - (1.0 - y) * np.log(1.0 - p))))


def _batch_arrays(params, X, targets, weights):
    X, _ = _as_batch(params, X)
    if X.shape[0] == 0:
        raise InputError("empty batch")
    T = _check_targets(targets)
    T = np.ascontiguousarray(T.reshape(X.shape[0], -1))
    if T.shape[1] != params.arch.n_labels:
        raise ShapeError(f"targets have {T.shape[1]} labels, model has {params.arch.n_labels}")
    if weights is None:
        W = np.ones_like(T)
    else:
        W = np.ascontiguousarray(np.broadcast_to(np.asarray(weights, dtype=np.float64), T.shape))
        if np.any(W < 0):
            raise InputError("weights must be nonnegative")
    return X, T, W


def loss_and_grad(params, X, targets, weights=None):
    """Summed weighted BCE over the batch and its reverse-mode gradient.

    The output-layer residual is exactly ``(sigmoid(z) - y) * w``; clamping
    only enters the loss value.
    """
    X, T, W = _batch_arrays(params, X, targets, weights)
    return _backend.kernels.loss_and_grad(
        params.flat, params.arch.sizes, params.arch.act_code, X, T, W, PROB_EPS
    )


def grad_loss(params, X, targets, weights=None):
    return loss_and_grad(params, X, targets, weights)[1]


def batch_loss(params, X, targets, weights=None):
    return loss_and_grad(params, X, targets, weights)[0]


def sgd_step(params, grad, alpha):
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (params.n_params,):
        raise ShapeError(f"gradient length {grad.size} != parameter count {params.n_params}")
    return ModelParameters(params.arch, params.flat - alpha * grad)


def logit_tangent(params, X, tangent):
    """Directional derivative of every logit along ``tangent`` (forward mode).

    ``X`` may be one example (returns ``[K]``) or a batch (returns ``[B, K]``).
    """
    X, single = _as_batch(params, X)
    v = np.ascontiguousarray(tangent, dtype=np.float64)
    if v.shape != (params.n_params,):
        raise ShapeError(f"tangent length {v.size} != parameter count {params.n_params}")
    out = _backend.kernels.logit_tangent(params.flat, params.arch.sizes, params.arch.act_code, X, v)
    return out[0] if single else out


def logit_grad(params, x, j):
    """Reverse-mode gradient of the single logit ``z_j(x)`` w.r.t. all parameters.

    Pure numpy and one output at a time; kept as an independent check on
    :func:`logit_tangent`, not for use in training loops.
    """
    from ._kernels_py import _act, _dact

    x = np.asarray(x, dtype=np.float64)
    act = params.arch.act_code
    layers = unpack(params.flat, params.arch.sizes)
    inputs, pres = [], []
    h = x
    for w, b in layers[:-1]:
        u = w @ h + b
        inputs.append(h)
        pres.append(u)
        h = _act(u, act)
    inputs.append(h)

    grad = np.zeros(params.n_params)
    delta = np.zeros(params.arch.n_labels)
    delta[j] = 1.0
    off = params.n_params
    for l in range(len(layers) - 1, -1, -1):
        w, _ = layers[l]
        fan_out, fan_in = w.shape
        off -= fan_out
        grad[off:off + fan_out] = delta
        off -= fan_out * fan_in
        grad[off:off + fan_out * fan_in] = np.outer(delta, inputs[l]).ravel()
        if l > 0:
            delta = (w.T @ delta) * _dact(pres[l - 1], inputs[l], act)
    return grad


class Adam:
    """Optional adaptive optimizer for the committed updates.

    Look-ahead (pseudo) updates always use plain :func:`sgd_step`.
    """

    def __init__(self, n_params, alpha, beta1=0.9, beta2=0.999, eps=1e-8):
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return ModelParameters(params.arch, params.flat - self.alpha * m_hat / (np.sqrt(v_hat) + self.eps))


class SGD:
    def __init__(self, alpha):
        self.alpha = alpha

    def step(self, params, grad):
        return sgd_step(params, grad, self.alpha)


def make_optimizer(name, n_params, alpha):
    if name == "sgd":
        return SGD(alpha)
    if name == "adam":
        return Adam(n_params, alpha)
    raise ConfigError(f"unknown optimizer {name!r}")
