"""Pure numpy implementation of the dense-network kernels.

Used when the compiled ``_kernels`` extension is unavailable, or when
``COARSE2FINE_PURE_PYTHON=1`` is set.  Every function takes the flat
parameter vector (layer-major, weights row-major then bias), the layer
sizes ``(d, h1, ..., K)`` and an activation code (0 = relu, 1 = tanh).
"""
import numpy as np

RELU = 0
TANH = 1


def unpack(flat, sizes):
    layers = []
    off = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[off:off + fan_out * fan_in].reshape(fan_out, fan_in)
        off += fan_out * fan_in
        b = flat[off:off + fan_out]
        off += fan_out
        layers.append((w, b))
    return layers


def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _act(u, act):
    if act == RELU:
        return np.maximum(u, 0.0)
    return np.tanh(u)


def _dact(u, a, act):
    if act == RELU:
        return (u > 0).astype(np.float64)
    return 1.0 - a * a


def forward_logits(flat, sizes, act, X):
    h = X
    layers = unpack(flat, sizes)
    for w, b in layers[:-1]:
        h = _act(h @ w.T + b, act)
    w, b = layers[-1]
    return h @ w.T + b


def loss_and_grad(flat, sizes, act, X, T, W, eps):
    """Weighted BCE summed over all entries, and its gradient."""
    layers = unpack(flat, sizes)
    inputs, pres = [], []
    h = X
    for w, b in layers[:-1]:
        u = h @ w.T + b
        inputs.append(h)
        pres.append(u)
        h = _act(u, act)
    inputs.append(h)
    w, b = layers[-1]
    z = h @ w.T + b

    p = sigmoid(z)
    pc = np.clip(p, eps, 1.0 - eps)
    loss = float(np.sum(W * (-T * np.log(pc) - (1.0 - T) * np.log(1.0 - pc))))

    grad = np.empty_like(flat)
    delta = W * (p - T)
    off = flat.size
    for l in range(len(layers) - 1, -1, -1):
        w, b = layers[l]
        fan_out, fan_in = w.shape
        off -= fan_out
        grad[off:off + fan_out] = delta.sum(axis=0)
        off -= fan_out * fan_in
        grad[off:off + fan_out * fan_in] = (delta.T @ inputs[l]).ravel()
        if l > 0:
            u = pres[l - 1]
            delta = (delta @ w) * _dact(u, inputs[l], act)
    return loss, grad


def logit_tangent(flat, sizes, act, X, V):
    """Forward-mode pass: directional derivative of every logit along ``V``."""
    layers = unpack(flat, sizes)
    tangents = unpack(V, sizes)
    h = X
    dh = np.zeros_like(X)
    n = len(layers)
    for l in range(n):
        w, b = layers[l]
        dw, db = tangents[l]
        u = h @ w.T + b
        du = dh @ w.T + h @ dw.T + db
        if l == n - 1:
            return du
        h = _act(u, act)
        dh = _dact(u, h, act) * du
