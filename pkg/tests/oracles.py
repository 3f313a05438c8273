"""Independent reference implementations used only by the tests.

Everything here runs in ``np.longdouble`` and re-derives the network from
the flat parameter layout, so it shares no code path with the package
kernels.
"""
import numpy as np

LD = np.longdouble
EPS = LD("1e-7")


def layers_ld(flat, sizes):
    flat = np.asarray(flat, dtype=LD)
    out, off = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = flat[off:off + fan_in * fan_out].reshape(fan_out, fan_in)
        off += fan_in * fan_out
        out.append((w, flat[off:off + fan_out]))
        off += fan_out
    assert off == flat.size
    return out


def _act(u, activation):
    return np.maximum(u, LD(0)) if activation == "relu" else np.tanh(u)


def logits_ld(flat, arch, X):
    h = np.asarray(X, dtype=LD)
    layers = layers_ld(flat, arch.sizes)
    for w, b in layers[:-1]:
        h = _act(h @ w.T + b, arch.activation)
    w, b = layers[-1]
    return h @ w.T + b


def loss_ld(flat, arch, X, T, W=None):
    z = logits_ld(flat, arch, X)
    p = np.clip(LD(1) / (LD(1) + np.exp(-z)), EPS, LD(1) - EPS)
    T = np.asarray(T, dtype=LD)
    W = np.ones_like(T) if W is None else np.asarray(W, dtype=LD)
    return np.sum(W * (-T * np.log(p) - (LD(1) - T) * np.log(LD(1) - p)))


def grad_ld(flat, arch, X, T, W=None):
    """Reverse-mode gradient of the summed weighted BCE, in long double."""
    X = np.asarray(X, dtype=LD)
    T = np.asarray(T, dtype=LD)
    W = np.ones_like(T) if W is None else np.asarray(W, dtype=LD)
    layers = layers_ld(flat, arch.sizes)
    acts, pres = [X], []
    h = X
    for w, b in layers[:-1]:
        u = h @ w.T + b
        pres.append(u)
        h = _act(u, arch.activation)
        acts.append(h)
    w, b = layers[-1]
    z = h @ w.T + b
    delta = W * (LD(1) / (LD(1) + np.exp(-z)) - T)
    grads = []
    for l in range(len(layers) - 1, -1, -1):
        w, _ = layers[l]
        grads.append((delta.T @ acts[l], delta.sum(axis=0)))
        if l:
            back = delta @ w
            if arch.activation == "relu":
                delta = back * (pres[l - 1] > 0)
            else:
                delta = back * (LD(1) - acts[l] ** 2)
    grads.reverse()
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def central_difference(fn, x, h):
    """Central differences of a scalar function of a long-double vector."""
    x = np.asarray(x, dtype=LD)
    out = np.empty(x.size, dtype=LD)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (fn(up) - fn(dn)) / (2 * h)
    return out


def lookahead_val_loss(flat, arch, X, P, Xv, Yv, alpha, scale):
    """L_val after one gradient step on the batch with targets P (all long double)."""
    step = flat - LD(alpha) * LD(scale) * grad_ld(flat, arch, X, P)
    return loss_ld(step, arch, Xv, Yv)
