# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-network kernels; same contract as ``_kernels_py``.

Whole batches go through each layer at once: matrix products use BLAS
``dgemm`` (row-major data passed as transposed column-major operands) and
the elementwise work (bias, activation, sigmoid, loss, residual) runs in
fused C loops without temporaries.
"""
import numpy as np
from libc.math cimport exp, log, tanh
from scipy.linalg.cython_blas cimport dgemm

RELU = 0
TANH = 1


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        e = exp(-z)
        return 1.0 / (1.0 + e)
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _act(double u, int act) noexcept nogil:
    if act == 0:
        return u if u > 0 else 0.0
    return tanh(u)


cdef inline double _dact(double u, double a, int act) noexcept nogil:
    if act == 0:
        return 1.0 if u > 0 else 0.0
    return 1.0 - a * a


cdef inline void _gemm(char ta, char tb, int m, int n, int k, const double* a, int lda,
                       const double* b, int ldb, double beta, double* c, int ldc) noexcept nogil:
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, <double*>a, &lda, <double*>b, &ldb, &beta, c, &ldc)


cdef class _Layout:
    cdef public Py_ssize_t n_layers, width_total
    cdef Py_ssize_t[::1] sizes, w_off, b_off, a_off

    def __init__(self, sizes, Py_ssize_t n_params):
        cdef Py_ssize_t l, off = 0, aoff = 0
        self.n_layers = len(sizes) - 1
        self.sizes = np.asarray(sizes, dtype=np.intp)
        self.w_off = np.empty(self.n_layers, dtype=np.intp)
        self.b_off = np.empty(self.n_layers, dtype=np.intp)
        self.a_off = np.empty(self.n_layers, dtype=np.intp)
        for l in range(self.n_layers):
            self.w_off[l] = off
            off += self.sizes[l] * self.sizes[l + 1]
            self.b_off[l] = off
            off += self.sizes[l + 1]
            self.a_off[l] = aoff
            aoff += self.sizes[l + 1]
        if off != n_params:
            raise ValueError("parameter vector length does not match layer sizes")
        self.width_total = aoff


cdef void _forward(const double* flat, _Layout lay, const double* X, Py_ssize_t B, int act,
                   double* pre, double* post) noexcept nogil:
    """Pre-activations and activations of every layer, stored layer-blocked ``[B x width]``."""
    cdef Py_ssize_t l, r, o, nin, nout, last = lay.n_layers - 1
    cdef const double* inp
    cdef double* z
    cdef double* a
    for l in range(lay.n_layers):
        nin = lay.sizes[l]
        nout = lay.sizes[l + 1]
        inp = X if l == 0 else post + B * lay.a_off[l - 1]
        z = pre + B * lay.a_off[l]
        a = post + B * lay.a_off[l]
        for r in range(B):
            for o in range(nout):
                z[r * nout + o] = flat[lay.b_off[l] + o]
        _gemm(b'T', b'N', <int>nout, <int>B, <int>nin, flat + lay.w_off[l], <int>nin, inp, <int>nin,
              1.0, z, <int>nout)
        if l < last:
            for r in range(B * nout):
                a[r] = _act(z[r], act)
        else:
            for r in range(B * nout):
                a[r] = z[r]


def forward_logits(const double[::1] flat, sizes, int act, const double[:, ::1] X):
    cdef _Layout lay = _Layout(sizes, flat.shape[0])
    cdef Py_ssize_t B = X.shape[0], K = lay.sizes[lay.n_layers]
    if B == 0:
        return np.empty((0, K), dtype=np.float64)
    pre_arr = np.empty(B * lay.width_total)
    post_arr = np.empty(B * lay.width_total)
    cdef double[::1] pre = pre_arr, post = post_arr
    with nogil:
        _forward(&flat[0], lay, &X[0, 0], B, act, &pre[0], &post[0])
    start = B * lay.a_off[lay.n_layers - 1]
    return post_arr[start:start + B * K].reshape(B, K).copy()


def loss_and_grad(const double[::1] flat, sizes, int act, const double[:, ::1] X,
                  const double[:, ::1] T, const double[:, ::1] W, double eps):
    cdef _Layout lay = _Layout(sizes, flat.shape[0])
    cdef Py_ssize_t B = X.shape[0], K = lay.sizes[lay.n_layers]
    cdef Py_ssize_t l, r, o, i, nin, nout, last = lay.n_layers - 1
    grad_arr = np.zeros(flat.shape[0], dtype=np.float64)
    if B == 0:
        return 0.0, grad_arr
    cdef double[::1] grad = grad_arr
    cdef double[::1] pre = np.empty(B * lay.width_total)
    cdef double[::1] post = np.empty(B * lay.width_total)
    cdef double[::1] delta = np.empty(B * lay.width_total)
    cdef double loss = 0.0, p, pc, t, w, s
    cdef const double* inp
    cdef double* d
    cdef double* dprev
    cdef double* gb
    with nogil:
        _forward(&flat[0], lay, &X[0, 0], B, act, &pre[0], &post[0])
        d = &delta[B * lay.a_off[last]]
        for r in range(B):
            for o in range(K):
                p = _sigmoid(post[B * lay.a_off[last] + r * K + o])
                t = T[r, o]
                w = W[r, o]
                pc = p
                if pc < eps:
                    pc = eps
                elif pc > 1.0 - eps:
                    pc = 1.0 - eps
                loss += w * (-t * log(pc) - (1.0 - t) * log(1.0 - pc))
                d[r * K + o] = w * (p - t)
        for l in range(last, -1, -1):
            nin = lay.sizes[l]
            nout = lay.sizes[l + 1]
            d = &delta[B * lay.a_off[l]]
            inp = &X[0, 0] if l == 0 else &post[B * lay.a_off[l - 1]]
            gb = &grad[lay.b_off[l]]
            for r in range(B):
                for o in range(nout):
                    gb[o] += d[r * nout + o]
            _gemm(b'N', b'T', <int>nin, <int>nout, <int>B, inp, <int>nin, d, <int>nout,
                  1.0, &grad[lay.w_off[l]], <int>nin)
            if l > 0:
                dprev = &delta[B * lay.a_off[l - 1]]
                _gemm(b'N', b'N', <int>nin, <int>B, <int>nout, &flat[lay.w_off[l]], <int>nin, d, <int>nout,
                      0.0, dprev, <int>nin)
                for i in range(B * nin):
                    dprev[i] *= _dact(pre[B * lay.a_off[l - 1] + i], post[B * lay.a_off[l - 1] + i], act)
    return loss, grad_arr


def logit_tangent(const double[::1] flat, sizes, int act, const double[:, ::1] X,
                  const double[::1] V):
    cdef _Layout lay = _Layout(sizes, flat.shape[0])
    if V.shape[0] != flat.shape[0]:
        raise ValueError("tangent length does not match parameter count")
    cdef Py_ssize_t B = X.shape[0], K = lay.sizes[lay.n_layers]
    cdef Py_ssize_t l, r, o, i, nin, nout, last = lay.n_layers - 1
    if B == 0:
        return np.empty((0, K), dtype=np.float64)
    cdef double[::1] pre = np.empty(B * lay.width_total)
    cdef double[::1] post = np.empty(B * lay.width_total)
    dz_arr = np.empty(B * lay.width_total)
    cdef double[::1] dz = dz_arr
    cdef const double* inp
    cdef double* dcur
    with nogil:
        _forward(&flat[0], lay, &X[0, 0], B, act, &pre[0], &post[0])
        for l in range(lay.n_layers):
            nin = lay.sizes[l]
            nout = lay.sizes[l + 1]
            dcur = &dz[B * lay.a_off[l]]
            inp = &X[0, 0] if l == 0 else &post[B * lay.a_off[l - 1]]
            for r in range(B):
                for o in range(nout):
                    dcur[r * nout + o] = V[lay.b_off[l] + o]
            # tangent of W_l x: V_W x + W_l dx (dx = 0 for the raw input)
            _gemm(b'T', b'N', <int>nout, <int>B, <int>nin, &V[lay.w_off[l]], <int>nin, inp, <int>nin,
                  1.0, dcur, <int>nout)
            if l > 0:
                _gemm(b'T', b'N', <int>nout, <int>B, <int>nin, &flat[lay.w_off[l]], <int>nin,
                      &dz[B * lay.a_off[l - 1]], <int>nin, 1.0, dcur, <int>nout)
            if l < last:
                for i in range(B * nout):
                    dcur[i] *= _dact(pre[B * lay.a_off[l] + i], post[B * lay.a_off[l] + i], act)
    start = B * lay.a_off[last]
    return dz_arr[start:start + B * K].reshape(B, K).copy()
