"""Dense float64 kernels with explicit vector-Jacobian products.

Arrays are plain ``numpy.ndarray`` objects in float64.  Every forward op that
takes part in training has a matching ``*_vjp`` function which maps the
gradient of the output back to gradients of the inputs.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericError


@numba.njit(cache=True)
def _matmul_kernel(a, b):
    # four output rows share each load of b[p, j]; every entry still sums p in order
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    i = 0
    while i + 4 <= m:
        for p in range(k):
            a0, a1, a2, a3 = a[i, p], a[i + 1, p], a[i + 2, p], a[i + 3, p]
            for j in range(n):
                bj = b[p, j]
                out[i, j] += a0 * bj
                out[i + 1, j] += a1 * bj
                out[i + 2, j] += a2 * bj
                out[i + 3, j] += a3 * bj
        i += 4
    for r in range(i, m):
        for p in range(k):
            ar = a[r, p]
            for j in range(n):
                out[r, j] += ar * b[p, j]
    return out


def matmul(a, b):
    """Matrix product with a fixed sequential accumulation order.

    Each output entry is summed over the inner index from 0 upwards, so the
    result is bit-identical to a naive triple loop and across runs.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _matmul_kernel(a.astype(np.float64, copy=False),
                          np.ascontiguousarray(b, dtype=np.float64))


def _matmul_bt(a, b):
    # a @ b.T: copy whichever operand is smaller (the product order is unchanged)
    if b.size > a.size:
        return np.ascontiguousarray(matmul(b, a.T).T)
    return matmul(a, b.T)


def matmul_vjp(g, a, b):
    return _matmul_bt(g, b), matmul(a.T, g)


def conv1x1(x, w, bias):
    """Per-position linear map of a ``c_in x L`` feature matrix."""
    if x.ndim != 2 or w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise DimensionError(f"conv1x1: weight {w.shape} does not match input {x.shape}")
    if bias.shape != (w.shape[0],):
        raise DimensionError(f"conv1x1: bias {bias.shape} does not match weight {w.shape}")
    return matmul(w, x) + bias[:, None]


def conv1x1_vjp(g, x, w):
    gw, gx = matmul_vjp(g, w, x)
    return gx, gw, g.sum(axis=1)


def _check_stride(stride):
    if stride not in (1, 2):
        raise ConfigError(f"conv3x3: unsupported stride {stride!r} (expected 1 or 2)")


def _out_extent(n, stride):
    return -(-n // stride)


@numba.njit(cache=True)
def _im2col_kernel(x, stride, ho, wo):
    c, h, w = x.shape
    cols = np.zeros((c * 9, ho * wo))
    for ch in range(c):
        for ki in range(3):
            for kj in range(3):
                row = ch * 9 + ki * 3 + kj
                for i in range(ho):
                    r = i * stride + ki - 1
                    if 0 <= r < h:
                        for j in range(wo):
                            q = j * stride + kj - 1
                            if 0 <= q < w:
                                cols[row, i * wo + j] = x[ch, r, q]
    return cols


@numba.njit(cache=True)
def _col2im_kernel(cols, c, h, w, stride, ho, wo):
    g = np.zeros((c, h, w))
    for ch in range(c):
        for ki in range(3):
            for kj in range(3):
                row = ch * 9 + ki * 3 + kj
                for i in range(ho):
                    r = i * stride + ki - 1
                    if 0 <= r < h:
                        for j in range(wo):
                            q = j * stride + kj - 1
                            if 0 <= q < w:
                                g[ch, r, q] += cols[row, i * wo + j]
    return g


def im2col(x, stride):
    """Patch matrix of a zero-padded 3x3 window; row ``c*9 + ki*3 + kj``, one column per output."""
    _, h, w = x.shape
    return _im2col_kernel(np.ascontiguousarray(x, dtype=np.float64), stride,
                          _out_extent(h, stride), _out_extent(w, stride))


def col2im(cols, shape, stride):
    """Adjoint of :func:`im2col`: scatter-add patch columns back onto the input grid."""
    c, h, w = shape
    return _col2im_kernel(np.ascontiguousarray(cols, dtype=np.float64), c, h, w, stride,
                          _out_extent(h, stride), _out_extent(w, stride))


def conv3x3(x, w, bias, stride=1):
    """3x3 convolution (cross-correlation) with zero padding 1."""
    _check_stride(stride)
    if x.ndim != 3 or w.ndim != 4 or w.shape[1:] != (x.shape[0], 3, 3):
        raise DimensionError(f"conv3x3: weight {w.shape} does not match input {x.shape}")
    if bias.shape != (w.shape[0],):
        raise DimensionError(f"conv3x3: bias {bias.shape} does not match weight {w.shape}")
    _, h, wd = x.shape
    out = matmul(w.reshape(w.shape[0], -1), im2col(x, stride)) + bias[:, None]
    return out.reshape(w.shape[0], _out_extent(h, stride), _out_extent(wd, stride))


def conv3x3_vjp(g, x, w, stride=1):
    c_out = w.shape[0]
    g2 = g.reshape(c_out, -1)
    cols = im2col(x, stride)
    w2 = w.reshape(c_out, -1)
    gw = _matmul_bt(g2, cols).reshape(w.shape)
    gx = col2im(matmul(w2.T, g2), x.shape, stride)
    return gx, gw, g2.sum(axis=1)


@lru_cache(maxsize=None)
def _interp_axis(n, factor):
    # align_corners=False source coordinates, clamped at the low border
    src = np.maximum((np.arange(n * factor) + 0.5) / factor - 0.5, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.intp), n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, src - i0


def _lerp_axis(x, axis, factor):
    i0, i1, lam = _interp_axis(x.shape[axis], factor)
    x = np.moveaxis(x, axis, 0)
    x0, x1 = x[i0], x[i1]
    lam = lam.reshape((-1,) + (1,) * (x.ndim - 1))
    return np.moveaxis(x0 + lam * (x1 - x0), 0, axis)


@numba.njit(cache=True)
def _lerp_scatter(g, i0, i1, lam, n):
    # g is (m, k, rest): scatter along the middle axis
    m, k, rest = g.shape
    out = np.zeros((m, n, rest))
    for a in range(m):
        for d in range(k):
            w1 = lam[d]
            w0 = 1.0 - w1
            r0, r1 = i0[d], i1[d]
            for b in range(rest):
                v = g[a, d, b]
                out[a, r0, b] += v * w0
                out[a, r1, b] += v * w1
    return out


def _lerp_axis_vjp(g, axis, n, factor):
    i0, i1, lam = _interp_axis(n, factor)
    shape = g.shape
    g3 = np.ascontiguousarray(g, dtype=np.float64).reshape(
        int(np.prod(shape[:axis])), shape[axis], int(np.prod(shape[axis + 1:])))
    return _lerp_scatter(g3, i0, i1, lam, n).reshape(shape[:axis] + (n,) + shape[axis + 1:])


def bilinear_upsample(x, factor):
    """Bilinear resize by an integer factor (align_corners=False convention)."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ConfigError(f"upsample factor must be a positive integer, got {factor!r}")
    if x.ndim != 3:
        raise DimensionError(f"bilinear_upsample expects c x H x W, got {x.shape}")
    if factor == 1:
        return x.copy()
    return np.ascontiguousarray(_lerp_axis(_lerp_axis(x, 1, factor), 2, factor))


def bilinear_upsample_vjp(g, in_shape, factor):
    if factor == 1:
        return g.copy()
    _, h, w = in_shape
    return _lerp_axis_vjp(_lerp_axis_vjp(g, 2, w, factor), 1, h, factor)


def relu(x):
    return np.maximum(x, 0.0)


def relu_vjp(g, x):
    return g * (x > 0)


def row_softmax(a, where=None):
    """Row-wise softmax computed after subtracting each row's maximum.

    With ``where`` given, entries where it is False are excluded: they behave
    as -inf before normalisation and come out as exactly 0.
    """
    a = np.asarray(a, dtype=np.float64)
    if where is not None:
        a = np.where(where, a, -np.inf)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_vjp(g, y):
    return y * (g - (g * y).sum(axis=1, keepdims=True))


def _check_labels(logits, labels):
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[1],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    bad = np.flatnonzero((labels < 0) | (labels >= logits.shape[0]))
    if bad.size:
        raise DataError(f"label {labels[bad[0]]} at position {bad[0]} outside [0, {logits.shape[0]})")
    return labels.astype(np.intp)


def log_softmax_cols(logits):
    shifted = logits - logits.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def cross_entropy(logits, labels):
    """Mean over positions of -log p(true class); ``logits`` is K x L."""
    labels = _check_labels(logits, labels)
    logp = log_softmax_cols(logits)
    return float(-logp[labels, np.arange(labels.size)].mean())


def cross_entropy_vjp(g, logits, labels):
    labels = _check_labels(logits, labels)
    p = np.exp(log_softmax_cols(logits))
    p[labels, np.arange(labels.size)] -= 1.0
    return g * p / labels.size


@dataclass
class GradPair:
    """A value together with a gradient buffer of the same shape."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise DimensionError(f"grad {self.grad.shape} does not match value {self.value.shape}")

    @property
    def shape(self):
        return self.value.shape


def sgd_step(p, lr, momentum, weight_decay, state):
    """SGD with momentum and L2 weight decay; updates ``p`` and ``state`` in place.

    v <- momentum * v + grad + weight_decay * value;  value <- value - lr * v
    """
    if state.shape != p.value.shape:
        raise DimensionError(f"momentum state {state.shape} does not match parameter {p.value.shape}")
    state *= momentum
    state += p.grad + weight_decay * p.value
    p.value -= lr * state
    p.grad[...] = 0.0
    return p, state


def grad_check(f, x, eps=1e-5):
    """Compare an analytic gradient against central differences.

    ``f(x)`` must return ``(scalar, grad)``.  Returns the largest
    ``|a - n| / max(1e-8, |a| + |n|)`` over all coordinates of ``x``.
    """
    x = np.array(x, dtype=np.float64)
    _, analytic = f(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise DimensionError(f"analytic gradient {analytic.shape} does not match input {x.shape}")
    numeric = np.empty_like(x)
    xp = x.copy()
    for i in range(x.size):
        xp.flat[i] = x.flat[i] + eps
        fp = f(xp.copy())[0]
        xp.flat[i] = x.flat[i] - eps
        fm = f(xp.copy())[0]
        xp.flat[i] = x.flat[i]
        numeric.flat[i] = (fp - fm) / (2 * eps)
    if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
        raise NumericError("grad_check: non-finite function value or gradient")
    err = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(err.max()) if err.size else 0.0
