"""A small reverse-mode tape over the kernels in :mod:`hanet.tensor`.

Ops take and return :class:`~hanet.tensor.GradPair` nodes and push a closure
that applies the op's VJP.  :class:`Eager` exposes the same op names on plain
arrays so model code can be written once and run with or without a tape.
"""
import numpy as np

from . import tensor as T
from .tensor import GradPair


class Tape:
    def __init__(self):
        self._nodes = []
        self._backward = []

    def _node(self, value):
        node = GradPair(value)
        self._nodes.append(node)
        return node

    def leaf(self, value):
        return self._node(value)

    def matmul(self, a, b):
        out = self._node(T.matmul(a.value, b.value))

        def back():
            ga, gb = T.matmul_vjp(out.grad, a.value, b.value)
            a.grad += ga
            b.grad += gb

        self._backward.append(back)
        return out

    def conv1x1(self, x, w, b):
        out = self._node(T.conv1x1(x.value, w.value, b.value))

        def back():
            gx, gw, gb = T.conv1x1_vjp(out.grad, x.value, w.value)
            x.grad += gx
            w.grad += gw
            b.grad += gb

        self._backward.append(back)
        return out

    def conv3x3(self, x, w, b, stride=1):
        out = self._node(T.conv3x3(x.value, w.value, b.value, stride))

        def back():
            gx, gw, gb = T.conv3x3_vjp(out.grad, x.value, w.value, stride)
            x.grad += gx
            w.grad += gw
            b.grad += gb

        self._backward.append(back)
        return out

    def relu(self, x):
        out = self._node(T.relu(x.value))

        def back():
            x.grad += T.relu_vjp(out.grad, x.value)

        self._backward.append(back)
        return out

    def upsample(self, x, factor):
        out = self._node(T.bilinear_upsample(x.value, factor))

        def back():
            x.grad += T.bilinear_upsample_vjp(out.grad, x.shape, factor)

        self._backward.append(back)
        return out

    def concat(self, xs):
        out = self._node(np.concatenate([x.value for x in xs], axis=0))
        splits = np.cumsum([x.shape[0] for x in xs])[:-1]

        def back():
            for x, g in zip(xs, np.split(out.grad, splits, axis=0)):
                x.grad += g

        self._backward.append(back)
        return out

    def reshape(self, x, shape):
        out = self._node(x.value.reshape(shape))

        def back():
            x.grad += out.grad.reshape(x.shape)

        self._backward.append(back)
        return out

    def transpose(self, x):
        out = self._node(np.ascontiguousarray(x.value.T))

        def back():
            x.grad += out.grad.T

        self._backward.append(back)
        return out

    def scale(self, x, s):
        out = self._node(x.value * s)

        def back():
            x.grad += out.grad * s

        self._backward.append(back)
        return out

    def softmax(self, x, where=None):
        out = self._node(T.row_softmax(x.value, where))

        def back():
            x.grad += T.softmax_vjp(out.grad, out.value)

        self._backward.append(back)
        return out

    def cross_entropy(self, logits, labels):
        out = self._node(np.array(T.cross_entropy(logits.value, labels)))

        def back():
            logits.grad += T.cross_entropy_vjp(out.grad, logits.value, labels)

        self._backward.append(back)
        return out

    def backward(self, out, seed=None):
        """Reset every gradient on the tape, seed ``out`` and run all VJPs."""
        for node in self._nodes:
            node.grad[...] = 0.0
        out.grad += np.ones_like(out.value) if seed is None else seed
        for back in reversed(self._backward):
            back()


class Eager:
    """Tape-free twin of :class:`Tape` operating directly on arrays."""

    @staticmethod
    def leaf(value):
        return np.asarray(value, dtype=np.float64)

    matmul = staticmethod(T.matmul)
    conv1x1 = staticmethod(T.conv1x1)
    conv3x3 = staticmethod(T.conv3x3)
    relu = staticmethod(T.relu)
    upsample = staticmethod(T.bilinear_upsample)
    softmax = staticmethod(T.row_softmax)
    cross_entropy = staticmethod(T.cross_entropy)

    @staticmethod
    def concat(xs):
        return np.concatenate(xs, axis=0)

    @staticmethod
    def reshape(x, shape):
        return x.reshape(shape)

    @staticmethod
    def transpose(x):
        return np.ascontiguousarray(x.T)

    @staticmethod
    def scale(x, s):
        return x * s


def value_of(x):
    return x.value if isinstance(x, GradPair) else x
