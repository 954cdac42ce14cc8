"""Boolean adjacency matrices with bit-packed rows.

Row ``i`` of an L-node graph is stored as ``ceil(L / 64)`` little-endian
uint64 words; bit ``j`` of the row is the edge ``i -> j``.  Products are taken
in the boolean semiring, so walk counts are never materialised.
"""
from collections import deque

import numba
import numpy as np

from .errors import ConfigError, DimensionError
from .imageio import write_pbm


def _n_words(size):
    return (size + 63) // 64


class BoolAdjacency:
    __slots__ = ("size", "words")

    def __init__(self, size, words):
        words = np.asarray(words, dtype=np.uint64)
        if size < 1 or words.shape != (size, _n_words(size)):
            raise DimensionError(f"bad packed adjacency: size {size}, words {words.shape}")
        self.size = size
        self.words = words

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionError(f"adjacency must be square, got {dense.shape}")
        size = dense.shape[0]
        padded = np.zeros((size, _n_words(size) * 64), dtype=bool)
        padded[:, :size] = dense
        packed = np.packbits(padded, axis=1, bitorder="little")
        return cls(size, packed.view("<u8").astype(np.uint64))

    def to_dense(self):
        raw = np.ascontiguousarray(self.words.astype("<u8")).view(np.uint8)
        return np.unpackbits(raw, axis=1, bitorder="little")[:, :self.size].astype(bool)

    def has_edge(self, i, j):
        i, j = int(i), int(j)
        return bool((int(self.words[i, j >> 6]) >> (j & 63)) & 1)

    def edge_count(self):
        return int(np.unpackbits(self.words.view(np.uint8)).sum())

    def __matmul__(self, other):
        return bool_matmul(self, other)

    def __eq__(self, other):
        if not isinstance(other, BoolAdjacency):
            return NotImplemented
        return self.size == other.size and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.size, self.words.tobytes()))

    def __repr__(self):
        return f"BoolAdjacency(size={self.size}, edges={self.edge_count()})"

    def to_pbm(self, path):
        write_pbm(path, self.to_dense())


@numba.njit(cache=True)
def _bitset_product(a_words, b_words, size):
    n_words = b_words.shape[1]
    out = np.zeros_like(b_words)
    one = np.uint64(1)
    for i in range(size):
        for w in range(a_words.shape[1]):
            word = a_words[i, w]
            bit = 0
            while word:
                if word & one:
                    j = w * 64 + bit
                    for v in range(n_words):
                        out[i, v] |= b_words[j, v]
                word >>= one
                bit += 1
    return out


def bool_matmul(a, b):
    """Boolean product: row i of the result ORs the rows of ``b`` selected by row i of ``a``."""
    if a.size != b.size:
        raise DimensionError(f"cannot multiply adjacencies of size {a.size} and {b.size}")
    return BoolAdjacency(a.size, _bitset_product(a.words, b.words, a.size))


@numba.njit(cache=True)
def naive_bool_matmul(a, b):
    """O(L^3) reference product on dense boolean matrices."""
    n = a.shape[0]
    out = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        for j in range(n):
            acc = False
            for k in range(n):
                acc = acc | (a[i, k] & b[k, j])
            out[i, j] = acc
    return out


def from_threshold(a_norm, delta):
    """Keep edge (i, j) iff ``a_norm[i, j] >= delta``; the diagonal is always kept."""
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"threshold delta must lie in [0, 1], got {delta}")
    a_norm = np.asarray(a_norm)
    if a_norm.ndim != 2 or a_norm.shape[0] != a_norm.shape[1]:
        raise DimensionError(f"attention map must be square, got {a_norm.shape}")
    dense = a_norm >= delta
    np.fill_diagonal(dense, True)
    return BoolAdjacency.from_dense(dense)


def bool_power(b, h):
    """``b`` multiplied by itself ``h - 1`` times, binarised after every product."""
    if int(h) != h or h < 1:
        raise ConfigError(f"adjacency power must be a positive integer, got {h}")
    out = b
    for _ in range(int(h) - 1):
        out = out @ b
    return out


def bool_powers(b, n):
    """``[b^1, ..., b^n]`` built incrementally."""
    if int(n) != n or n < 1:
        raise ConfigError(f"highest level must be a positive integer, got {n}")
    powers = [b]
    for _ in range(int(n) - 1):
        powers.append(powers[-1] @ b)
    return powers


def bfs_within(b, source, h):
    """Nodes reachable from ``source`` in at most ``h`` hops (source included)."""
    if not 0 <= source < b.size:
        raise IndexError(f"source {source} out of range for {b.size} nodes")
    dense = b.to_dense()
    neighbours = [np.flatnonzero(row) for row in dense]
    seen = np.zeros(b.size, dtype=bool)
    seen[source] = True
    queue = deque([(source, 0)])
    while queue:
        node, depth = queue.popleft()
        if depth == h:
            continue
        for nxt in neighbours[node]:
            if not seen[nxt]:
                seen[nxt] = True
                queue.append((nxt, depth + 1))
    return seen


def transitive_closure(b):
    """Power ``b`` until it stops changing.

    Returns the fixed point and the smallest exponent ``h`` with
    ``b^h == b^(h+1)``.  With self-loops on every node this is at most
    ``size``; without them the powers may cycle, which raises ``ConfigError``.
    """
    # the index of a boolean matrix never exceeds (L - 1)^2 + 1
    limit = (b.size - 1) ** 2 + 1
    current, h = b, 1
    while True:
        nxt = current @ b
        if nxt == current:
            return current, h
        if h > limit:
            raise ConfigError("adjacency powers are periodic and never reach a fixed point")
        current, h = nxt, h + 1
