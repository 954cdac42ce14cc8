"""Hierarchical attention over the positions of a ``c x L`` feature map.

The block computes a scaled dot-product similarity map, thresholds a min-max
normalised copy of it into a graph, takes boolean powers of that graph to get
one neighbourhood mask per level, and mixes features with a masked softmax per
level before fusing the levels back to ``c`` channels.

Model code is written against an ``ops`` object: :class:`~hanet.autodiff.Eager`
for plain arrays or a :class:`~hanet.autodiff.Tape` for differentiable runs.
"""
from dataclasses import dataclass, field, fields

import numpy as np

from .autodiff import Eager, Tape, value_of
from .errors import ConfigError, DimensionError, NumericError, StateError
from .graph import BoolAdjacency, bool_powers, from_threshold
from .tensor import row_softmax

MODES = ("masked", "dense-power")


@dataclass(frozen=True)
class HAConfig:
    delta: float = 0.5
    n: int = 2
    mode: str = "masked"
    c: int = 32

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"ha.delta must lie in [0, 1], got {self.delta}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"ha.n must be a positive integer, got {self.n}")
        if self.mode not in MODES:
            raise ConfigError(f"ha.mode must be one of {MODES}, got {self.mode!r}")
        if int(self.c) != self.c or self.c < 1:
            raise ConfigError(f"ha.c must be a positive integer, got {self.c}")


@dataclass
class HAParams:
    """Weights of one HA block; every ``w*`` is ``c_out x c_in`` and acts as a 1x1 conv.

    The key projection has no bias: it would add a constant to each row of the
    similarity map, which the row softmax cancels, so it could never learn.
    """

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    wh: np.ndarray
    bh: np.ndarray
    w_level: list
    b_level: list
    w_fuse: np.ndarray
    b_fuse: np.ndarray

    @classmethod
    def init(cls, c, n, rng):
        def lin(c_out, c_in):
            return rng.normal(0.0, 1.0 / np.sqrt(c_in), (c_out, c_in)), np.zeros(c_out)

        wq, bq = lin(c, c)
        wk, _ = lin(c, c)
        wh, bh = lin(c, c)
        levels = [lin(c, c) for _ in range(n)]
        w_fuse, b_fuse = lin(c, n * c)
        return cls(wq, bq, wk, wh, bh,
                   [w for w, _ in levels], [b for _, b in levels], w_fuse, b_fuse)

    @classmethod
    def identity(cls, c, n):
        """Identity projections and zero biases; fusion averages the levels."""
        eye, zero = np.eye(c), np.zeros(c)
        return cls(eye.copy(), zero.copy(), eye.copy(), eye.copy(), zero.copy(),
                   [eye.copy() for _ in range(n)], [zero.copy() for _ in range(n)],
                   np.hstack([eye] * n) / n, zero.copy())

    @property
    def n(self):
        return len(self.w_level)

    def named(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                out.update({f"{f.name}.{i}": v for i, v in enumerate(value)})
            else:
                out[f.name] = value
        return out

    def map(self, fn):
        kw = {}
        for f in fields(self):
            value = getattr(self, f.name)
            kw[f.name] = [fn(v) for v in value] if isinstance(value, list) else fn(value)
        return type(self)(**kw)

    @classmethod
    def from_named(cls, named):
        n = sum(1 for k in named if k.startswith("w_level."))
        kw = {}
        for f in fields(cls):
            if f.name in ("w_level", "b_level"):
                kw[f.name] = [named[f"{f.name}.{i}"] for i in range(n)]
            else:
                kw[f.name] = named[f.name]
        return cls(**kw)


@dataclass
class AttentionBundle:
    a_star: np.ndarray
    a_norm: np.ndarray
    masks: list
    a_levels: list
    tape: Tape = field(default=None, repr=False)
    _inputs: tuple = field(default=None, repr=False)
    _output: object = field(default=None, repr=False)


def dense_similarity(x, params, ops=Eager):
    """``alpha * Q^T K`` with ``alpha = 1 / sqrt(channels of K)``."""
    q = ops.conv1x1(x, params.wq, params.bq)
    k = ops.matmul(params.wk, x)
    alpha = 1.0 / np.sqrt(value_of(k).shape[0])
    return ops.scale(ops.matmul(ops.transpose(q), k), alpha)


def normalize_minmax(a_star):
    a_star = np.asarray(a_star, dtype=np.float64)
    lo, hi = a_star.min(), a_star.max()
    if hi == lo:
        return np.zeros_like(a_star)
    return (a_star - lo) / (hi - lo)


def propagation_masks(a_norm, cfg):
    return bool_powers(from_threshold(a_norm, cfg.delta), cfg.n)


def attention_propagation(a_star, a_norm, cfg):
    """Masks ``B^1..B^n`` and the raw level maps ``A^h = A* restricted to B^h``.

    Entries outside a mask are 0 in the returned maps; they are excluded from
    the softmax by :func:`masked_row_softmax`, not treated as values.
    """
    if cfg.mode != "masked":
        raise ConfigError(f"attention_propagation needs mode 'masked', got {cfg.mode!r}")
    a_star = np.asarray(a_star)
    masks = propagation_masks(a_norm, cfg)
    return masks, [np.where(m.to_dense(), a_star, 0.0) for m in masks]


def dense_power_propagation(a_star, cfg, ops=Eager):
    """Level maps as real matrix powers of ``a_star``; no masking."""
    if cfg.mode != "dense-power":
        raise ConfigError(f"dense_power_propagation needs mode 'dense-power', got {cfg.mode!r}")
    levels = [a_star]
    for _ in range(cfg.n - 1):
        levels.append(ops.matmul(levels[-1], a_star))
    return levels


def _support(mask):
    dense = mask.to_dense() if isinstance(mask, BoolAdjacency) else np.asarray(mask, dtype=bool)
    if not dense.any(axis=1).all():
        raise StateError("attention mask has a row with no unmasked entry")
    return dense


def masked_row_softmax(values, mask):
    return row_softmax(values, where=_support(mask))


def aggregate(h_feat, a_levels, params, ops=Eager):
    """Fuse ``W^h(H A~^h^T)`` over all levels with one 1x1 conv.

    Row ``i`` of each level map holds the weights query position ``i`` gives to
    every other position, hence the transpose.
    """
    if len(a_levels) != params.n:
        raise ConfigError(f"{len(a_levels)} attention levels for {params.n} level projections")
    parts = [ops.conv1x1(ops.matmul(h_feat, ops.transpose(a)), w, b)
             for a, w, b in zip(a_levels, params.w_level, params.b_level)]
    return ops.conv1x1(ops.concat(parts), params.w_fuse, params.b_fuse)


def ha_apply(x, params, cfg, ops=Eager, masks=None):
    """Run the block through ``ops``; returns ``(x_plus, bundle)``.

    ``masks`` overrides the thresholded graph powers, e.g. to hold them fixed
    while finite-differencing.
    """
    levels, bundle = attention_levels(x, params, cfg, ops, masks)
    h_feat = ops.conv1x1(x, params.wh, params.bh)
    return aggregate(h_feat, levels, params, ops), bundle


def attention_levels(x, params, cfg, ops=Eager, masks=None):
    """Normalised level maps ``A~^1..A~^n`` (as ``ops`` nodes) and their bundle.

    Only the query and key projections are used, so ``cfg.n`` may differ from
    the number of level projections in ``params``.
    """
    xv = value_of(x)
    if xv.ndim != 2:
        raise DimensionError(f"HA input must be c x L, got {xv.shape}")
    if not np.all(np.isfinite(xv)):
        raise NumericError("HA input contains non-finite values")
    a_star = dense_similarity(x, params, ops)
    a_star_v = value_of(a_star)
    a_norm = normalize_minmax(a_star_v)
    if cfg.mode == "masked":
        if masks is None:
            masks = propagation_masks(a_norm, cfg)
        if len(masks) != cfg.n:
            raise ConfigError(f"{len(masks)} masks supplied for n={cfg.n}")
        levels = [ops.softmax(a_star, where=_support(m)) for m in masks]
    else:
        masks = None
        levels = [ops.softmax(a) for a in dense_power_propagation(a_star, cfg, ops)]
    return levels, AttentionBundle(a_star_v, a_norm, masks, [value_of(a) for a in levels])


def ha_forward(x, params, cfg, masks=None):
    """Forward pass on a fresh tape; keep the bundle to call :func:`ha_backward`."""
    tape = Tape()
    xv = tape.leaf(x)
    pv = params.map(tape.leaf)
    out, bundle = ha_apply(xv, pv, cfg, tape, masks)
    bundle.tape = tape
    bundle._inputs = (xv, pv)
    bundle._output = out
    return out.value.copy(), bundle


def ha_backward(bundle, grad):
    """Gradients of ``<grad, x_plus>`` w.r.t. the input (``"x"``) and every parameter.

    Masks are constants: nothing flows through the threshold comparison.
    """
    if bundle is None or bundle.tape is None:
        raise StateError("ha_backward needs the bundle returned by ha_forward")
    xv, pv = bundle._inputs
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != bundle._output.shape:
        raise DimensionError(f"upstream gradient {grad.shape} vs output {bundle._output.shape}")
    bundle.tape.backward(bundle._output, grad)
    grads = {"x": xv.grad.copy()}
    grads.update({k: v.grad.copy() for k, v in pv.named().items()})
    return grads


def attention_row_image(a_level, index, grid_shape):
    """Row ``index`` of a level map on the feature grid, scaled so its max is 255."""
    row = np.asarray(a_level)[index].reshape(grid_shape)
    peak = row.max()
    if peak <= 0:
        return np.zeros(grid_shape, dtype=np.uint8)
    return np.rint(row / peak * 255.0).astype(np.uint8)
