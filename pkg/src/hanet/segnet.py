"""Desk-scale encoder / HA / decoder segmentation network.

Layout at input size S (all 3x3 convs pad by 1, every conv but the classifier
is followed by ReLU)::

    image (c_in, S, S)
      conv3x3 s1 -> width             (S)
      conv3x3 s2 -> 2*width           (S/2)   low-level tap
      conv3x3 s2 -> 4*width           (S/4)
      1x1 -> c                                 X, L = (S/4)^2 positions
      HA block                                 X+
      1x1 -> c, upsample x2, concat low-level
      conv3x3 s1 -> 2*width, 1x1 -> K, upsample x2 -> logits (K, S, S)

Parameters live in a flat ``{name: ndarray}`` dict in a fixed order; that
order is also the tensor order of the checkpoint file.
"""
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import HAConfig, HAParams, attention_levels, ha_apply
from .autodiff import Eager, Tape, value_of
from .errors import ConfigError, DataError, DimensionError, NumericError
from .metrics import task_scores
from .tensor import GradPair, sgd_step

CHECKPOINT_MAGIC = b"HANT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SegNetConfig:
    c_in: int = 1
    c: int = 32
    classes: int = 3
    size: int = 64
    width: int = 8
    ha: HAConfig = field(default_factory=HAConfig)

    def __post_init__(self):
        if self.size < 4 or self.size % 4:
            raise ConfigError(f"input size must be a positive multiple of 4, got {self.size}")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.c_in < 1 or self.width < 1:
            raise ConfigError("c_in and width must be positive")
        if self.ha.c != self.c:
            raise ConfigError(f"HA width {self.ha.c} differs from network width {self.c}")

    @property
    def grid(self):
        return self.size // 4, self.size // 4

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["ha"] = HAConfig(**d["ha"])
        return cls(**d)


def param_shapes(cfg):
    w, c = cfg.width, cfg.c
    shapes = {
        "enc1.w": (w, cfg.c_in, 3, 3), "enc1.b": (w,),
        "enc2.w": (2 * w, w, 3, 3), "enc2.b": (2 * w,),
        "enc3.w": (4 * w, 2 * w, 3, 3), "enc3.b": (4 * w,),
        "neck_in.w": (c, 4 * w), "neck_in.b": (c,),
    }
    ha = HAParams.identity(c, cfg.ha.n)
    shapes.update({f"ha.{k}": v.shape for k, v in ha.named().items()})
    shapes.update({
        "neck_out.w": (c, c), "neck_out.b": (c,),
        "dec.w": (2 * w, c + 2 * w, 3, 3), "dec.b": (2 * w,),
        "cls.w": (cfg.classes, 2 * w), "cls.b": (cfg.classes,),
    })
    return shapes


def init_params(cfg, seed):
    """He-normal convolutions, zero biases; HA weights from :meth:`HAParams.init`.

    Encoder, HA and decoder draw from separate child streams of ``seed``, so
    changing the number of HA levels leaves the other blocks' weights unchanged.
    """
    enc_rng, ha_rng, dec_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    shapes = param_shapes(cfg)
    ha = HAParams.init(cfg.c, cfg.ha.n, ha_rng).named()
    params = {}
    for name, shape in shapes.items():
        if name.startswith("ha."):
            params[name] = ha[name[3:]]
        elif name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            rng = enc_rng if name.startswith(("enc", "neck_in")) else dec_rng
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    return params


def _ha_params(params):
    return HAParams.from_named({k[3:]: v for k, v in params.items() if k.startswith("ha.")})


def _pointwise(ops, x, w, b):
    c, h, wd = value_of(x).shape
    y = ops.conv1x1(ops.reshape(x, (c, h * wd)), w, b)
    return ops.reshape(y, (value_of(w).shape[0], h, wd))


def encode(params, image, cfg, ops=Eager):
    """Returns ``(low_level, deep)``; ``deep`` is ``c x S/4 x S/4``."""
    if value_of(image).shape != (cfg.c_in, cfg.size, cfg.size):
        raise DimensionError(f"image {value_of(image).shape} does not match "
                             f"{(cfg.c_in, cfg.size, cfg.size)}")
    p = params
    x = ops.relu(ops.conv3x3(image, p["enc1.w"], p["enc1.b"], 1))
    low = ops.relu(ops.conv3x3(x, p["enc2.w"], p["enc2.b"], 2))
    x = ops.relu(ops.conv3x3(low, p["enc3.w"], p["enc3.b"], 2))
    deep = ops.relu(_pointwise(ops, x, p["neck_in.w"], p["neck_in.b"]))
    return low, deep


def decode(params, x_plus, low, cfg, ops=Eager):
    """Logits ``K x S x S`` from the reinforced map and the low-level skip."""
    p = params
    gh, gw = cfg.grid
    if value_of(x_plus).shape != (cfg.c, gh, gw) or value_of(low).shape[1:] != (2 * gh, 2 * gw):
        raise DimensionError(f"decoder inputs {value_of(x_plus).shape} and {value_of(low).shape} "
                             f"do not fit a {cfg.size}x{cfg.size} network")
    x = ops.relu(_pointwise(ops, x_plus, p["neck_out.w"], p["neck_out.b"]))
    x = ops.concat([ops.upsample(x, 2), low])
    x = ops.relu(ops.conv3x3(x, p["dec.w"], p["dec.b"], 1))
    return ops.upsample(_pointwise(ops, x, p["cls.w"], p["cls.b"]), 2)


def forward(params, image, cfg, ops=Eager, masks=None):
    """Full network; returns ``(logits, attention_bundle)``."""
    low, deep = encode(params, image, cfg, ops)
    c, gh, gw = value_of(deep).shape
    x_plus, bundle = ha_apply(ops.reshape(deep, (c, gh * gw)), _ha_params(params), cfg.ha, ops, masks)
    return decode(params, ops.reshape(x_plus, (c, gh, gw)), low, cfg, ops), bundle


def attention_maps(params, image, cfg, ha_cfg=None):
    """Attention bundle of the HA block for one image.

    ``ha_cfg`` may change ``delta``, ``n`` or ``mode`` relative to training;
    only the query/key weights are needed to form the maps.
    """
    _, deep = encode(params, image, cfg)
    c, gh, gw = deep.shape
    return attention_levels(deep.reshape(c, gh * gw), _ha_params(params), ha_cfg or cfg.ha)[1]


def loss_and_grads(params, image, labels, cfg, masks=None):
    """Cross-entropy of one sample and its gradient for every parameter."""
    tape = Tape()
    pv = {k: tape.leaf(v) for k, v in params.items()}
    logits, _ = forward(pv, tape.leaf(image), cfg, tape, masks)
    flat = tape.reshape(logits, (cfg.classes, cfg.size * cfg.size))
    loss = tape.cross_entropy(flat, np.asarray(labels).reshape(-1))
    tape.backward(loss)
    return float(loss.value), {k: v.grad for k, v in pv.items()}


def predict(params, image, cfg):
    logits, _ = forward(params, image, cfg)
    return logits.argmax(axis=0)


def evaluate(params, samples, task, cfg):
    """Mean of the per-sample task scores, plus the per-sample rows."""
    rows = [task_scores(task, predict(params, s.image, cfg), s.mask) for s in samples]
    if not rows:
        raise DataError("cannot evaluate on an empty sample list")
    means = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    return means, rows


def _augment(image, mask, k):
    # k in [0, 8): an element of the square's symmetry group
    if k & 4:
        image, mask = image[:, :, ::-1], mask[:, ::-1]
    image, mask = np.rot90(image, k & 3, axes=(1, 2)), np.rot90(mask, k & 3)
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)


@dataclass
class TrainResult:
    params: dict  # weights of the best validation epoch
    history: list  # (epoch, mean loss, validation mDice)
    best_epoch: int
    best_mdice: float


def train(cfg, train_set, val_set, task, epochs, lr=0.01, momentum=0.9, weight_decay=5e-4,
          seed=0, augment=True, clip_norm=1.0, on_epoch=None):
    """Batch-size-1 SGD; deterministic for fixed arguments.

    Gradients are rescaled so their global L2 norm is at most ``clip_norm``
    (``None`` disables this). After every epoch the model is scored on
    ``val_set``; the returned parameters are those of the best-scoring epoch
    (ties keep the earlier).
    """
    if clip_norm is not None and clip_norm <= 0:
        raise ConfigError(f"clip_norm must be positive, got {clip_norm}")
    if not train_set:
        raise DataError("training set is empty")
    if not val_set:
        raise DataError("validation set is empty")
    params = init_params(cfg, seed)
    state = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng([seed, 7])
    history = []
    best = (-1.0, 0, {k: v.copy() for k, v in params.items()})
    for epoch in range(1, epochs + 1):
        losses = []
        for i in rng.permutation(len(train_set)):
            s = train_set[i]
            image, mask = _augment(s.image, s.mask, int(rng.integers(8))) if augment else (s.image, s.mask)
            loss, grads = loss_and_grads(params, image, mask, cfg)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            if clip_norm is not None:
                norm = np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
                if norm > clip_norm:
                    grads = {k: g * (clip_norm / norm) for k, g in grads.items()}
            for k, g in grads.items():
                sgd_step(GradPair(params[k], g), lr, momentum, weight_decay, state[k])
            losses.append(loss)
        score = evaluate(params, val_set, task, cfg)[0]["mdice"]
        history.append((epoch, float(np.mean(losses)), score))
        if score > best[0]:
            best = (score, epoch, {k: v.copy() for k, v in params.items()})
        if on_epoch is not None:
            on_epoch(*history[-1])
    return TrainResult(best[2], history, best[1], best[0])


def save_checkpoint(path, params, config):
    """Little-endian: magic, u32 version, u32 length + JSON config, then tensors.

    Each tensor is ``u32 rank, u32 extents..., f64 data`` in parameter order.
    """
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for value in params.values():
            value = np.asarray(value, dtype="<f8")
            fh.write(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
            fh.write(value.tobytes(order="C"))


def load_checkpoint(path):
    """Returns ``(config, tensors)`` with tensors in file order."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 12 + n
    config = json.loads(data[12:pos].decode("utf-8"))
    tensors = []
    while pos < len(data):
        (rank,) = struct.unpack_from("<I", data, pos)
        shape = struct.unpack_from(f"<{rank}I", data, pos + 4)
        pos += 4 + 4 * rank
        count = int(np.prod(shape))
        tensors.append(np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).copy())
        pos += 8 * count
    return config, tensors


def params_from_tensors(cfg, tensors):
    shapes = param_shapes(cfg)
    if len(tensors) != len(shapes):
        raise ConfigError(f"checkpoint holds {len(tensors)} tensors, model needs {len(shapes)}")
    params = {}
    for (name, shape), t in zip(shapes.items(), tensors):
        if t.shape != shape:
            raise ConfigError(f"checkpoint tensor {name} has shape {t.shape}, model needs {shape}")
        params[name] = t.astype(np.float64)
    return params
