"""JSON run configuration shared by the CLI and the scripted experiments."""
import inspect
import json
from dataclasses import asdict, dataclass, field, fields

from .attention import HAConfig
from .data import GENERATORS, TASK_CLASSES, make_dataset, split_seeds
from .errors import ConfigError
from .segnet import SegNetConfig, train


@dataclass(frozen=True)
class ExportSpec:
    sample_seed: int
    pixel: tuple


@dataclass(frozen=True)
class RunConfig:
    task: str = "disks"
    ha: HAConfig = field(default_factory=HAConfig)
    epochs: int = 30
    seed: int = 0
    data_seed: int = 0
    output_dir: str = "run"
    n_train: int = 200
    n_test: int = 50
    size: int = 64
    width: int = 8
    data: dict = field(default_factory=dict)  # extra generator keyword arguments
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    clip_norm: float = 1.0
    augment: bool = True
    export_attention: ExportSpec = None

    def __post_init__(self):
        if self.task not in GENERATORS:
            raise ConfigError(f"task: unknown task {self.task!r}; expected one of {sorted(GENERATORS)}")
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train/n_test: both splits must be non-empty")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError(f"clip_norm: must be positive or null, got {self.clip_norm}")
        check_data_params(self.task, self.data)
        self.model_config()  # surfaces SegNetConfig invariants before any work starts
        if self.export_attention is not None:
            r, c = self.export_attention.pixel
            if not (0 <= r < self.size and 0 <= c < self.size):
                raise ConfigError(f"export_attention.pixel: ({r}, {c}) outside the "
                                  f"{self.size}x{self.size} image")

    def model_config(self):
        return SegNetConfig(c=self.ha.c, classes=TASK_CLASSES[self.task], size=self.size,
                            width=self.width, ha=self.ha)

    def splits(self):
        return split_seeds(self.data_seed, self.n_train, self.n_test)

    def datasets(self):
        train_seeds, test_seeds = self.splits()
        return (make_dataset(self.task, train_seeds, self.size, **self.data),
                make_dataset(self.task, test_seeds, self.size, **self.data))

    def to_dict(self):
        d = asdict(self)
        if self.export_attention is not None:
            d["export_attention"]["pixel"] = list(self.export_attention.pixel)
        return d

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"config: unknown key(s) {unknown}")
        d = dict(raw)
        ha = d.get("ha", {})
        if not isinstance(ha, dict):
            raise ConfigError("ha: must be an object")
        bad = sorted(set(ha) - {f.name for f in fields(HAConfig)})
        if bad:
            raise ConfigError(f"ha: unknown key(s) {bad}")
        try:
            d["ha"] = HAConfig(**ha)
        except ConfigError as e:
            raise ConfigError(f"ha: {e}") from None
        exp = d.get("export_attention")
        if exp is not None:
            if not isinstance(exp, dict) or set(exp) != {"sample_seed", "pixel"}:
                raise ConfigError("export_attention: expected {\"sample_seed\": int, \"pixel\": [row, col]}")
            pixel = exp["pixel"]
            if not isinstance(pixel, (list, tuple)) or len(pixel) != 2:
                raise ConfigError("export_attention.pixel: expected [row, col]")
            d["export_attention"] = ExportSpec(int(exp["sample_seed"]), tuple(int(v) for v in pixel))
        for f in fields(cls):
            if f.name == "clip_norm" and d.get(f.name, 0) is None:
                continue
            if f.name in d and f.type in (int, float, bool) and not _type_ok(d[f.name], f.type):
                raise ConfigError(f"{f.name}: expected {f.type.__name__}, got {d[f.name]!r}")
        if "data" in d and not isinstance(d["data"], dict):
            raise ConfigError("data: must be an object")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(raw)


def check_data_params(task, params):
    """Reject generator options that ``task``'s generator does not accept."""
    if task not in GENERATORS:
        raise ConfigError(f"task: unknown task {task!r}; expected one of {sorted(GENERATORS)}")
    allowed = set(inspect.signature(GENERATORS[task]).parameters) - {"seed", "size"}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(f"data: unknown key(s) {unknown} for task {task!r}; allowed {sorted(allowed)}")


def _type_ok(value, kind):
    if kind is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if kind is int:
        return isinstance(value, int)
    return isinstance(value, (int, float))


def run_training(rc, on_epoch=None):
    """Train ``rc`` on its generated splits; returns ``(model_config, TrainResult)``."""
    cfg = rc.model_config()
    train_set, test_set = rc.datasets()
    result = train(cfg, train_set, test_set, rc.task, rc.epochs, lr=rc.lr, momentum=rc.momentum,
                   weight_decay=rc.weight_decay, seed=rc.seed, augment=rc.augment,
                   clip_norm=rc.clip_norm, on_epoch=on_epoch)
    return cfg, result
