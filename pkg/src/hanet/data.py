"""Seeded synthetic segmentation tasks.

* ``disks``   - nested low-contrast ellipses (background / disc / cup), K=3
* ``vessels`` - thin branching random-walk strokes, K=2
* ``blobs``   - smooth irregular blobs under heavy noise, K=2

Every sample is a pure function of its seed through :class:`XorShift64Star`,
so datasets are reproducible independently of numpy's generators.
"""
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .imageio import write_pgm

_MASK64 = (1 << 64) - 1
TEST_SEED_OFFSET = 1_000_000
TASK_CLASSES = {"disks": 3, "vessels": 2, "blobs": 2}


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class XorShift64Star:
    """xorshift64* generator, seeded through one round of splitmix64."""

    def __init__(self, seed):
        self.state = splitmix64(int(seed) & _MASK64) or 0x9E3779B97F4A7C15
        self._spare = None

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def integers(self, lo, hi):
        """Uniform integer in ``[lo, hi)``."""
        return lo + self.next_u64() % (hi - lo)

    def normal(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2 * math.pi * u2)
        return r * math.cos(2 * math.pi * u2)

    def normals(self, shape):
        return np.array([self.normal() for _ in range(int(np.prod(shape)))]).reshape(shape)


@dataclass
class SegSample:
    image: np.ndarray  # 1 x H x W, values in [0, 1]
    mask: np.ndarray  # H x W, int class ids
    seed: int


def _add_noise(rng, clean, sigma):
    # noise is drawn even when sigma is 0 so the stream position never depends on it
    noise = rng.normals(clean.shape)
    return np.clip(clean + sigma * noise, 0.0, 1.0)


def _grid(size):
    return np.mgrid[0:size, 0:size].astype(np.float64)


def gen_nested_disks(seed, size=64, contrast=0.15, noise_sigma=0.05, max_tries=10):
    """Concentric ellipses: the cup (label 2) sits strictly inside the disc (label 1).

    Background, rim and cup intensities step up by ``contrast / 2`` from a
    per-image base level, so the three classes span ``contrast`` in total.
    """
    if not 0.0 < contrast <= 1.0:
        raise ConfigError(f"contrast must lie in (0, 1], got {contrast}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = XorShift64Star(seed)
    yy, xx = _grid(size)
    for _ in range(max_tries):
        cy = rng.uniform(0.4, 0.6) * size
        cx = rng.uniform(0.4, 0.6) * size
        ay = rng.uniform(0.18, 0.3) * size
        ax = rng.uniform(0.18, 0.3) * size
        ratio = rng.uniform(0.35, 0.65)
        r2 = ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2
        disc = r2 <= 1.0
        cup = r2 <= ratio ** 2
        if cup.sum() >= 4 and (disc & ~cup).sum() >= 4:
            break
    else:
        raise ConfigError(f"could not place a non-degenerate disc/cup at size {size}")
    mask = disc.astype(np.int64) + cup
    base = (1.0 - contrast) * rng.uniform(0.45, 0.55)
    clean = base + (contrast / 2.0) * mask
    return SegSample(_add_noise(rng, clean, noise_sigma)[None], mask, seed)


def gen_curvilinear(seed, size=64, branches=4, thickness=1, contrast=0.4, noise_sigma=0.05):
    """Branching random-walk strokes (label 1) drawn with a square brush.

    A pixel is foreground when its Chebyshev distance to a rounded stroke
    point is below ``thickness``, so ``thickness=size`` fills the image.
    """
    if branches < 1 or thickness < 1:
        raise ConfigError("branches and thickness must be >= 1")
    rng = XorShift64Star(seed)
    mask = np.zeros((size, size), dtype=np.int64)
    points = [(rng.uniform(0.3, 0.7) * size, rng.uniform(0.3, 0.7) * size)]
    for b in range(branches):
        y, x = points[rng.integers(0, len(points))] if b else points[0]
        heading = rng.uniform(0.0, 2 * math.pi)
        for _ in range(size):
            heading += rng.uniform(-0.35, 0.35)
            y += math.sin(heading)
            x += math.cos(heading)
            if not (0 <= y < size and 0 <= x < size):
                break
            points.append((y, x))
    t = thickness - 1
    for y, x in points:
        r, c = int(round(y)), int(round(x))
        mask[max(r - t, 0):r + t + 1, max(c - t, 0):c + t + 1] = 1
    base = rng.uniform(0.25, 0.35)
    clean = base + contrast * mask
    return SegSample(_add_noise(rng, clean, noise_sigma)[None], mask, seed)


def gen_noisy_blob(seed, size=64, noise_sigma=0.3, contrast=0.3):
    """One or two ellipses with a low-frequency wobble on their radius, plus noise."""
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = XorShift64Star(seed)
    yy, xx = _grid(size)
    mask = np.zeros((size, size), dtype=np.int64)
    for _ in range(1 + rng.integers(0, 2)):
        cy = rng.uniform(0.3, 0.7) * size
        cx = rng.uniform(0.3, 0.7) * size
        r0 = rng.uniform(0.12, 0.22) * size
        stretch = rng.uniform(0.7, 1.3)
        harmonics = [(k, rng.uniform(0.0, 0.12), rng.uniform(0.0, 2 * math.pi)) for k in (2, 3, 4)]
        theta = np.arctan2(yy - cy, (xx - cx) * stretch)
        radius = r0 * (1.0 + sum(a * np.cos(k * theta + p) for k, a, p in harmonics))
        mask |= np.hypot(yy - cy, (xx - cx) * stretch) <= radius
    clean = 0.35 + contrast * mask
    return SegSample(_add_noise(rng, clean, noise_sigma)[None], mask, seed)


GENERATORS = {"disks": gen_nested_disks, "vessels": gen_curvilinear, "blobs": gen_noisy_blob}


def make_sample(task, seed, size=64, **params):
    try:
        gen = GENERATORS[task]
    except KeyError:
        raise ConfigError(f"unknown task {task!r}; expected one of {sorted(GENERATORS)}") from None
    return gen(seed, size, **params)


def make_dataset(task, seeds, size=64, **params):
    return [make_sample(task, s, size, **params) for s in seeds]


def split_seeds(seed, n_train, n_test):
    """Disjoint train/test seed ranges derived from one base seed."""
    if n_train < 1 or n_test < 1:
        raise DataError("train and test splits must be non-empty")
    train = range(seed, seed + n_train)
    test = range(seed + TEST_SEED_OFFSET, seed + TEST_SEED_OFFSET + n_test)
    return train, test


def dump_sample(sample, out_dir, classes):
    """Write ``img_<seed>.pgm`` (8-bit intensities) and ``lbl_<seed>.pgm`` (raw class ids)."""
    os.makedirs(out_dir, exist_ok=True)
    img = np.rint(sample.image[0] * 255.0).astype(np.uint8)
    write_pgm(os.path.join(out_dir, f"img_{sample.seed}.pgm"), img)
    write_pgm(os.path.join(out_dir, f"lbl_{sample.seed}.pgm"), sample.mask, maxval=classes - 1)
