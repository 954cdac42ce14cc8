"""Segmentation metrics: Dice, mDice, cup-to-disc ratio error, and binary stats."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def _pair(pred, true):
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {true.shape} differ in shape")
    return pred, true


def confusion(pred, true, class_id=1):
    """One-vs-rest counts for ``class_id``."""
    pred, true = _pair(pred, true)
    p, t = pred == class_id, true == class_id
    return ConfusionCounts(int((p & t).sum()), int((p & ~t).sum()),
                           int((~p & t).sum()), int((~p & ~t).sum()))


def dice(pred, true, class_id=1):
    """``2|P & T| / (|P| + |T|)``; 1.0 when the class is absent from both."""
    cc = confusion(pred, true, class_id)
    denom = 2 * cc.tp + cc.fp + cc.fn
    return 1.0 if denom == 0 else 2 * cc.tp / denom


def mdice(pred, true, class_ids):
    class_ids = list(class_ids)
    if not class_ids:
        raise ConfigError("mdice needs at least one class id")
    return float(np.mean([dice(pred, true, k) for k in class_ids]))


def disc_cup_dice(pred, true):
    """Dice of the disc (labels >= 1, cup included) and of the cup (label 2)."""
    pred, true = _pair(pred, true)
    return (dice(pred >= 1, true >= 1, True), dice(pred == 2, true == 2, True))


def _vertical_extent(region):
    rows = np.flatnonzero(np.asarray(region).any(axis=1))
    return 0 if rows.size == 0 else int(rows[-1] - rows[0] + 1)


def cup_to_disc_ratio(mask):
    """Vertical cup height over vertical disc height; 0 if either is empty."""
    disc = _vertical_extent(np.asarray(mask) >= 1)
    cup = _vertical_extent(np.asarray(mask) == 2)
    return 0.0 if disc == 0 or cup == 0 else cup / disc


def cdr_error(pred, true):
    pred, true = _pair(pred, true)
    if not (true >= 1).any():
        raise DataError("ground-truth mask has no disc pixels")
    return abs(cup_to_disc_ratio(pred) - cup_to_disc_ratio(true))


def _ratio(num, denom):
    return 1.0 if denom == 0 else num / denom


def binary_stats(pred, true):
    """ACC, F1, Se, Sp and IoU of a binary prediction (foreground = 1)."""
    cc = confusion(pred, true, 1)
    return {
        "ACC": (cc.tp + cc.tn) / cc.total,
        "F1": _ratio(2 * cc.tp, 2 * cc.tp + cc.fp + cc.fn),
        "Se": _ratio(cc.tp, cc.tp + cc.fn),
        "Sp": _ratio(cc.tn, cc.tn + cc.fp),
        "IoU": _ratio(cc.tp, cc.tp + cc.fp + cc.fn),
    }


def task_scores(task, pred, true):
    """Per-sample metric dict used by training and evaluation.

    ``mdice`` averages disc and cup Dice for ``disks`` and is the foreground
    Dice for the binary tasks.
    """
    if task == "disks":
        d, c = disc_cup_dice(pred, true)
        return {"mdice": (d + c) / 2, "dice_disc": d, "dice_cup": c, "ecdr": cdr_error(pred, true)}
    scores = {"mdice": dice(pred, true, 1)}
    scores.update(binary_stats(pred, true))
    return scores
