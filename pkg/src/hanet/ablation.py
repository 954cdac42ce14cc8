"""Desk-scale h1-vs-h2 comparison on the nested-disks task."""
import time
from dataclasses import replace

from .attention import HAConfig
from .runconfig import RunConfig, run_training

H1 = HAConfig(delta=0.0, n=1)
H2 = HAConfig(delta=0.5, n=2)


def compare(seeds=(0, 1, 2), epochs=30, base=None, configs=(("h1", H1), ("h2", H2)), log=None):
    """Train every (config, seed) pair on identical data; returns a list of row dicts.

    Each row carries ``name, seed, mdice`` (best test mDice), ``best_epoch``
    and wall-clock ``seconds``.
    """
    base = base or RunConfig(task="disks", data={"contrast": 0.15, "noise_sigma": 0.05})
    rows = []
    for seed in seeds:
        for name, ha in configs:
            rc = replace(base, ha=ha, seed=seed, epochs=epochs)
            t0 = time.perf_counter()
            _, result = run_training(rc)
            row = {"name": name, "seed": seed, "mdice": result.best_mdice,
                   "best_epoch": result.best_epoch, "seconds": time.perf_counter() - t0}
            rows.append(row)
            if log is not None:
                log(row)
    return rows
