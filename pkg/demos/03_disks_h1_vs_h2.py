"""Desk-scale comparison of one-level attention and two-level masked attention.

Trains the toy network on the nested-disks task (200 train / 50 test images,
64x64, class contrast 0.15, noise 0.05) with delta=0, n=1 ("h1") and with
delta=0.5, n=2 ("h2") for a few seeds, then prints the best test mDice of
each run.  The full setting takes roughly 15-20 minutes on one core; pass
smaller numbers to get a quick look:

    python3 demos/03_disks_h1_vs_h2.py --epochs 5 --seeds 0
"""
import argparse

import numpy as np

from hanet.ablation import compare

ap = argparse.ArgumentParser()
ap.add_argument("--epochs", type=int, default=30)
ap.add_argument("--seeds", default="0,1,2")
args = ap.parse_args()

seeds = [int(s) for s in args.seeds.split(",")]
rows = compare(seeds, args.epochs, log=lambda r: print(
    f"{r['name']} seed {r['seed']}: mDice {r['mdice']:.4f} (epoch {r['best_epoch']}, {r['seconds']:.0f}s)"))
for name in ("h1", "h2"):
    scores = [r["mdice"] for r in rows if r["name"] == name]
    print(f"{name}: mean {np.mean(scores):.4f} over {len(scores)} seed(s)")
