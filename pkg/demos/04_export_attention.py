"""Train a small model through the CLI, then look at one pixel's attention.

Writes everything under ./demo_run: the checkpoint, metrics.csv, and one PGM
per attention level for a pixel inside the cup, plus the B^1 graph as PBM.
"""
import json
import os

from hanet.cli import main

out = "demo_run"
os.makedirs(out, exist_ok=True)
config = {"task": "disks", "epochs": 5, "n_train": 40, "n_test": 10, "seed": 0,
          "ha": {"delta": 0.5, "n": 2}, "output_dir": out,
          "data": {"contrast": 0.15, "noise_sigma": 0.05}}
with open(os.path.join(out, "config.json"), "w") as fh:
    json.dump(config, fh, indent=2)

main(["train", os.path.join(out, "config.json")])
ckpt = os.path.join(out, "checkpoint.hant")
main(["eval", ckpt, "--task", "disks", "--out", out])
# the image centre sits inside the cup for most seeds
main(["export-attention", ckpt, "--sample-seed", "1000000", "--pixel", "32,32",
      "--out", os.path.join(out, "attention")])
# same pixel with the threshold off: a dense, one-level map for contrast
main(["export-attention", ckpt, "--sample-seed", "1000000", "--pixel", "32,32",
      "--delta", "0", "--n", "1", "--out", os.path.join(out, "attention_dense")])
print(sorted(os.listdir(os.path.join(out, "attention"))))
