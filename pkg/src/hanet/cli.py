"""``hanet`` command line: gen-data, train, eval, sweep, export-attention.

Exit codes: 0 ok, 2 usage or configuration problem, 3 numeric failure.
"""
import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .attention import HAConfig, attention_row_image
from .data import TASK_CLASSES, dump_sample, make_dataset, make_sample
from .errors import ConfigError, DataError, DimensionError, NumericError
from .graph import from_threshold
from .imageio import write_pgm
from .runconfig import RunConfig, check_data_params, run_training
from .segnet import (SegNetConfig, attention_maps, evaluate, init_params, load_checkpoint,
                     params_from_tensors, save_checkpoint)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CHECKPOINT_NAME = "checkpoint.hant"


class UsageError(Exception):
    pass


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def parse_seeds(text):
    """``a:b`` is the half-open range [a, b); a bare integer is one seed."""
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            seeds = range(lo, hi)
        else:
            seeds = range(int(text), int(text) + 1)
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; expected a:b or an integer") from None
    if len(seeds) == 0:
        raise UsageError(f"seed range {text!r} is empty")
    return seeds


def _parse_list(text, kind, name):
    try:
        values = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: cannot parse {text!r}") from None
    if not values:
        raise UsageError(f"--{name}: empty list")
    return values


def _load_model(path):
    try:
        blob, tensors = load_checkpoint(path)
    except OSError as e:
        raise UsageError(f"cannot read checkpoint {path}: {e.strerror}") from None
    try:
        cfg = SegNetConfig.from_dict(blob["model"])
        rc = RunConfig.from_dict(blob["run"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path}: checkpoint config block is incomplete ({e})") from None
    return rc, cfg, params_from_tensors(cfg, tensors)


def train_run(rc, log=None):
    """Train and write checkpoint, metrics.csv and run.json; returns the result."""
    os.makedirs(rc.output_dir, exist_ok=True)

    def on_epoch(epoch, loss, score):
        if log:
            log(f"epoch {epoch:3d}  loss {loss:.4f}  mdice {score:.4f}")

    cfg, result = run_training(rc, on_epoch)
    # the output location is not part of the model, so checkpoints do not depend on it
    run = {k: v for k, v in rc.to_dict().items() if k != "output_dir"}
    save_checkpoint(os.path.join(rc.output_dir, CHECKPOINT_NAME), result.params,
                    {"model": cfg.to_dict(), "run": run})
    _write_csv(os.path.join(rc.output_dir, "metrics.csv"), ["epoch", "loss", "mdice"], result.history)
    test_seeds = rc.splits()[1]
    echo = {"config": rc.to_dict(), "best_epoch": result.best_epoch, "best_mdice": result.best_mdice,
            "test_seeds": [test_seeds.start, test_seeds.stop]}
    with open(os.path.join(rc.output_dir, "run.json"), "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if rc.export_attention is not None:
        exp = rc.export_attention
        export_attention(result.params, cfg, rc, exp.sample_seed, exp.pixel,
                         os.path.join(rc.output_dir, "attention"))
    return result


def cmd_train(args):
    rc = RunConfig.load(args.config)
    log = None if args.quiet else (lambda m: print(m, file=sys.stderr))
    result = train_run(rc, log)
    print(f"best mdice {result.best_mdice:.6f} at epoch {result.best_epoch}; wrote {rc.output_dir}")
    return EXIT_OK


def cmd_eval(args):
    rc, cfg, params = _load_model(args.checkpoint)
    if args.task != rc.task:
        raise UsageError(f"checkpoint was trained on task {rc.task!r}, not {args.task!r}")
    seeds = parse_seeds(args.seeds) if args.seeds else rc.splits()[1]
    samples = make_dataset(rc.task, seeds, rc.size, **rc.data)
    means, rows = evaluate(params, samples, rc.task, cfg)
    keys = list(means)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "eval.csv"), ["seed"] + keys,
               [[s.seed] + [r[k] for k in keys] for s, r in zip(samples, rows)]
               + [["mean"] + [means[k] for k in keys]])
    print(f"{'metric':<10} {'mean':>10}")
    for k in keys:
        print(f"{k:<10} {means[k]:>10.4f}")
    print(f"{len(samples)} samples; wrote {os.path.join(args.out, 'eval.csv')}")
    return EXIT_OK


def _edges_b1(rc):
    # B^1 edge count on the first test image under the seed's initial weights:
    # identical A* in every cell, so counts are comparable across deltas
    cfg = rc.model_config()
    sample = make_sample(rc.task, rc.splits()[1][0], rc.size, **rc.data)
    bundle = attention_maps(init_params(cfg, rc.seed), sample.image, cfg, replace(rc.ha, mode="masked", n=1))
    return bundle.masks[0].edge_count()


def cmd_sweep(args):
    base = RunConfig.load(args.config)
    deltas = _parse_list(args.deltas, float, "deltas")
    ns = _parse_list(args.ns, int, "ns")
    out = args.out or base.output_dir
    os.makedirs(out, exist_ok=True)
    rows = []
    for delta in deltas:
        for n in ns:
            cell = os.path.join(out, f"delta{delta:g}_n{n}")
            edges, score, status = "", "", "ok"
            try:
                rc = replace(base, ha=replace(base.ha, delta=delta, n=n), output_dir=cell)
                edges = _edges_b1(rc)
                score = train_run(rc).best_mdice
            except (ConfigError, DataError, DimensionError, NumericError) as e:
                status = f"{type(e).__name__}: {e}"
            print(f"delta={delta:g} n={n} mdice={score if score == '' else f'{score:.4f}'} "
                  f"edges_b1={edges} {status}")
            rows.append([delta, n, score, edges, status])
    _write_csv(os.path.join(out, "sweep.csv"), ["delta", "n", "mdice", "edges_b1", "status"], rows)
    return EXIT_OK


def export_attention(params, cfg, rc, sample_seed, pixel, out_dir, ha_cfg=None):
    """Write ``attn_h<k>.pgm`` per level and ``graph_b1.pbm``; returns the bundle."""
    r, c = pixel
    if not (0 <= r < cfg.size and 0 <= c < cfg.size):
        raise UsageError(f"pixel ({r}, {c}) outside the {cfg.size}x{cfg.size} image")
    ha_cfg = ha_cfg or cfg.ha
    if ha_cfg.mode != "masked":
        raise UsageError("attention export needs masked mode")
    sample = make_sample(rc.task, sample_seed, cfg.size, **rc.data)
    bundle = attention_maps(params, sample.image, cfg, ha_cfg)
    gh, gw = cfg.grid
    index = (r * gh // cfg.size) * gw + c * gw // cfg.size
    os.makedirs(out_dir, exist_ok=True)
    for h, a in enumerate(bundle.a_levels, start=1):
        write_pgm(os.path.join(out_dir, f"attn_h{h}.pgm"), attention_row_image(a, index, (gh, gw)))
    from_threshold(bundle.a_norm, ha_cfg.delta).to_pbm(os.path.join(out_dir, "graph_b1.pbm"))
    write_pgm(os.path.join(out_dir, "image.pgm"), np.rint(sample.image[0] * 255).astype(np.uint8))
    return bundle


def _parse_pixel(text):
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--pixel expects row,col; got {text!r}") from None
    return r, c


def cmd_export_attention(args):
    rc, cfg, params = _load_model(args.checkpoint)
    ha = cfg.ha
    if args.delta is not None or args.n is not None:
        ha = HAConfig(delta=ha.delta if args.delta is None else args.delta,
                      n=ha.n if args.n is None else args.n, mode=ha.mode, c=ha.c)
    export_attention(params, cfg, rc, args.sample_seed, _parse_pixel(args.pixel), args.out, ha)
    print(f"wrote {ha.n} attention map(s) and graph_b1.pbm to {args.out}")
    return EXIT_OK


def _parse_param(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise UsageError(f"--param expects key=value; got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        raise UsageError(f"--param {key}: value {value!r} is not a number") from None


def cmd_gen_data(args):
    if args.task not in TASK_CLASSES:
        raise UsageError(f"unknown task {args.task!r}; expected one of {sorted(TASK_CLASSES)}")
    params = dict(_parse_param(p) for p in args.param)
    check_data_params(args.task, params)
    seeds = parse_seeds(args.seeds)
    for s in seeds:
        dump_sample(make_sample(args.task, s, args.size, **params), args.out, TASK_CLASSES[args.task])
    print(f"wrote {len(seeds)} image/label pairs to {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hanet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration from a JSON file")
    t.add_argument("config")
    t.add_argument("--quiet", action="store_true", help="no per-epoch progress on stderr")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a seed range")
    e.add_argument("checkpoint")
    e.add_argument("--task", required=True, choices=sorted(TASK_CLASSES))
    e.add_argument("--seeds", help="a:b sample seeds (default: the checkpoint's test split)")
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train a delta x n grid")
    s.add_argument("config")
    s.add_argument("--deltas", required=True, help="comma-separated, e.g. 0,0.3,0.5")
    s.add_argument("--ns", required=True, help="comma-separated, e.g. 1,2,3")
    s.add_argument("--out", help="default: output_dir of the config")
    s.set_defaults(func=cmd_sweep)

    x = sub.add_parser("export-attention", help="dump one pixel's attention rows as PGM")
    x.add_argument("checkpoint")
    x.add_argument("--sample-seed", type=int, required=True)
    x.add_argument("--pixel", required=True, help="row,col in image coordinates")
    x.add_argument("--delta", type=float)
    x.add_argument("--n", type=int)
    x.add_argument("--out", default=".")
    x.set_defaults(func=cmd_export_attention)

    g = sub.add_parser("gen-data", help="write synthetic samples as PGM pairs")
    g.add_argument("--task", required=True)
    g.add_argument("--seeds", required=True)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--param", action="append", default=[], help="generator option key=value")
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataError, DimensionError) as e:
        print(f"hanet {args.command}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"hanet {args.command}: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
