"""Bitset vs naive boolean product at attention-map sizes.

    python3 benchmarks/bool_product.py [--size 1024] [--densities 0.01,0.1,0.5]
"""
import argparse

from hanet.bench import bench_bool_product


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--densities", default="0.01,0.1,0.5")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"{'L':>6} {'density':>8} {'bitset ms':>10} {'naive ms':>10} {'speedup':>8} equal")
    for d in (float(v) for v in args.densities.split(",")):
        r = bench_bool_product(args.size, d, args.repeats)
        print(f"{r['size']:>6} {d:>8.2f} {r['bitset_s'] * 1e3:>10.2f} {r['naive_s'] * 1e3:>10.1f} "
              f"{r['speedup']:>8.1f} {r['equal']}")


if __name__ == "__main__":
    main()
