"""From a similarity map to neighbourhood masks.

A min-max normalised map is thresholded into a graph B^1 (every node keeps
its self-loop), and boolean powers grow each node's neighbourhood one hop
at a time until the transitive closure stops changing.
"""
import numpy as np

from hanet.graph import bfs_within, bool_powers, from_threshold, transitive_closure

# a 6-position map where 0-1-2 and 3-4-5 are two chains of strong links
a_norm = np.full((6, 6), 0.1)
for i, j in [(0, 1), (1, 2), (3, 4), (4, 5)]:
    a_norm[i, j] = a_norm[j, i] = 0.9

b1 = from_threshold(a_norm, delta=0.5)
print("B^1 (edges kept at delta=0.5):")
print(b1.to_dense().astype(int))

for h, bh in enumerate(bool_powers(b1, 3), start=1):
    print(f"\nB^{h}: {bh.edge_count()} edges")
    print(bh.to_dense().astype(int))
    # every row agrees with a breadth-first search capped at h hops
    assert all(np.array_equal(bh.to_dense()[s], bfs_within(b1, s, h)) for s in range(6))

closure, h = transitive_closure(b1)
print(f"\nclosure reached at h={h}: the two chains became two complete blocks")
print(closure.to_dense().astype(int))

# lowering the threshold can only add edges
for delta in (0.95, 0.5, 0.05):
    print(f"delta={delta:<4}  |B^1| = {from_threshold(a_norm, delta).edge_count()}")
