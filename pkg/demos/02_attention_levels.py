"""What the hierarchical attention block does to one feature map.

With delta=0 and one level the block is plain softmax self-attention.  Raising
delta cuts weak links out of the map: those entries get exactly zero weight,
while the second level lets each position reach its neighbours' neighbours.
"""
import numpy as np

from hanet.attention import HAConfig, HAParams, ha_backward, ha_forward

rng = np.random.default_rng(0)
c, L = 4, 12
# two groups of positions with different feature directions, plus noise
x = np.zeros((c, L))
x[0, :6], x[1, 6:] = 2.0, 2.0
x += 0.3 * rng.normal(size=x.shape)
params = HAParams.init(c, 2, rng)

for cfg in (HAConfig(delta=0.0, n=1, c=c), HAConfig(delta=0.6, n=2, c=c)):
    out, bundle = ha_forward(x, params if cfg.n == 2 else HAParams.init(c, 1, rng), cfg)
    print(f"\ndelta={cfg.delta}, n={cfg.n}")
    for h, (mask, a) in enumerate(zip(bundle.masks, bundle.a_levels), start=1):
        zeros = int((a == 0).sum())
        print(f"  level {h}: {mask.edge_count():3d}/{L * L} edges, {zeros:3d} exact zeros, "
              f"rows sum to 1: {np.allclose(a.sum(axis=1), 1)}")
    print("  row 0 of the last level:", np.round(bundle.a_levels[-1][0], 3))

# masks are constants in the backward pass; gradients flow through the kept entries
grads = ha_backward(bundle, np.ones_like(out))
print("\ngradient norms:", {k: round(float(np.linalg.norm(v)), 3) for k, v in grads.items()
                            if k in ("x", "wq", "wk", "w_fuse")})
