"""Building blocks: squaring by sawtooth, products that vanish exactly, and cutoffs.

Run:  python3 demos/01_gadgets.py
"""

import numpy as np

from relu_gpc.gadgets import PHI0, build_cutoff, build_product, build_square, sawtooth_levels

rng = np.random.default_rng(0)

print("squaring x -> x^2 on [0, 1]")
x = np.linspace(0, 1, 20_001)
for tol in (1e-2, 1e-4, 1e-6):
    net = build_square(tol)
    err = np.max(np.abs(net(x[:, None])[:, 0] - x**2))
    print(f"  tol {tol:.0e}: {sawtooth_levels(tol):2d} levels, size {net.size:4d}, depth {net.depth:3d}, "
          f"sup error {err:.2e}")

# The product net is accurate to delta and returns an exact zero whenever any factor is zero.
print("\nfour-factor product")
pts = rng.uniform(-1, 1, size=(50_000, 4))
for delta in (1e-2, 1e-5):
    gadget = build_product(4, delta)
    err = np.max(np.abs(gadget.net(pts)[:, 0] - pts.prod(axis=1)))
    zeroed = pts.copy()
    zeroed[:, 2] = 0.0
    exact_zero = np.all(gadget.net(zeroed)[:, 0] == 0.0)
    print(f"  delta {delta:.0e}: size {gadget.net.size:5d}, sup error {err:.2e}, exact zeros: {exact_zero}")

cut = build_cutoff(PHI0).net
grid = np.array([-3.0, -2.0, -1.5, -1.0, 0.0, 1.0, 1.5, 2.0, 3.0])
print("\nplateau cutoff:", dict(zip(grid.tolist(), cut(grid[:, None])[:, 0].tolist())))
