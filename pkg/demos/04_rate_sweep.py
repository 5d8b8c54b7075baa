"""Error against network budget n for a synthetic Hermite expansion.

For each budget the threshold xi_n solves xi log xi = n; the fitted slope of
error against n / log n should sit near -1/q.

Run:  python3 demos/04_rate_sweep.py [q]
"""

import sys

from relu_gpc.sweeps import HermiteSyntheticSweep
from relu_gpc.verify import rate_sweep, xi_for_budget

q = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
scale, rate = (8.0, 1.5) if q <= 1 else (3.0, 1.0)
ns = [2**k for k in range(8, 14)]
builder = HermiteSyntheticSweep(q, scale, rate, xi_ref=1.5 * xi_for_budget(max(ns)), samples=50_000)
fit = rate_sweep(builder, ns, target=-1.0 / q)

print(f"{'n':>6} {'xi':>8} {'|set|':>6} {'W':>6} {'L':>4} {'error':>10}")
for r in fit.rows:
    print(f"{r['n']:6d} {r['xi']:8.1f} {r['cardinality']:6d} {r['W']:6d} {r['L']:4d} {r['error']:10.3e}")
print(f"\nslope {fit.slope:.3f} (target {fit.target:.3f}, R2 {fit.r2:.3f})")
