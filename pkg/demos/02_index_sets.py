"""How the index set grows with the threshold xi, and how it compares with the tail constant.

Run:  python3 demos/02_index_sets.py
"""

from relu_gpc.multiindex import RhoRule, WeightSequence, build_index_set, tail_constants

weights = WeightSequence("lognormal", RhoRule("power", 2.0, 2.0), 1.0, eta=12)
tc = tail_constants(weights, 4.0, dim_cap=4000, deg_cap=200)
print(f"K_q = {tc.kq:.3f}, weighted constant = {tc.kq_theta:.3f}\n")
print(f"{'xi':>6} {'|set|':>6} {'m':>3} {'m1':>3} {'|set| / (K_q xi)':>17}")
for xi in (4, 16, 64, 256, 1024):
    iset = build_index_set(weights, float(xi))
    print(f"{xi:6d} {iset.cardinality:6d} {iset.m:3d} {iset.m1:3d} {iset.cardinality / (tc.kq * xi):17.4f}")

small = build_index_set(weights, 40.0)
print("\nindices with xi = 40, lightest first:")
for s, w in zip(small, small.weights):
    print(f"  {str(s):>12}  weight {w:8.2f}")
