"""From a lognormal diffusion problem to a ReLU surrogate of its parameter-to-solution map.

The chaos coefficients u_s are computed by Gauss-Hermite quadrature, the
network is assembled index by index, and the error is split into its four
parts: truncation, the tail outside the emulation cube, the network error on
the cube and the network output outside it.

Run:  python3 demos/03_lognormal_pde.py
"""

from relu_gpc.assembler import DeltaPolicy, assemble, make_plan
from relu_gpc.diffusion import DiffusionProblem, gpc_coefficient, h1_coordinates, solve_batch
from relu_gpc.multiindex import RhoRule, WeightSequence, build_index_set
from relu_gpc.orthopoly import HERMITE, hermite_coeffs
from relu_gpc.verify import MonteCarlo, error_split

weights = WeightSequence("lognormal", RhoRule("power", 3.0, 1.0), 1.0, eta=6)
iset = build_index_set(weights, 12.0)
prob = DiffusionProblem(mesh_size=64, model="lognormal", active_dims=iset.m, psi_scale=0.5)
print(f"index set: {iset.cardinality} indices over {iset.m} parameters, max degree {iset.m1}")

fam = hermite_coeffs(iset.m1)
# coefficients are mapped to H^1 coordinates so that Euclidean norms are energy seminorms
coeffs = {s: h1_coordinates(prob, gpc_coefficient(prob, s, fam, 10, quad_dims=iset.m)) for s in iset}

# the weights grow too slowly for the tail constant to converge, so omega is set by hand
plan = make_plan(iset, HERMITE, omega=16, delta_policy=DeltaPolicy("floor", 1e-8))
sur = assemble(plan, coeffs)
print(f"network: size {sur.manifest['W']}, depth {sur.manifest['L']}, omega {plan.omega}")

report = error_split(sur, lambda y: h1_coordinates(prob, solve_batch(prob, y)), MonteCarlo(20_000, seed=1))
print(f"total error {report.total:.3e}")
for name, value in zip(("truncation", "cube tail", "net on cube", "net outside"), report.split):
    print(f"  {name:12s} {value:.3e}")
