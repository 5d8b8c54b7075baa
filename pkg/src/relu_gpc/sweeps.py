"""End-to-end sweep builders: one network and one error measurement per budget ``n``.

Each builder maps ``(n, xi)`` to a row with the network size and depth, the
index-set geometry and the measured error.  They are meant for
:func:`relu_gpc.verify.rate_sweep`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembler import TAYLOR, DeltaPolicy, assemble, make_plan
from .diffusion import DiffusionProblem, h1_seminorm, solve_batch, taylor_coefficients_recursive
from .multiindex import RhoRule, WeightSequence, build_index_set, tail_constants
from .orthopoly import HERMITE, hermite_coeffs
from .synthetic import SyntheticExpansion, telescoping_expansion
from .verify import MonteCarlo, error_split


def _geometry(surrogate) -> dict:
    man = surrogate.manifest
    return {"m": man["m"], "m1": man["m1"], "cardinality": man["cardinality"], "W": man["W"], "L": man["L"]}


@dataclass
class HermiteSyntheticSweep:
    """Hermite emulation of a telescoping synthetic function.

    The weights are of product type with ``rho_j = scale * j**rate``.  The
    reference expansion is built once at ``xi_ref``; every sweep point must
    have ``xi <= xi_ref``.
    """

    q: float
    rho_scale: float
    rho_rate: float
    xi_ref: float
    eps: float = 0.0
    samples: int = 100_000
    seed: int = 0
    delta_policy: DeltaPolicy = field(default_factory=lambda: DeltaPolicy("floor", 1e-12))
    dim_cap: int = 40_000
    deg_cap: int = 60
    budget: int | None = None
    threads: int = 1

    def __post_init__(self) -> None:
        self.weights = WeightSequence("taylor", RhoRule("power", self.rho_scale, self.rho_rate), self.q)
        self.truth: SyntheticExpansion = telescoping_expansion(
            self.weights, self.xi_ref, hermite_coeffs(self._ref_degree()), self.eps)
        self.kq_theta = tail_constants(self.weights, 4.0 / self.q, dim_cap=self.dim_cap,
                                       deg_cap=self.deg_cap).kq_theta

    def _ref_degree(self) -> int:
        return max(build_index_set(self.weights, self.xi_ref).m1, 1)

    def __call__(self, n: int, xi: float) -> dict:
        if xi > self.xi_ref:
            raise ValueError(f"xi={xi:.1f} exceeds the reference threshold {self.xi_ref}")
        iset = build_index_set(self.weights, xi)
        plan = make_plan(iset, HERMITE, omega=max(1, math.floor(self.kq_theta * xi)),
                         theta=4.0 / self.q, delta_policy=self.delta_policy)
        sur = assemble(plan, self.truth.coeffs_on(iset), budget=self.budget, threads=self.threads)
        rep = error_split(sur, self.truth, MonteCarlo(self.samples, self.seed), dim=self.truth.dim)
        return {**_geometry(sur), "omega": plan.omega, "error": rep.total, "stderr": rep.stderr["total"],
                "truncation": rep.truncation, "cube_tail": rep.cube_tail, "net_on_cube": rep.net_on_cube,
                "net_outside_cube": rep.net_outside_cube, "exact_truncation": self.truth.truncation_error(xi)}


@dataclass
class TaylorAffineSweep:
    """Uniform-accuracy emulation of an affine diffusion solution.

    Taylor coefficients come from the exact recursion of the discrete
    problem; the error is the largest ``H^1`` seminorm of ``u(y) - Phi u(y)``
    over a tensor grid of parameters in ``[-1, 1]^dims``.
    """

    q: float = 1.0
    rho: float = 2.0
    dims: int = 1
    mesh_size: int = 64
    psi_scale: float = 0.1
    psi_decay: float = 2.0
    grid: int = 1001
    threads: int = 1

    def __post_init__(self) -> None:
        self.problem = DiffusionProblem(self.mesh_size, "affine", self.dims, self.psi_scale, self.psi_decay)
        self.weights = WeightSequence("taylor", RhoRule("power", self.rho, 1.0, dims=self.dims), self.q)
        axes = [np.linspace(-1.0, 1.0, self.grid)] * self.dims
        self.points = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        self.exact = solve_batch(self.problem, self.points)
        self._coeffs: dict = {}

    def __call__(self, n: int, xi: float) -> dict:
        iset = build_index_set(self.weights, xi)
        if iset.m > self.dims:
            raise ValueError(f"index set uses {iset.m} dimensions but the model has {self.dims}")
        if any(s not in self._coeffs for s in iset):
            self._coeffs.update(taylor_coefficients_recursive(self.problem, list(iset)))
        plan = make_plan(iset, TAYLOR)
        sur = assemble(plan, {s: self._coeffs[s] for s in iset}, threads=self.threads)
        approx = sur(self.points[:, :plan.input_dim])
        err = h1_seminorm(self.problem, self.exact - approx)
        delta = math.exp(-(1.0 / self.q - 0.5) * math.log(xi))
        return {**_geometry(sur), "error": float(err.max()), "stderr": 0.0, "delta": delta}
