"""Parametric 1D diffusion ``-(a(x, y) u')' = f`` on (0, 1) with P1 elements.

The coefficient is either lognormal, ``a = exp(sum_j y_j psi_j)``, or affine,
``a = abar + sum_j y_j psi_j``, with ``psi_j(x) = c * j**-r * sin(j pi x)``.
It is sampled at element midpoints; the load uses the midpoint rule per
element.  Batches of parameter vectors are solved together with a vectorized
Thomas sweep.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import comb

from .errors import BudgetError, DomainError, NumericalGuardError
from .multiindex import MultiIndex, RhoRule
from .orthopoly import HERMITE, PolyFamily, gauss_rule, tensor_rule

LOGNORMAL = "lognormal"
AFFINE = "affine"
MAX_QUAD_DIMS = 8
RESIDUAL_TOL = 1e-10


def _unit_rhs(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x)


@dataclass(frozen=True)
class DiffusionProblem:
    mesh_size: int = 100
    model: str = LOGNORMAL
    active_dims: int = 1
    psi_scale: float = 1.0
    psi_decay: float = 2.0
    abar: float = 1.0
    rhs: Callable[[np.ndarray], np.ndarray] = field(default=_unit_rhs, compare=False)
    psi_table: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.mesh_size < 2:
            raise DomainError("mesh_size must be at least 2")
        if self.model not in (LOGNORMAL, AFFINE):
            raise DomainError(f"unknown model {self.model!r}")
        if self.active_dims < 1:
            raise DomainError("active_dims must be positive")
        if self.psi_table is not None and np.shape(self.psi_table) != (self.active_dims, self.mesh_size):
            raise DomainError("psi_table must have shape (active_dims, mesh_size)")
        if self.model == AFFINE:
            margin = float(np.min(self.abar - np.abs(self.psi).sum(axis=0)))
            if margin <= 0:
                raise NumericalGuardError(f"affine coefficient is not uniformly elliptic (margin {margin:.3e})")

    @property
    def h(self) -> float:
        return 1.0 / self.mesh_size

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.mesh_size) + 0.5) * self.h

    @property
    def nodes(self) -> np.ndarray:
        """Interior nodes, where the dofs live."""
        return np.arange(1, self.mesh_size) * self.h

    @property
    def psi(self) -> np.ndarray:
        """``psi_j`` at element midpoints, shape (active_dims, mesh_size)."""
        if self.psi_table is not None:
            return np.asarray(self.psi_table, dtype=float)
        j = np.arange(1, self.active_dims + 1, dtype=float)[:, None]
        return self.psi_scale * j ** (-self.psi_decay) * np.sin(j * np.pi * self.midpoints[None, :])

    def psi_sup(self) -> np.ndarray:
        return np.abs(self.psi).max(axis=1)

    def coefficient(self, y) -> np.ndarray:
        """Midpoint values of ``a(., y)``; shape (n, mesh_size) for a batch."""
        ys = np.atleast_2d(np.asarray(y, dtype=float))
        if ys.shape[1] != self.active_dims:
            raise DomainError(f"expected {self.active_dims} parameters, got {ys.shape[1]}")
        b = ys @ self.psi
        if self.model == LOGNORMAL:
            return np.exp(b)
        a = self.abar + b
        if np.any(a <= 0):
            raise NumericalGuardError("coefficient is not positive; parameter outside the elliptic range")
        return a

    def load(self) -> np.ndarray:
        fm = self.rhs(self.midpoints)
        return 0.5 * self.h * (fm[:-1] + fm[1:])


def summability(prob: DiffusionProblem, rho: RhoRule) -> tuple[float, float]:
    """``sum_j rho_j ||psi_j||_inf`` over the active dimensions and the last term's share."""
    j = np.arange(1, prob.active_dims + 1)
    terms = rho(j) * prob.psi_sup()
    total = float(terms.sum())
    return total, float(terms[-1] / total) if total > 0 else 0.0


@dataclass(frozen=True)
class FemSolution:
    dofs: np.ndarray
    energy_norm: float
    residual: float


def _thomas(lower: np.ndarray, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve symmetric tridiagonal systems batched along axis 0.

    ``diag`` and ``rhs`` have shape (n, K); ``lower`` has shape (n, K-1).
    """
    n, k = diag.shape
    c = np.empty((n, k))
    d = np.empty((n, k))
    c[:, 0] = lower[:, 0] / diag[:, 0] if k > 1 else 0.0
    d[:, 0] = rhs[:, 0] / diag[:, 0]
    for i in range(1, k):
        denom = diag[:, i] - lower[:, i - 1] * c[:, i - 1]
        if i < k - 1:
            c[:, i] = lower[:, i] / denom
        d[:, i] = (rhs[:, i] - lower[:, i - 1] * d[:, i - 1]) / denom
    x = np.empty((n, k))
    x[:, -1] = d[:, -1]
    for i in range(k - 2, -1, -1):
        x[:, i] = d[:, i] - c[:, i] * x[:, i + 1]
    return x


def _stiffness(a: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    diag = (a[:, :-1] + a[:, 1:]) / h
    lower = -a[:, 1:-1] / h
    return lower, diag


def _apply(lower: np.ndarray, diag: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = diag * u
    out[:, 1:] += lower * u[:, :-1]
    out[:, :-1] += lower * u[:, 1:]
    return out


def solve_batch(prob: DiffusionProblem, ys) -> np.ndarray:
    """Dof vectors for a batch of parameters, shape (n, mesh_size - 1)."""
    a = prob.coefficient(ys)
    lower, diag = _stiffness(a, prob.h)
    f = np.broadcast_to(prob.load(), diag.shape)
    u = _thomas(lower, diag, f)
    res = np.linalg.norm(_apply(lower, diag, u) - f, axis=1) / np.linalg.norm(f, axis=1)
    if np.any(res > RESIDUAL_TOL):
        raise NumericalGuardError(f"linear solve residual {res.max():.2e} exceeds {RESIDUAL_TOL:.0e}")
    return u


def solve_at(prob: DiffusionProblem, y) -> FemSolution:
    a = prob.coefficient(y)
    lower, diag = _stiffness(a, prob.h)
    f = prob.load()[None, :]
    u = _thomas(lower, diag, f)
    res = float(np.linalg.norm(_apply(lower, diag, u) - f) / np.linalg.norm(f))
    if res > RESIDUAL_TOL:
        raise NumericalGuardError(f"linear solve residual {res:.2e} exceeds {RESIDUAL_TOL:.0e}")
    energy = float(np.sum(_apply(lower, diag, u) * u))
    return FemSolution(u[0], math.sqrt(energy), res)


def h1_seminorm(prob: DiffusionProblem, dofs) -> np.ndarray:
    """``|u|_{H^1}`` of P1 functions with zero boundary values (last axis = dofs)."""
    return np.sqrt(np.sum(h1_coordinates(prob, dofs) ** 2, axis=-1))


def h1_coordinates(prob: DiffusionProblem, dofs) -> np.ndarray:
    """Linear map to element slopes scaled by ``sqrt(h)``; Euclidean norms become ``|.|_{H^1}``."""
    u = np.asarray(dofs, dtype=float)
    pad = np.zeros(u.shape[:-1] + (1,))
    return np.diff(np.concatenate([pad, u, pad], axis=-1), axis=-1) / math.sqrt(prob.h)


def gpc_coefficient(prob: DiffusionProblem, s: MultiIndex, fam: PolyFamily, nodes_per_dim: int,
                    quad_dims: int | None = None) -> np.ndarray:
    """``u_s = E[u(y) P_s(y)]`` by tensor Gauss quadrature.

    Dimensions ``1..quad_dims`` (default ``max(nu_s)``, at least 1) are
    integrated; the remaining parameters are held at zero.
    """
    if s.max_dim() > prob.active_dims:
        raise DomainError(f"{s} uses dimensions beyond the {prob.active_dims} active ones")
    if nodes_per_dim < s.linf() + 1:
        raise DomainError(f"need at least {s.linf() + 1} nodes per dimension")
    dims = max(s.max_dim(), 1) if quad_dims is None else quad_dims
    if dims > MAX_QUAD_DIMS:
        raise BudgetError(f"{dims}-dimensional tensor quadrature refused; use gpc_coefficient_mc")
    dims = min(dims, prob.active_dims)
    nodes, weights = tensor_rule(gauss_rule(fam, nodes_per_dim), dims)
    ys = np.zeros((nodes.shape[0], prob.active_dims))
    ys[:, :dims] = nodes
    u = solve_batch(prob, ys)
    basis = np.ones(nodes.shape[0])
    for j, e in s.items():
        basis *= fam.eval_recurrence(e, nodes[:, j - 1])
    return (weights * basis) @ u


def sample_parameters(fam: PolyFamily, n: int, dims: int, seed: int) -> np.ndarray:
    """Draws from the family's probability measure using a counter-based generator."""
    rng = np.random.Generator(np.random.Philox(seed))
    if fam.kind == HERMITE:
        return rng.standard_normal((n, dims))
    a, b = fam.jacobi_ab
    return 2.0 * rng.beta(b + 1.0, a + 1.0, size=(n, dims)) - 1.0


def gpc_coefficient_mc(prob: DiffusionProblem, s: MultiIndex, fam: PolyFamily, n: int = 10_000,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of ``u_s`` over all active dimensions, with stderr."""
    ys = sample_parameters(fam, n, prob.active_dims, seed)
    u = solve_batch(prob, ys)
    basis = np.ones(n)
    for j, e in s.items():
        basis *= fam.eval_recurrence(e, ys[:, j - 1])
    samples = basis[:, None] * u
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass(frozen=True)
class TaylorEstimate:
    value: np.ndarray
    indicator: float
    warning: str | None = None


def _difference(prob: DiffusionProblem, s: MultiIndex, h: float) -> np.ndarray:
    """Mixed central difference ``prod_j delta_h^{s_j} u (0) / h**|s|``."""
    dims = s.support()
    stencils = []
    for _, k in s.items():
        stencils.append([((k / 2.0 - i) * h, (-1) ** i * comb(k, i, exact=True)) for i in range(k + 1)])
    pts, wts = [], []
    for combo in itertools.product(*stencils):
        y = np.zeros(prob.active_dims)
        w = 1.0
        for j, (off, c) in zip(dims, combo):
            y[j - 1] = off
            w *= c
        pts.append(y)
        wts.append(w)
    u = solve_batch(prob, np.array(pts))
    return np.asarray(wts) @ u / h ** s.l1()


def taylor_coefficient(prob: DiffusionProblem, s: MultiIndex, step: float = 0.2,
                       tol: float = 1e-6) -> TaylorEstimate:
    """``t_s = d^s u(0) / s!`` by central differences with two Richardson steps."""
    if prob.model != AFFINE:
        raise DomainError("Taylor coefficients are defined for the affine model")
    if s.l1() > 4:
        raise DomainError("finite differences are limited to total degree 4")
    if s.max_dim() > prob.active_dims:
        raise DomainError(f"{s} uses dimensions beyond the {prob.active_dims} active ones")
    fact = math.prod(math.factorial(e) for _, e in s.items())
    if s.is_zero():
        return TaylorEstimate(solve_at(prob, np.zeros(prob.active_dims)).dofs, 0.0)
    d = [_difference(prob, s, step / 2**i) for i in range(3)]
    # central differences have even error expansions in h
    r1 = [(4 * d[i + 1] - d[i]) / 3 for i in range(2)]
    best = (16 * r1[1] - r1[0]) / 15
    scale = max(float(np.max(np.abs(best))), 1e-300)
    indicator = float(np.max(np.abs(best - r1[1]))) / fact
    warn = None
    if indicator > tol * max(scale / fact, 1.0):
        warn = f"finite-difference indicator {indicator:.2e} above tolerance"
    return TaylorEstimate(best / fact, indicator, warn)


def taylor_coefficients_recursive(prob: DiffusionProblem, indices) -> dict:
    """Exact Taylor coefficients of the discrete affine problem.

    Differentiating ``(A_0 + sum_j y_j A_j) u(y) = F`` gives
    ``A_0 t_s = -sum_{j in supp s} A_j t_{s - e_j}``, solved here for every
    index in order of increasing total degree (the set must be downward closed).
    """
    if prob.model != AFFINE:
        raise DomainError("Taylor coefficients are defined for the affine model")
    lower0, diag0 = _stiffness(np.full((1, prob.mesh_size), prob.abar), prob.h)
    psi = prob.psi
    ops = [_stiffness(psi[j][None, :], prob.h) for j in range(prob.active_dims)]
    out: dict = {}
    for s in sorted(indices, key=lambda t: (t.l1(), t.to_dense(max(prob.active_dims, t.max_dim())))):
        if s.max_dim() > prob.active_dims:
            raise DomainError(f"{s} uses dimensions beyond the {prob.active_dims} active ones")
        if s.is_zero():
            rhs = prob.load()[None, :]
        else:
            rhs = np.zeros((1, prob.mesh_size - 1))
            for j in s.support():
                prev = MultiIndex({**dict(s.items()), j: s.get(j) - 1})
                if prev not in out:
                    raise DomainError(f"index set is not downward closed at {s}")
                rhs -= _apply(*ops[j - 1], out[prev][None, :])
        out[s] = _thomas(lower0, diag0, rhs)[0]
    return out


def save_coefficients(path, prob: DiffusionProblem, coeffs: dict, extra: dict | None = None) -> None:
    payload = {
        "meshSize": prob.mesh_size,
        "model": {"kind": prob.model, "activeDims": prob.active_dims, "psiScale": prob.psi_scale,
                  "psiDecay": prob.psi_decay, "abar": prob.abar},
        "indices": [s.to_dict() for s in coeffs],
        "dofVectors": [np.asarray(v, dtype=float).tolist() for v in coeffs.values()],
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_coefficients(path) -> tuple[dict, dict]:
    """Return (metadata, {MultiIndex: dof vector})."""
    with open(path) as fh:
        payload = json.load(fh)
    coeffs = {MultiIndex.from_dict(d): np.asarray(v) for d, v in zip(payload["indices"], payload["dofVectors"])}
    meta = {k: v for k, v in payload.items() if k not in ("indices", "dofVectors")}
    return meta, coeffs


def problem_from_meta(meta: dict) -> DiffusionProblem:
    model = meta["model"]
    return DiffusionProblem(int(meta["meshSize"]), model["kind"], int(model["activeDims"]),
                            float(model["psiScale"]), float(model["psiDecay"]), float(model["abar"]))
