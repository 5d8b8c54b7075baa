"""Assembly of ReLU emulators for truncated polynomial expansions.

For every index ``s`` of an index set the network ``phi_s`` approximates the
tensor polynomial ``P_s`` by a linear combination of scaled monomial nets:

    phi_s(y) = sum_{l <= s} a_l * R**|l| * phi_{s,l}(y),    R = 2 sqrt(omega),

where ``phi_{s,l}`` approximates ``prod_j (y_j / R)**l_j`` on the cube
``[-R, R]^m`` and vanishes once an active coordinate leaves ``[-2R, 2R]``.
Bounded parameter domains (Jacobi, Taylor) use ``R = 1``.  The networks of
all indices are stacked into one multi-output net, and a surrogate combines
the outputs with coefficient vectors ``v_s``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConstructionError, DomainError
from .gadgets import build_scaled_monomial
from .multiindex import IndexSet, MultiIndex, WeightSequence, tail_constants
from .orthopoly import HERMITE, JACOBI, MAX_DEGREE, PolyFamily, hermite_coeffs, jacobi_coeffs
from .relu_core import ReluNetwork, parallelize

log = logging.getLogger(__name__)

TAYLOR = "taylor"
MODES = (HERMITE, JACOBI, TAYLOR)
MIN_DELTA = 1e-300


@dataclass(frozen=True)
class DeltaPolicy:
    """How per-index accuracies are chosen.

    ``paper`` uses the value derived from the index set alone; ``floor``
    uses ``max(raw value, floor)`` so that accuracy requests stay bounded.
    """

    kind: str = "floor"
    floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.kind not in ("paper", "floor"):
            raise ConstructionError(f"unknown delta policy {self.kind!r}")
        if self.kind == "floor" and not 0.0 < self.floor < 1.0:
            raise ConstructionError("delta floor must lie in (0, 1)")

    def apply(self, log_delta: float) -> float:
        if self.kind == "floor":
            return max(math.exp(max(log_delta, math.log(MIN_DELTA))), self.floor)
        if log_delta < math.log(MIN_DELTA):
            log.warning("delta %.3e below %.0e; clamped", math.exp(max(log_delta, -745.0)), MIN_DELTA)
            return MIN_DELTA
        return math.exp(log_delta)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "floor": self.floor if self.kind == "floor" else None}

    @classmethod
    def parse(cls, text: str) -> "DeltaPolicy":
        """``paper``, ``floor`` or ``floor:<value>``."""
        head, _, val = text.partition(":")
        if head == "paper":
            return cls("paper")
        if head == "floor":
            return cls("floor", float(val) if val else 1e-6)
        raise ConstructionError(f"cannot parse delta policy {text!r}")


@dataclass(frozen=True)
class AssemblyPlan:
    index_set: IndexSet
    mode: str
    family: PolyFamily | None
    delta_policy: DeltaPolicy
    theta: float | None = None
    omega: int | None = None
    kq_theta: float | None = None

    @property
    def scale(self) -> float:
        """Half-width ``R`` of the cube on which polynomials are emulated."""
        return 2.0 * math.sqrt(self.omega) if self.mode == HERMITE else 1.0

    @property
    def support_radius(self) -> float:
        return 2.0 * self.scale

    @property
    def input_dim(self) -> int:
        return max(self.index_set.m, 1)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "xi": self.index_set.xi,
            "q": self.index_set.q,
            "theta": self.theta,
            "omega": self.omega,
            "KqTheta": self.kq_theta,
            "T": self.support_radius,
            "deltaPolicy": self.delta_policy.to_dict(),
            "jacobiAB": list(self.family.jacobi_ab) if self.mode == JACOBI else None,
        }


def make_plan(index_set: IndexSet, mode: str, *, weights: WeightSequence | None = None,
              theta: float | None = None, omega: int | None = None,
              delta_policy: DeltaPolicy | None = None, jacobi_ab: tuple[float, float] = (0.0, 0.0),
              dim_cap: int = 2000, deg_cap: int = 400, tol: float = 1e-6) -> AssemblyPlan:
    """Validate parameters and fix ``omega`` and the polynomial family.

    In Hermite mode ``theta`` defaults to ``4/q`` and ``omega`` to
    ``floor(K_{q,theta} * xi)``; an explicit ``omega`` overrides the latter.
    """
    if mode not in MODES:
        raise ConstructionError(f"unknown mode {mode!r}; expected one of {MODES}")
    policy = delta_policy or DeltaPolicy()
    m1 = index_set.m1
    if m1 > MAX_DEGREE:
        raise DomainError(f"total degree {m1} exceeds the coefficient table limit {MAX_DEGREE}")
    q, xi = index_set.q, index_set.xi
    if mode == TAYLOR:
        if q >= 2:
            raise ConstructionError("uniform-accuracy mode needs q < 2")
        return AssemblyPlan(index_set, mode, None, policy)
    if mode == JACOBI:
        return AssemblyPlan(index_set, mode, jacobi_coeffs(*jacobi_ab, max(m1, 1)), policy)

    theta = 4.0 / q if theta is None else float(theta)
    if theta < 4.0 / q - 1e-12:
        raise ConstructionError(f"theta >= 4/q is required (theta={theta}, 4/q={4.0 / q})")
    kqt = None
    if omega is None:
        if weights is None:
            raise ConstructionError("omega or the weight sequence must be given")
        kqt = tail_constants(weights, theta, dim_cap=dim_cap, deg_cap=deg_cap, tol=tol).kq_theta
        omega = max(1, math.floor(kqt * xi))
    omega = int(omega)
    if omega < max(m1, 1):
        raise ConstructionError(f"omega={omega} is below the maximal total degree m1={m1}")
    return AssemblyPlan(index_set, mode, hermite_coeffs(max(m1, 1)), policy, theta, omega, kqt)


def _log_max_coeff(fam: PolyFamily, s: MultiIndex) -> float:
    # a_l factors over dimensions, so the maximum does too
    return sum(math.log(float(np.max(np.abs(fam.row(e))))) for _, e in s.items())


def log_delta_raw(plan: AssemblyPlan, s: MultiIndex) -> float:
    """Logarithm of the accuracy requested for index ``s`` before any floor."""
    xi, q = plan.index_set.xi, plan.index_set.q
    if plan.mode == TAYLOR:
        return -(1.0 / q - 0.5) * math.log(xi)
    log_p = sum(math.log1p(e) for _, e in s.items())
    if plan.mode == HERMITE:
        inv = (1.0 / q + 0.5) * math.log(xi) + log_p + s.l1() * math.log(plan.scale)
    else:
        inv = (1.0 / q) * math.log(xi) + log_p
    return -(inv + _log_max_coeff(plan.family, s))


def delta_s(plan: AssemblyPlan, s: MultiIndex) -> float:
    """Accuracy actually used for the monomial nets of ``s``."""
    return plan.delta_policy.apply(log_delta_raw(plan, s))


def index_terms(plan: AssemblyPlan, s: MultiIndex) -> list[tuple[MultiIndex, float]]:
    """Pairs ``(l, a_l * R**|l|)`` with nonzero coefficient."""
    if plan.mode == TAYLOR:
        return [(s, 1.0)]
    out = []
    for ell in s.below():
        a = math.prod(float(plan.family.coeffs[s.get(j), ell.get(j)]) for j in s.support())
        if a != 0.0:
            out.append((ell, a * plan.scale ** ell.l1()))
    return out


def error_budget(plan: AssemblyPlan, s: MultiIndex) -> float:
    """Uniform error bound of ``phi_s`` on the emulation cube."""
    d = delta_s(plan, s)
    # one-factor monomials and the plateau are realized exactly
    return sum(abs(c) * d for ell, c in index_terms(plan, s) if ell.l1() > 1)


class _MonomialCache:
    def __init__(self):
        self._nets: dict = {}

    def get(self, s: MultiIndex, ell: MultiIndex, scale: float, delta: float, dim: int) -> ReluNetwork:
        anchor = min(s.support(), default=1) if ell.is_zero() else 0
        key = (ell, anchor, scale, delta, dim)
        if key not in self._nets:
            owner = MultiIndex({anchor: 1}) if anchor else ell
            self._nets[key] = build_scaled_monomial(owner, ell, scale, delta, dim)
        return self._nets[key]


def build_index_net(plan: AssemblyPlan, s: MultiIndex, cache: _MonomialCache | None = None) -> ReluNetwork:
    """Network ``phi_s`` on ``plan.input_dim`` inputs."""
    if s not in plan.index_set:
        raise DomainError(f"{s} is not in the index set")
    cache = cache or _MonomialCache()
    d = delta_s(plan, s)
    terms = index_terms(plan, s)
    nets = [cache.get(s, ell, 1.0 / plan.scale, d, plan.input_dim) for ell, _ in terms]
    return parallelize(nets, [c for _, c in terms])


def predicted_size(plan: AssemblyPlan) -> int:
    """Upper bound on the stacked network size, from one gadget per distinct shape."""
    sizes: dict = {}
    total = 0
    for s in plan.index_set:
        d = delta_s(plan, s)
        for ell, _ in index_terms(plan, s):
            shape = (tuple(sorted(e for _, e in ell.items())), d)
            if shape not in sizes:
                probe = MultiIndex.from_dense(shape[0]) if shape[0] else MultiIndex.unit(1)
                sizes[shape] = build_scaled_monomial(probe, MultiIndex.from_dense(shape[0]), 1.0 / plan.scale,
                                                     d, max(probe.max_dim(), 1)).size
            total += sizes[shape]
    return total


@dataclass
class GpcSurrogate:
    """Stacked index networks together with coefficient vectors."""

    plan: AssemblyPlan
    coeffs: np.ndarray
    net: ReluNetwork
    manifest: dict = field(default_factory=dict)

    @property
    def indices(self) -> tuple[MultiIndex, ...]:
        return self.plan.index_set.indices

    def index_outputs(self, y) -> np.ndarray:
        return self.net(_as_batch(y, self.plan.input_dim))

    def evaluate(self, y) -> np.ndarray:
        arr = np.asarray(y, dtype=float)
        out = self.index_outputs(arr) @ self.coeffs
        return out[0] if arr.ndim == 1 else out

    __call__ = evaluate

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=1)


def _as_batch(y, dim: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(y, dtype=float))
    if arr.shape[1] < dim:
        raise DomainError(f"need {dim} coordinates, got {arr.shape[1]}")
    return arr[:, :dim]


def coefficient_matrix(index_set: IndexSet, coeffs: dict) -> np.ndarray:
    """Rows ``v_s`` in index-set order; missing indices become zero rows."""
    vals = {s: np.atleast_1d(np.asarray(v, dtype=float)) for s, v in coeffs.items()}
    width = max((v.size for v in vals.values()), default=1)
    missing = [s for s in index_set if s not in vals]
    if missing:
        log.warning("%d indices have no coefficient and are treated as zero", len(missing))
    extra = [s for s in vals if s not in index_set]
    if extra:
        log.warning("%d coefficients lie outside the index set and are ignored", len(extra))
    out = np.zeros((len(index_set), width))
    for i, s in enumerate(index_set):
        if s in vals:
            out[i] = vals[s]
    return out


def assemble(plan: AssemblyPlan, coeffs: dict, *, budget: int | None = None, threads: int = 1) -> GpcSurrogate:
    """Build every ``phi_s``, stack them and attach the coefficients.

    ``budget`` bounds the predicted network size; exceeding it raises
    :class:`BudgetError` before any index network is built.
    """
    cache = _MonomialCache()
    if budget is not None:
        predicted = predicted_size(plan)
        if predicted > budget:
            raise BudgetError(f"predicted size {predicted} exceeds the budget {budget}")
    indices = plan.index_set.indices
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            nets = list(pool.map(lambda s: build_index_net(plan, s, cache), indices))
    else:
        nets = [build_index_net(plan, s, cache) for s in indices]
    stacked = parallelize(nets)
    per_index = []
    for s, net in zip(indices, nets):
        lp = log_delta_raw(plan, s)
        per_index.append({"s": s.to_dict(), "W_s": net.size, "L_s": net.depth,
                          "delta_s_raw": math.exp(lp) if lp > -745 else 0.0,
                          "log_delta_s_raw": lp, "delta_s_applied": delta_s(plan, s)})
    iset = plan.index_set
    manifest = {**plan.to_dict(), "m": iset.m, "m1": iset.m1, "cardinality": iset.cardinality,
                "W": stacked.size, "L": stacked.depth, "sumW": sum(n.size for n in nets), "perIndex": per_index}
    manifest["hash"] = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()[:16]
    return GpcSurrogate(plan, coefficient_matrix(iset, coeffs), stacked, manifest)


def basis_matrix(fam: PolyFamily | None, indices, y) -> np.ndarray:
    """Values ``P_s(y)`` for all indices, shape ``(n, len(indices))``.

    ``fam=None`` selects plain monomials ``y**s``.
    """
    indices = list(indices)
    batch = np.atleast_2d(np.asarray(y, dtype=float))
    m = max((s.max_dim() for s in indices), default=0)
    if batch.shape[1] < m:
        raise DomainError(f"need {m} coordinates, got {batch.shape[1]}")
    max_deg = {}
    for s in indices:
        for j, e in s.items():
            max_deg[j] = max(max_deg.get(j, 0), e)
    tables = {}
    for j, k in max_deg.items():
        col = batch[:, j - 1]
        tables[j] = col[None, :] ** np.arange(k + 1)[:, None] if fam is None else fam.eval_all(col, k)
    out = np.ones((batch.shape[0], len(indices)))
    for i, s in enumerate(indices):
        for j, e in s.items():
            out[:, i] *= tables[j][e]
    return out


def truncate(coeffs: dict, y, fam: PolyFamily | None) -> np.ndarray:
    """Exact polynomial truncation ``sum_s v_s P_s(y)``."""
    indices = list(coeffs)
    arr = np.asarray(y, dtype=float)
    mat = np.array([np.atleast_1d(np.asarray(coeffs[s], dtype=float)) for s in indices])
    out = basis_matrix(fam, indices, arr) @ mat
    return out[0] if arr.ndim == 1 else out
