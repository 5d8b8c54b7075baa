"""Error measurement, error splitting and rate fits.

Norms are taken with respect to the standard Gaussian measure, the Jacobi
probability measure on [-1, 1], or the sup over [-1, 1]^m.  Expectations
are computed with tensor Gauss rules (at most six dimensions) or Monte Carlo
sampling from a counter-based generator, so the result depends only on the
seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import log_ndtr

from .assembler import basis_matrix
from .errors import DomainError
from .multiindex import MultiIndex
from .orthopoly import HERMITE, JACOBI, gauss_rule, hermite_coeffs, tensor_rule

GAUSSIAN = "gaussian"
JACOBI_NORM = "jacobi"
SUP = "sup"
MAX_QUAD_DIMS = 6


@dataclass(frozen=True)
class Quadrature:
    nodes: int = 20
    jacobi_ab: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {"kind": "quadrature", "nodes": self.nodes}


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = 100_000
    seed: int = 0
    jacobi_ab: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {"kind": "montecarlo", "samples": self.samples, "seed": self.seed}


def draw(norm: str, n: int, m: int, seed: int, jacobi_ab=(0.0, 0.0)) -> np.ndarray:
    """``n`` samples in ``m`` dimensions from the measure of ``norm``."""
    rng = np.random.Generator(np.random.Philox(seed))
    if norm == GAUSSIAN:
        return rng.standard_normal((n, m))
    if norm == JACOBI_NORM:
        a, b = jacobi_ab
        return 2.0 * rng.beta(b + 1.0, a + 1.0, size=(n, m)) - 1.0
    if norm == SUP:
        return rng.uniform(-1.0, 1.0, size=(n, m))
    raise DomainError(f"unknown norm {norm!r}")


def sample_points(norm: str, m: int, method) -> tuple[np.ndarray, np.ndarray | None]:
    """Evaluation points and quadrature weights (``None`` for sampling)."""
    if isinstance(method, Quadrature):
        if norm == SUP:
            raise DomainError("the sup norm is estimated by sampling")
        if m > MAX_QUAD_DIMS:
            raise DomainError(f"tensor quadrature is limited to {MAX_QUAD_DIMS} dimensions, got {m}")
        rule = gauss_rule(HERMITE if norm == GAUSSIAN else JACOBI, method.nodes, method.jacobi_ab)
        return tensor_rule(rule, m)
    if isinstance(method, MonteCarlo):
        return draw(norm, method.samples, m, method.seed, method.jacobi_ab), None
    raise DomainError(f"unknown method {method!r}")


def _sq_norms(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v * v if v.ndim == 1 else np.sum(v * v, axis=1)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def norm_from_samples(sq: np.ndarray, weights: np.ndarray | None) -> Estimate:
    """Root of a mean of squared norms; stderr by the delta method for sampling."""
    if weights is not None:
        return Estimate(math.sqrt(max(float(weights @ sq), 0.0)), 0.0)
    mean = float(sq.mean())
    if mean == 0.0:
        return Estimate(0.0, 0.0)
    se_mean = float(sq.std(ddof=1)) / math.sqrt(sq.size)
    return Estimate(math.sqrt(mean), se_mean / (2.0 * math.sqrt(mean)))


def l2_error(f: Callable, g: Callable, m: int, method=None, norm: str = GAUSSIAN) -> Estimate:
    """``||f - g||`` in ``L2`` of the chosen measure; ``sup`` gives a sampled maximum."""
    method = method or MonteCarlo()
    y, w = sample_points(norm, m, method)
    diff = np.asarray(f(y), dtype=float) - np.asarray(g(y), dtype=float)
    sq = _sq_norms(diff)
    if norm == SUP:
        return Estimate(math.sqrt(float(sq.max())), 0.0)
    return norm_from_samples(sq, w)


def _log_tail_1d(k: int, radius: float) -> float:
    """``log int_{|y| > radius} H_k(y)^2 dgamma(y)`` for the orthonormal Hermite ``H_k``."""
    fam = hermite_coeffs(max(k, 1))

    # y = radius + u; the Gaussian factor exp(-radius*u - u^2/2) is kept separately
    def integrand(u: float) -> float:
        return float(fam.eval_table(k, radius + u)) ** 2 * math.exp(-radius * u - 0.5 * u * u)

    val, _ = quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    log_density = -0.5 * radius * radius - 0.5 * math.log(2.0 * math.pi)
    return math.log(2.0) + log_density + math.log(val)


def tail_norm(s: MultiIndex, omega: float, m: int | None = None) -> float:
    """``||H_s||`` in ``L2(gamma)`` restricted to the complement of ``[-2 sqrt(omega), 2 sqrt(omega)]^m``.

    The complement of the cube is a union of slabs; with one-dimensional tail
    masses ``t_j`` its squared norm is ``1 - prod_j (1 - t_j)``.
    """
    if s.l1() > omega:
        raise DomainError("the total degree must not exceed omega")
    m = s.max_dim() if m is None else m
    if m < max(s.max_dim(), 1):
        raise DomainError(f"{s} needs at least {max(s.max_dim(), 1)} dimensions")
    radius = 2.0 * math.sqrt(omega)
    log_keep = 0.0
    for j in range(1, m + 1):
        k = s.get(j)
        log_t = _log_tail_1d(k, radius) if k else math.log(2.0) + float(log_ndtr(-radius))
        log_keep += math.log1p(-math.exp(log_t))
    return math.sqrt(-math.expm1(log_keep))


@dataclass(frozen=True)
class ErrorReport:
    total: float
    truncation: float
    cube_tail: float
    net_on_cube: float
    net_outside_cube: float
    stderr: dict = field(default_factory=dict)
    method: dict = field(default_factory=dict)
    norm: str = GAUSSIAN

    @property
    def split(self) -> tuple[float, float, float, float]:
        return (self.truncation, self.cube_tail, self.net_on_cube, self.net_outside_cube)

    def to_dict(self) -> dict:
        return {"total": self.total, "truncation": self.truncation, "cubeTail": self.cube_tail,
                "netOnCube": self.net_on_cube, "netOutsideCube": self.net_outside_cube,
                "stderr": self.stderr, "method": self.method, "norm": self.norm}


def error_split(surrogate, reference: Callable, method=None, norm: str | None = None,
                dim: int | None = None) -> ErrorReport:
    """Total error of a surrogate and the four parts of its triangle-inequality split.

    With ``S`` the truncated expansion and ``B`` the emulation cube:
    truncation ``||v - S v||``, cube tail ``||S v 1_{B^c}||``, network error on
    the cube ``||(S v - Phi v) 1_B||`` and ``||Phi v 1_{B^c}||``.  All parts
    use the same evaluation points, drawn in ``dim`` dimensions (default: the
    surrogate's input dimension) so that references may depend on more
    parameters than the surrogate.
    """
    plan = surrogate.plan
    method = method or MonteCarlo()
    norm = norm or {HERMITE: GAUSSIAN, JACOBI: JACOBI_NORM}.get(plan.mode, SUP)
    m = max(plan.input_dim, dim or 0)
    y, w = sample_points(norm, m, method)
    v = np.asarray(reference(y), dtype=float).reshape(y.shape[0], -1)
    sv = basis_matrix(plan.family, surrogate.indices, y) @ surrogate.coeffs
    phi = surrogate.evaluate(y)
    if plan.mode == HERMITE:
        inside = np.all(np.abs(y[:, :plan.input_dim]) <= plan.scale, axis=1)
    else:
        inside = np.ones(y.shape[0], dtype=bool)
    parts = {
        "total": _sq_norms(v - phi),
        "truncation": _sq_norms(v - sv),
        "cube_tail": _sq_norms(sv) * ~inside,
        "net_on_cube": _sq_norms(sv - phi) * inside,
        "net_outside_cube": _sq_norms(phi) * ~inside,
    }
    if norm == SUP:
        vals = {k: math.sqrt(float(sq.max())) for k, sq in parts.items()}
        errs = {k: 0.0 for k in parts}
    else:
        est = {k: norm_from_samples(sq, w) for k, sq in parts.items()}
        vals = {k: e.value for k, e in est.items()}
        errs = {k: e.stderr for k, e in est.items()}
    return ErrorReport(stderr=errs, method=method.to_dict(), norm=norm, **vals)


def xi_for_budget(n: float, c: float = 1.0) -> float:
    """Largest ``xi > 1`` with ``c * xi * log(xi) <= n``."""
    if n <= 0 or c <= 0:
        raise DomainError("n and c must be positive")
    hi = max(2.0, n / c + 2.0)
    return float(brentq(lambda x: c * x * math.log(x) - n, 1.0, hi, xtol=1e-12, rtol=1e-14))


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    r2: float


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> Fit:
    """Least-squares line through ``(log x, log y)``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return linear_fit(lx, ly)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Fit:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    return Fit(float(slope), float(intercept), 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0)


@dataclass
class RateFit:
    rows: list[dict]
    slope: float
    r2: float
    target: float
    tolerance: float
    constant: float

    @property
    def within(self) -> bool:
        return abs(self.slope - self.target) <= self.tolerance

    def write_csv(self, path, config_hash: str = "") -> None:
        cols = ["n", "xi", "m", "m1", "cardinality", "W", "L", "error", "stderr",
                "truncation", "cube_tail", "net_on_cube", "net_outside_cube"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# config {config_hash} constant {self.constant} target {self.target} "
                     f"slope {self.slope:.6f} r2 {self.r2:.6f}\n")
            writer = csv.DictWriter(fh, fieldnames=cols + ["slope"], extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({**{c: row.get(c, "") for c in cols}, "slope": f"{self.slope:.6f}"})


def rate_sweep(builder: Callable[[int, float], dict], ns: Sequence[int], target: float,
               tolerance: float = 0.3, constant: float = 1.0) -> RateFit:
    """Run ``builder(n, xi_n)`` for each budget and fit error against ``n / log n``.

    ``builder`` returns a dict with at least ``error``; other keys (``W``,
    ``L``, ``m``, ...) are copied into the rows.
    """
    ns = [int(n) for n in ns]
    if len(ns) < 4:
        raise DomainError("a rate fit needs at least four points")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("budgets must be increasing")
    rows = []
    for n in ns:
        xi = xi_for_budget(n, constant)
        row = {"n": n, "xi": xi, **builder(n, xi)}
        rows.append(row)
    x = [n / math.log(n) for n in ns]
    fit = loglog_fit(x, [r["error"] for r in rows])
    return RateFit(rows, fit.slope, fit.r2, target, tolerance, constant)
