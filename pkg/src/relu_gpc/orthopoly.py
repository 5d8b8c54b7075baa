"""Orthonormal Hermite and Jacobi polynomials in the monomial basis.

Both families are normalized against probability measures: the standard
Gaussian for Hermite, and the Beta-type density proportional to
``(1-y)^a (1+y)^b`` on [-1, 1] for Jacobi.  Row ``s`` of a coefficient table
holds the monomial coefficients of the degree-``s`` polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .errors import DomainError, NumericalGuardError
from .multiindex import MultiIndex

HERMITE = "hermite"
JACOBI = "jacobi"
MAX_DEGREE = 120


@dataclass(frozen=True)
class PolyFamily:
    """Coefficient table of an orthonormal family.

    ``coeffs[s, l]`` is the coefficient of ``y**l`` in the degree-``s`` member.
    """

    kind: str
    max_degree: int
    coeffs: np.ndarray
    jacobi_ab: tuple[float, float] = (0.0, 0.0)

    def row(self, s: int) -> np.ndarray:
        if not 0 <= s <= self.max_degree:
            raise DomainError(f"degree {s} outside table (max {self.max_degree})")
        return self.coeffs[s, : s + 1]

    def eval_table(self, s: int, y) -> np.ndarray:
        """Horner evaluation of row ``s``."""
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for c in self.row(s)[::-1]:
            out = out * y + c
        return out

    def eval_recurrence(self, s: int, y) -> np.ndarray:
        """Three-term recurrence evaluation of the degree-``s`` member."""
        if s > self.max_degree:
            raise DomainError(f"degree {s} outside table (max {self.max_degree})")
        return _recurrence_values(self, s, np.asarray(y, dtype=float))[s]

    def eval_all(self, y, degree: int) -> np.ndarray:
        """Values of degrees ``0..degree`` stacked along the first axis (recurrence)."""
        return _recurrence_values(self, degree, np.asarray(y, dtype=float))

    def recurrence(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Jacobi-matrix diagonal ``alpha_k`` and off-diagonal ``beta_k`` for ``k < n``.

        The orthonormal family satisfies
        ``y p_k = beta_{k+1} p_{k+1} + alpha_k p_k + beta_k p_{k-1}``.
        """
        k = np.arange(n, dtype=float)
        if self.kind == HERMITE:
            return np.zeros(n), np.sqrt(k[1:])
        a, b = self.jacobi_ab
        return _jacobi_recurrence(n, a, b)


def _jacobi_recurrence(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = (2 * k + a + b) * (2 * k + a + b + 2)
        alpha = np.where(denom != 0, (b * b - a * a) / denom, (b - a) / (a + b + 2))
    kk = k[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.sqrt(4 * kk * (kk + a) * (kk + b) * (kk + a + b)
                       / ((2 * kk + a + b) ** 2 * (2 * kk + a + b + 1) * (2 * kk + a + b - 1)))
    if n > 1 and abs(a + b + 1) < 1e-14:
        # 0 * inf at k = 1 when a + b = -1; use the limit
        beta[0] = math.sqrt(4 * (1 + a) * (1 + b) / ((2 + a + b) ** 2 * (3 + a + b)))
    return alpha, beta


def _recurrence_values(fam: PolyFamily, degree: int, y: np.ndarray) -> np.ndarray:
    alpha, beta = fam.recurrence(degree + 1)
    out = np.empty((degree + 1,) + y.shape)
    out[0] = 1.0
    if degree >= 1:
        out[1] = (y - alpha[0]) / beta[0]
    for k in range(1, degree):
        out[k + 1] = ((y - alpha[k]) * out[k] - beta[k - 1] * out[k - 1]) / beta[k]
    return out


def hermite_coeffs(max_degree: int) -> PolyFamily:
    """Orthonormal probabilists' Hermite polynomials ``H_s``.

    ``a_{s, s-2l} = sqrt(s!) (-1)^l / (l! (s-2l)! 2^l)``, evaluated in log space.
    """
    if not 0 <= max_degree <= MAX_DEGREE:
        raise DomainError(f"max_degree must lie in [0, {MAX_DEGREE}]")
    table = np.zeros((max_degree + 1, max_degree + 1))
    for s in range(max_degree + 1):
        for l in range(s // 2 + 1):
            log_mag = 0.5 * gammaln(s + 1) - gammaln(l + 1) - gammaln(s - 2 * l + 1) - l * math.log(2.0)
            table[s, s - 2 * l] = (-1) ** l * math.exp(log_mag)
    return PolyFamily(HERMITE, max_degree, table)


def jacobi_coeffs(a: float, b: float, max_degree: int) -> PolyFamily:
    """Orthonormal Jacobi polynomials for the probability density on [-1, 1].

    The monomial rows are generated by running the orthonormal three-term
    recurrence on coefficient vectors.  Unlike expanding the hypergeometric
    sum around ``y = 1``, this involves no large cancellations.
    """
    if a <= -1 or b <= -1:
        raise DomainError("Jacobi parameters must exceed -1")
    if not 0 <= max_degree <= MAX_DEGREE:
        raise DomainError(f"max_degree must lie in [0, {MAX_DEGREE}]")
    n = max_degree
    alpha, beta = _jacobi_recurrence(n + 1, a, b)
    table = np.zeros((n + 1, n + 1))
    table[0, 0] = 1.0
    if n >= 1:
        table[1, :2] = np.array([-alpha[0], 1.0]) / beta[0]
    for k in range(1, n):
        nxt = np.zeros(n + 1)
        nxt[1:] = table[k, :-1]
        nxt -= alpha[k] * table[k] + beta[k - 1] * table[k - 1]
        table[k + 1] = nxt / beta[k]
    return PolyFamily(JACOBI, n, table, (float(a), float(b)))


def eval_multi(fam: PolyFamily, s: MultiIndex, y) -> np.ndarray:
    """Tensor-product value ``prod_{j in supp s} P_{s_j}(y_j)``; ``y`` is (m,) or (n, m)."""
    arr = np.asarray(y, dtype=float)
    batch = arr.reshape(1, -1) if arr.ndim == 1 else arr
    if s.max_dim() > batch.shape[1]:
        raise DomainError(f"{s} needs {s.max_dim()} coordinates, got {batch.shape[1]}")
    out = np.ones(batch.shape[0])
    for j, e in s.items():
        out *= fam.eval_recurrence(e, batch[:, j - 1])
    return out[0] if arr.ndim == 1 else out


@dataclass(frozen=True)
class CoeffSum:
    total: float
    bound: float
    fitted: bool


def coeff_sum_bound(fam: PolyFamily, s: int, fit_degrees: int = 6) -> CoeffSum:
    """Absolute row sum and its reference bound.

    Hermite rows are bounded by ``sqrt(s!)``.  For Jacobi the bound is
    ``K * 6**s`` with ``K`` fitted as the largest ``6**-k`` scaled row sum
    over the first ``fit_degrees`` degrees (``fitted=True``).
    """
    total = float(np.sum(np.abs(fam.row(s))))
    if fam.kind == HERMITE:
        return CoeffSum(total, math.exp(0.5 * gammaln(s + 1)), False)
    upto = min(fit_degrees, fam.max_degree)
    k_const = max(float(np.sum(np.abs(fam.row(k)))) / 6.0**k for k in range(upto + 1))
    return CoeffSum(total, k_const * 6.0**s, True)


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray


def gauss_rule(fam_or_kind, n: int, jacobi_ab: tuple[float, float] = (0.0, 0.0)) -> QuadratureRule:
    """Golub-Welsch rule for the family's probability measure (weights sum to 1)."""
    if n < 1:
        raise DomainError("a Gauss rule needs at least one node")
    if isinstance(fam_or_kind, PolyFamily):
        kind, ab = fam_or_kind.kind, fam_or_kind.jacobi_ab
    else:
        kind, ab = fam_or_kind, tuple(jacobi_ab)
    if kind == HERMITE:
        alpha, beta = np.zeros(n), np.sqrt(np.arange(1, n, dtype=float))
    elif kind == JACOBI:
        if ab[0] <= -1 or ab[1] <= -1:
            raise DomainError("Jacobi parameters must exceed -1")
        alpha, beta = _jacobi_recurrence(n, *ab)
    else:
        raise DomainError(f"unknown family {kind!r}")
    try:
        nodes, vecs = eigh_tridiagonal(alpha, beta)
    except np.linalg.LinAlgError as exc:
        raise NumericalGuardError(f"eigen-solver failed for the {n}-point rule") from exc
    weights = vecs[0] ** 2
    weights /= weights.sum()
    return QuadratureRule(kind, nodes, weights)


def tensor_rule(rule: QuadratureRule, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product nodes of shape (n**dim, dim) and weights."""
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights
