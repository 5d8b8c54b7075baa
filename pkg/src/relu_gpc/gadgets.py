"""Approximate multiplication, cut-off functions and scaled monomials as ReLU nets.

Squaring on ``[0, 1]`` uses the sawtooth expansion

    t**2 ~ t - sum_{k=1}^{m} g_k(t) / 4**k,   g_k = g o ... o g (k times),

with ``g`` the hat function, error ``2**(-2m-2)``.  A pairwise product uses
``x*y = sq(|x+y|/2) - sq(|x-y|/2)``.  If either factor is exactly zero both
squaring branches receive bit-identical inputs, and the output rows subtract
matching neurons in adjacent positions, so the product is exactly ``0.0``.
Products of ``d`` factors use a balanced binary tree of such units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError
from .multiindex import MultiIndex
from .relu_core import Expr, NetworkBuilder, ReluNetwork

Terms = tuple[tuple[int, float], ...]

PHI0 = "phi0"
PHI1 = "phi1"


def sawtooth_levels(tolerance: float) -> int:
    """Smallest ``m`` with ``2**(-2m-2) <= tolerance``."""
    if not 0.0 < tolerance:
        raise ValueError("tolerance must be positive")
    return max(0, math.ceil((math.log2(1.0 / tolerance) - 2.0) / 2.0))


def _square_terms(builder: NetworkBuilder, t: Expr, levels: int) -> list[tuple[int, float]]:
    """Ordered output terms of the sawtooth approximation of ``t**2`` for ``t`` in [0, 1]."""
    a = builder.relu(t)
    if levels == 0:
        return list(a.terms)
    b = builder.relu(t - 0.5)
    terms = [(a.terms[0][0], 0.5), (b.terms[0][0], 1.0)]
    scale = 1.0
    for _ in range(1, levels):
        scale /= 4.0
        g = 2.0 * a - 4.0 * b
        a, b = builder.relu(g), builder.relu(g - 0.5)
        terms.append((a.terms[0][0], -2.0 * scale / 4.0))
        terms.append((b.terms[0][0], 4.0 * scale / 4.0))
    return terms


def _pair_terms(builder: NetworkBuilder, x: Expr, y: Expr, levels: int) -> Terms:
    """Terms of the approximate product ``x*y`` for inputs in [-1, 1]."""
    up = builder.relu(0.5 * x + 0.5 * y)
    un = builder.relu(-0.5 * x - 0.5 * y)
    vp = builder.relu(0.5 * x - 0.5 * y)
    vn = builder.relu(-0.5 * x + 0.5 * y)
    plus = _square_terms(builder, up + un, levels)
    minus = _square_terms(builder, vp + vn, levels)
    out: list[tuple[int, float]] = []
    # matching neurons adjacent: a zero factor makes every pair cancel exactly
    for (na, ca), (nb, cb) in zip(plus, minus):
        out.append((na, ca))
        out.append((nb, -cb))
    return tuple(out)


def _clipped(builder: NetworkBuilder, value: Expr) -> Expr:
    """``min(max(value, -1), 1)`` built from neurons that all vanish when value is 0."""
    p = builder.relu(value)
    n = builder.relu(-value)
    hp = builder.relu(p - 1.0)
    hn = builder.relu(n - 1.0)
    return p - hp - n + hn


def _tree_budget(n_leaves: int, delta: float) -> list[int]:
    """Sawtooth levels per tree level, splitting the error equally between levels."""
    depth = max(1, math.ceil(math.log2(n_leaves)))
    levels = []
    for k in range(1, depth + 1):
        # an error made at level k is amplified at most 2**(depth-k) times
        eps = delta / (depth * 2.0 ** (depth - k))
        levels.append(sawtooth_levels(eps / 2.0))
    return levels


def product_tree(builder: NetworkBuilder, leaves: Sequence[Expr], delta: float) -> Expr:
    """Approximate product of ``leaves`` (each in [-1, 1]) to accuracy ``delta``.

    Internal nodes are clipped back to [-1, 1]; the root is returned unclipped.
    """
    if not leaves:
        raise ValueError("need at least one factor")
    current = list(leaves)
    if len(current) == 1:
        return current[0]
    budget = _tree_budget(len(current), delta)
    for level, m in enumerate(budget):
        last_level = level == len(budget) - 1
        nxt = []
        for i in range(0, len(current) - 1, 2):
            terms = _pair_terms(builder, current[i], current[i + 1], m)
            node = Expr(terms)
            nxt.append(node if last_level else _clipped(builder, node))
        if len(current) % 2:
            nxt.append(current[-1])
        current = nxt
    return current[0]


def cutoff_expr(builder: NetworkBuilder, x: Expr, kind: str) -> Expr:
    """Exact piecewise-linear cut-off with breakpoints -2, -1, 1, 2.

    ``phi0`` is 1 on [-1, 1]; ``phi1`` is the identity there.  Both vanish
    outside [-2, 2], and the nesting below makes that vanishing exact.
    """
    p = builder.relu(x)
    n = builder.relu(-x)
    if kind == PHI0:
        excess = builder.relu(p + n - 1.0)
        return builder.relu(1.0 - excess)
    if kind == PHI1:
        hp = builder.relu(p - 1.0)
        hn = builder.relu(n - 1.0)
        return builder.relu(p - 2.0 * hp) - builder.relu(n - 2.0 * hn)
    raise ValueError(f"unknown cut-off kind {kind!r}")


@dataclass(frozen=True)
class ProductNet:
    d: int
    delta: float
    net: ReluNetwork


@dataclass(frozen=True)
class CutoffNet:
    kind: str
    net: ReluNetwork


def build_square(delta: float) -> ReluNetwork:
    """One-input net approximating ``x**2`` on [0, 1] within ``delta``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    b = NetworkBuilder(1)
    return b.build([Expr(_square_terms(b, b.input(0), sawtooth_levels(delta)))])


def build_product(d: int, delta: float) -> ProductNet:
    """Net approximating ``prod_j x_j`` on [-1, 1]^d, exactly 0 if a factor is 0."""
    if d < 2:
        raise ValueError("a product needs at least two factors")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    b = NetworkBuilder(d)
    leaves = [_clipped(b, b.input(j)) for j in range(d)]
    return ProductNet(d, delta, b.build([product_tree(b, leaves, delta)]))


def build_cutoff(kind: str) -> CutoffNet:
    b = NetworkBuilder(1)
    return CutoffNet(kind, b.build([cutoff_expr(b, b.input(0), kind)]))


def build_cutoff_product(kind: str, d: int, delta: float) -> ReluNetwork:
    """Net approximating ``prod_j phi(x_j)`` with support inside [-2, 2]^d."""
    if d < 1:
        raise ValueError("d must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    b = NetworkBuilder(d)
    leaves = [cutoff_expr(b, b.input(j), kind) for j in range(d)]
    return b.build([product_tree(b, leaves, delta)])


def monomial_expr(builder: NetworkBuilder, s: MultiIndex, ell: MultiIndex, scale: float, delta: float) -> Expr:
    """Approximation of ``prod_j (scale * y_j)**ell_j`` on ``|scale * y_j| <= 1``.

    For ``ell = 0`` this is the plateau ``phi0(scale * y_j)`` on the smallest
    active dimension of ``s`` (dimension 1 when ``s = 0``).
    """
    if not ell.le(s):
        raise DomainError(f"{ell} is not below {s}")
    if ell.is_zero():
        j = min(s.support(), default=1)
        return cutoff_expr(builder, scale * builder.input(j - 1), PHI0)
    leaves = []
    for j, e in ell.items():
        leaf = cutoff_expr(builder, scale * builder.input(j - 1), PHI1)
        leaves.extend([leaf] * e)
    return product_tree(builder, leaves, delta)


def build_monomial(s: MultiIndex, ell: MultiIndex, omega: float, delta_s: float,
                   input_dim: int | None = None) -> ReluNetwork:
    """Net in the original variables approximating ``prod_j (y_j / (2 sqrt(omega)))**ell_j``.

    Accurate to ``delta_s`` on ``[-2 sqrt(omega), 2 sqrt(omega)]^m`` and zero
    once an active coordinate leaves ``[-4 sqrt(omega), 4 sqrt(omega)]``.
    """
    if omega < 1:
        raise ValueError("omega must be at least 1")
    return build_scaled_monomial(s, ell, 1.0 / (2.0 * math.sqrt(omega)), delta_s, input_dim)


def build_scaled_monomial(s: MultiIndex, ell: MultiIndex, scale: float, delta_s: float,
                          input_dim: int | None = None) -> ReluNetwork:
    """Net approximating ``prod_j (scale * y_j)**ell_j`` where ``|scale * y_j| <= 1``."""
    if not 0.0 < delta_s < 1.0:
        raise ValueError("delta_s must lie in (0, 1)")
    dims = max(s.max_dim(), 1) if input_dim is None else input_dim
    b = NetworkBuilder(dims)
    return b.build([monomial_expr(b, s, ell, scale, delta_s)])
