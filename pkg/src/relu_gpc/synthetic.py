"""Synthetic scalar expansions with prescribed coefficient decay.

A synthetic function is a finite orthonormal expansion ``v = sum_s v_s P_s``
over a large reference index set, so its truncation errors follow from
Parseval.  Two coefficient laws are provided.  The power law sets
``|v_s| = sigma_s**(-1 - eps)``.  The telescoping law orders the reference
indices by weight and sets ``|v_(i)|**2 = sigma_(i)**-2p - sigma_(i+1)**-2p``
with ``p = 1 + eps``, so the error of truncating at ``xi`` is exactly
``sigma**-p`` of the first index left out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembler import basis_matrix
from .errors import DomainError
from .multiindex import IndexSet, MultiIndex, WeightSequence, build_index_set
from .orthopoly import PolyFamily


@dataclass
class SyntheticExpansion:
    indices: tuple[MultiIndex, ...]
    values: np.ndarray
    log_sigma: np.ndarray
    family: PolyFamily | None
    q: float
    remainder_sq: float = 0.0

    @property
    def dim(self) -> int:
        return max((s.max_dim() for s in self.indices), default=1)

    def __call__(self, y) -> np.ndarray:
        return basis_matrix(self.family, self.indices, y) @ self.values

    def coeffs_on(self, index_set: IndexSet) -> dict:
        lookup = dict(zip(self.indices, self.values))
        missing = [s for s in index_set if s not in lookup]
        if missing:
            raise DomainError(f"{len(missing)} indices lie outside the reference set, e.g. {missing[0]}")
        return {s: lookup[s] for s in index_set}

    def truncation_error(self, xi: float, include_remainder: bool = True) -> float:
        """``||v - S_{Lambda(xi)} v||`` from Parseval."""
        outside = self.q * self.log_sigma > math.log(xi) * (1 + 1e-12) + 1e-12
        sq = float(np.sum(self.values[outside] ** 2))
        return math.sqrt(sq + (self.remainder_sq if include_remainder else 0.0))

    def weighted_norm(self) -> float:
        """``(sum_s sigma_s**2 |v_s|**2)**(1/2)`` over the reference set."""
        return math.sqrt(float(np.sum(np.exp(2 * self.log_sigma) * self.values**2)))


def power_law_expansion(w: WeightSequence, xi_ref: float, family: PolyFamily | None, eps: float = 0.5,
                        signs: int | None = None) -> SyntheticExpansion:
    """``|v_s| = sigma_s**(-1-eps)`` on ``Lambda(xi_ref)``; optional random signs from seed ``signs``."""
    iset = build_index_set(w, xi_ref)
    log_sig = np.log(iset.weights)
    vals = np.exp(-(1.0 + eps) * log_sig)
    if signs is not None:
        rng = np.random.Generator(np.random.Philox(signs))
        vals = vals * rng.choice([-1.0, 1.0], size=vals.size)
    return SyntheticExpansion(iset.indices, vals, log_sig, family, w.q)


def product_power_sum(w: WeightSequence, power: float) -> float:
    """``sum_{s} sigma_s**-power`` over all indices, for finitely many active dimensions.

    Only Taylor-type weights factor into geometric series; the dimension
    count must be finite (``rho.dims``).
    """
    if w.kind != "taylor" or w.rho.dims is None:
        raise DomainError("closed form needs Taylor weights with finitely many dimensions")
    log_rho = w.rho.log(np.arange(1, w.rho.dims + 1))
    return float(np.prod(1.0 / -np.expm1(-power * log_rho)))


def telescoping_expansion(w: WeightSequence, xi_ref: float, family: PolyFamily | None,
                          eps: float = 0.0) -> SyntheticExpansion:
    """Coefficients whose truncation error at ``xi`` is ``sigma_next**-(1+eps)``.

    Indices sharing a weight split their shell equally, so the law holds for
    every ``xi`` below ``xi_ref``.
    """
    iset = build_index_set(w, xi_ref)
    log_sig = np.log(iset.weights)
    p = 1.0 + eps
    # distinct weight levels, rounded to absorb last-bit differences of equal products
    levels, inverse = np.unique(np.round(log_sig, 12), return_inverse=True)
    nxt = np.append(levels[1:], np.inf)
    shell = np.exp(-2 * p * levels) - np.exp(-2 * p * nxt)
    counts = np.bincount(inverse)
    vals = np.sqrt(shell[inverse] / counts[inverse])
    return SyntheticExpansion(iset.indices, vals, log_sig, family, w.q)
