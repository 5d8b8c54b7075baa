"""Multi-indices, weight sequences and the index sets they induce.

A weight sequence assigns ``sigma_s >= 1`` to every finitely supported
multi-index ``s``.  The index set for a threshold ``xi > 1`` is

    Lambda(xi) = { s : sigma_s ** q <= xi },

which is downward closed whenever ``sigma`` is monotone in ``s``.  Three
product-form weight families are supported (lognormal, Jacobi, Taylor); all
of them factor over dimensions, which makes the tail constants cheap.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ConstructionError, ConvergenceError, DomainError, RangeError

# relative slack when comparing sigma**q with xi in log space
MEMBERSHIP_RTOL = 1e-12
_MAX_LOG = math.log(np.finfo(float).max)
_TAIL_CHUNK = 4096


class MultiIndex:
    """Finitely supported sequence of non-negative integers, 1-based.

    Only positive exponents are stored.  Instances are immutable and hashable.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        pairs = entries.items() if isinstance(entries, Mapping) else entries
        clean: dict[int, int] = {}
        for j, e in pairs:
            j, e = int(j), int(e)
            if j < 1:
                raise DomainError(f"dimensions are 1-based, got {j}")
            if e < 0:
                raise DomainError(f"exponents must be non-negative, got {e}")
            if e:
                clean[j] = clean.get(j, 0) + e
        self._items = tuple(sorted(clean.items()))
        self._hash = hash(self._items)

    @classmethod
    def from_dense(cls, exps: Iterable[int]) -> "MultiIndex":
        return cls((j + 1, e) for j, e in enumerate(exps))

    @classmethod
    def unit(cls, j: int, power: int = 1) -> "MultiIndex":
        return cls({j: power})

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls()

    def items(self) -> tuple[tuple[int, int], ...]:
        return self._items

    def support(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self._items)

    def get(self, j: int) -> int:
        for k, e in self._items:
            if k == j:
                return e
        return 0

    def l1(self) -> int:
        return sum(e for _, e in self._items)

    def linf(self) -> int:
        return max((e for _, e in self._items), default=0)

    def max_dim(self) -> int:
        return self._items[-1][0] if self._items else 0

    def is_zero(self) -> bool:
        return not self._items

    def to_dense(self, m: int | None = None) -> tuple[int, ...]:
        m = self.max_dim() if m is None else m
        if m < self.max_dim():
            raise DomainError(f"{self} does not fit in {m} dimensions")
        out = [0] * m
        for j, e in self._items:
            out[j - 1] = e
        return tuple(out)

    def le(self, other: "MultiIndex") -> bool:
        """Componentwise ``self <= other``."""
        return all(other.get(j) >= e for j, e in self._items)

    def add_unit(self, j: int, power: int = 1) -> "MultiIndex":
        d = dict(self._items)
        d[j] = d.get(j, 0) + power
        return MultiIndex(d)

    def lower_neighbors(self) -> list["MultiIndex"]:
        return [MultiIndex({**dict(self._items), j: e - 1}) for j, e in self._items]

    def below(self) -> Iterator["MultiIndex"]:
        """All ``ell`` with ``0 <= ell <= self``."""
        dims = self.support()
        for exps in np.ndindex(*[e + 1 for _, e in self._items]) if dims else [()]:
            yield MultiIndex(zip(dims, exps))

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiIndex) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "MultiIndex") -> bool:
        m = max(self.max_dim(), other.max_dim())
        return self.to_dense(m) < other.to_dense(m)

    def __repr__(self) -> str:
        if not self._items:
            return "MultiIndex(0)"
        return "MultiIndex(" + " + ".join(f"{e}e{j}" if e > 1 else f"e{j}" for j, e in self._items) + ")"

    def to_dict(self) -> dict:
        return {"dims": [j for j, _ in self._items], "exps": [e for _, e in self._items]}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "MultiIndex":
        return cls(zip(payload["dims"], payload["exps"]))


@dataclass(frozen=True)
class RhoRule:
    """Positive sequence ``rho_j`` given by a closed form plus explicit overrides.

    ``kind='power'`` gives ``scale * j**rate``; ``kind='geometric'`` gives
    ``scale * rate**j``.  With ``dims`` set, ``rho_j`` is infinite for
    ``j > dims`` so only finitely many dimensions are ever active.
    """

    kind: str = "power"
    scale: float = 1.0
    rate: float = 1.0
    overrides: tuple[tuple[int, float], ...] = ()
    dims: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("power", "geometric"):
            raise ConstructionError(f"unknown rho rule {self.kind!r}")
        if self.scale <= 0:
            raise ConstructionError("rho scale must be positive")
        if self.kind == "geometric" and self.rate <= 0:
            raise ConstructionError("geometric rate must be positive")

    def log(self, j) -> np.ndarray:
        j = np.asarray(j, dtype=float)
        if self.kind == "power":
            out = math.log(self.scale) + self.rate * np.log(j)
        else:
            out = math.log(self.scale) + j * math.log(self.rate)
        out = np.array(out, dtype=float)
        for k, v in self.overrides:
            out = np.where(j == k, math.log(v), out)
        if self.dims is not None:
            out = np.where(j > self.dims, np.inf, out)
        return out

    def __call__(self, j):
        return np.exp(self.log(j))

    @classmethod
    def parse(cls, text: str) -> "RhoRule":
        """Parse ``pow2``, ``power:c:r``, ``geometric:c:b`` or ``list:r1,r2,...``.

        A list fixes exactly that many active dimensions.
        """
        t = text.strip()
        if t.startswith("pow") and t[3:].replace(".", "", 1).isdigit():
            return cls("geometric", 1.0, float(t[3:]))
        head, _, rest = t.partition(":")
        if head in ("power", "geometric"):
            c, _, r = rest.partition(":")
            return cls(head, float(c), float(r))
        if head == "list":
            vals = [float(v) for v in rest.split(",") if v]
            if not vals:
                raise ConstructionError("empty rho list")
            return cls("power", 1.0, 0.0, tuple((i + 1, v) for i, v in enumerate(vals)), dims=len(vals))
        raise ConstructionError(f"cannot parse rho rule {text!r}")


LOGNORMAL = "lognormal"
JACOBI = "jacobi"
TAYLOR = "taylor"


def log_jacobi_norm_constant(k, a: float, b: float) -> np.ndarray:
    """``log c_k^{a,b}`` with ``c_k P_k^{(a,b)}`` orthonormal for the probability measure (``c_0 = 1``)."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 0.5 * (np.log(2 * k + a + b + 1) + gammaln(k + 1) + gammaln(k + a + b + 1)
                     + gammaln(a + 1) + gammaln(b + 1)
                     - gammaln(k + a + 1) - gammaln(k + b + 1) - gammaln(a + b + 2))
    return np.where(k == 0, 0.0, val)


@dataclass(frozen=True)
class WeightSequence:
    """Rule computing ``sigma_s`` for one of the three weight families."""

    kind: str
    rho: RhoRule
    q: float
    eta: int = 1
    jacobi_ab: tuple[float, float] = (0.0, 0.0)
    check_dims: int = field(default=1000, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in (LOGNORMAL, JACOBI, TAYLOR):
            raise ConstructionError(f"unknown weight kind {self.kind!r}")
        if self.q <= 0:
            raise ConstructionError("q must be positive")
        if self.kind == LOGNORMAL and self.eta < 1:
            raise ConstructionError("eta must be a positive integer")
        a, b = self.jacobi_ab
        if self.kind == JACOBI and (a <= -1 or b <= -1):
            raise DomainError("Jacobi parameters must exceed -1")
        j = np.arange(1, self.check_dims + 1)
        unit = self.log_sigma_1d(j, np.ones_like(j))
        with np.errstate(invalid="ignore"):
            drops = np.diff(unit) < -1e-12
        if np.any(drops):
            bad = int(np.argmax(drops)) + 1
            raise ConstructionError(f"unit weights must be non-decreasing in the dimension; fails at j={bad}")
        if self.kind == TAYLOR and np.any(self.rho.log(j) <= 0):
            raise ConstructionError("Taylor weights need rho_j > 1")
        if self.kind == JACOBI:
            ks = np.arange(0, 400)
            lc = log_jacobi_norm_constant(ks, a, b)
            if np.any(self.rho.log(j).min() < np.max(np.diff(lc)) - 1e-12):
                raise ConstructionError("Jacobi weights are not monotone: rho_j is below the growth of c_k")

    def log_sigma_1d(self, j, k) -> np.ndarray:
        """``log sigma`` of ``k * e_j`` (vectorized; the families are product-form)."""
        k = np.asarray(k, dtype=float)
        raw = self.rho.log(np.asarray(j))
        inactive = np.isinf(raw)
        log_rho = np.where(inactive, 0.0, raw)
        if self.kind == TAYLOR:
            out = k * log_rho
        elif self.kind == JACOBI:
            a, b = self.jacobi_ab
            out = k * log_rho - log_jacobi_norm_constant(k, a, b)
        else:
            kk = np.arange(self.eta + 1, dtype=float)
            kb, lr = np.broadcast_arrays(k, log_rho)
            kb, lr = kb[..., None], lr[..., None]
            terms = gammaln(kb + 1) - gammaln(kk + 1) - gammaln(np.maximum(kb - kk, 0) + 1) + 2 * kk * lr
            terms = np.where(kk <= kb, terms, -np.inf)
            out = 0.5 * logsumexp(terms, axis=-1)
        return np.where(inactive & (k > 0), np.inf, out)

    def log_sigma(self, s: MultiIndex) -> float:
        if s.is_zero():
            return 0.0
        dims = np.array(s.support())
        exps = np.array([e for _, e in s.items()])
        return float(np.sum(self.log_sigma_1d(dims, exps)))

    def sigma(self, s: MultiIndex) -> float:
        ls = self.log_sigma(s)
        if ls > _MAX_LOG:
            raise RangeError(f"sigma of {s} overflows (log sigma = {ls:.1f})")
        return math.exp(ls)

    def member(self, s: MultiIndex, xi: float) -> bool:
        return self.q * self.log_sigma(s) <= math.log(xi) * (1 + MEMBERSHIP_RTOL) + MEMBERSHIP_RTOL


def sigma(w: WeightSequence, s: MultiIndex) -> float:
    return w.sigma(s)


def p_theta(s: MultiIndex, theta: float, lam: float = 1.0) -> float:
    """``prod_j (1 + lam * s_j) ** theta`` over the support of ``s``."""
    if theta < 0 or lam < 0:
        raise DomainError("theta and lambda must be non-negative")
    return math.prod((1.0 + lam * e) ** theta for _, e in s.items())


@dataclass(frozen=True)
class IndexSet:
    xi: float
    q: float
    indices: tuple[MultiIndex, ...]
    weights: np.ndarray
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_pos", {s: i for i, s in enumerate(self.indices)})

    @property
    def cardinality(self) -> int:
        return len(self.indices)

    @property
    def m(self) -> int:
        return max((s.max_dim() for s in self.indices), default=0)

    @property
    def m1(self) -> int:
        return max((s.l1() for s in self.indices), default=0)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.indices)

    def __contains__(self, s: MultiIndex) -> bool:
        return s in self._pos

    def position(self, s: MultiIndex) -> int:
        return self._pos[s]

    def is_downward_closed(self) -> bool:
        return all(t in self._pos for s in self.indices for t in s.lower_neighbors())

    def to_dict(self) -> dict:
        return {"xi": self.xi, "q": self.q, "indices": [s.to_dict() for s in self.indices]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, payload: Mapping, weights: WeightSequence | None = None) -> "IndexSet":
        idx = tuple(MultiIndex.from_dict(d) for d in payload["indices"])
        sig = np.array([weights.sigma(s) for s in idx]) if weights is not None else np.full(len(idx), np.nan)
        return cls(float(payload["xi"]), float(payload["q"]), idx, sig)


def build_index_set(w: WeightSequence, xi: float, max_size: int = 2_000_000) -> IndexSet:
    """Enumerate ``{s : sigma_s**q <= xi}`` by monotone breadth-first traversal.

    Children ``s + e_j`` are scanned in increasing ``j``.  Past the last active
    dimension of ``s`` the scan stops at the first failure, since a new
    dimension contributes the factor ``sigma_{e_j}``, which grows with ``j``.
    """
    if not xi > 1:
        raise DomainError(f"xi must exceed 1, got {xi}")
    limit = math.log(xi) * (1 + MEMBERSHIP_RTOL) + MEMBERSHIP_RTOL
    cache: dict[tuple[int, int], float] = {}

    def one_dim(j: int, k: int) -> float:
        key = (j, k)
        if key not in cache:
            cache[key] = float(w.log_sigma_1d(np.array(j), np.array(k)))
        return cache[key]

    zero = MultiIndex()
    log_sig = {zero: 0.0}
    queue = deque([zero])
    while queue:
        s = queue.popleft()
        base = log_sig[s]
        exps = dict(s.items())
        top = s.max_dim()
        j = 0
        while True:
            j += 1
            k = exps.get(j, 0)
            cand = base - one_dim(j, k) + one_dim(j, k + 1) if k else base + one_dim(j, 1)
            fits = w.q * cand <= limit
            if fits:
                t = s.add_unit(j)
                if t not in log_sig:
                    log_sig[t] = cand
                    queue.append(t)
                    if len(log_sig) > max_size:
                        raise ConvergenceError(f"index set exceeds {max_size} members; weights may not be summable")
            elif j > top:
                break
    members = list(log_sig)
    m = max((s.max_dim() for s in members), default=0)
    order = sorted(members, key=lambda s: (log_sig[s], s.to_dense(m)))
    logs = np.array([log_sig[s] for s in order])
    return IndexSet(float(xi), float(w.q), tuple(order), np.exp(logs))


def brute_force_index_set(w: WeightSequence, xi: float, dim_cap: int, deg_cap: int) -> set[MultiIndex]:
    """Scan the box ``{s : s_j <= deg_cap, j <= dim_cap}`` (oracle for tests)."""
    out = set()
    for exps in np.ndindex(*([deg_cap + 1] * dim_cap)):
        s = MultiIndex.from_dense(exps)
        if w.member(s, xi):
            out.add(s)
    return out


@dataclass(frozen=True)
class TailConstants:
    kq: float
    kq_theta: float
    residual: float
    dim_cap: int
    deg_cap: int


def tail_constants(w: WeightSequence, theta: float, dim_cap: int = 2000, deg_cap: int = 400,
                   tol: float = 1e-6) -> TailConstants:
    """Truncated ``K_q = sum sigma_s^-q`` and ``K_{q,theta}``.

    The families factor over dimensions, so the box sum is a product of
    one-dimensional sums.  The residual is the larger of the relative
    contributions of the last dimension shell and the last degree shell.
    """
    if dim_cap < 1 or deg_cap < 1:
        raise DomainError("caps must be positive")
    if theta < 0:
        raise DomainError("theta must be non-negative")
    q = w.q
    # one extra dimension and degree beyond the caps estimate the omitted shells
    k = np.arange(0, deg_cap + 2)[None, :]
    log_p = theta * q * np.log1p(k)
    f_plain, f_weighted, rel = [], [], []
    for lo in range(1, dim_cap + 2, _TAIL_CHUNK):
        j = np.arange(lo, min(lo + _TAIL_CHUNK, dim_cap + 2))[:, None]
        log_terms = -q * w.log_sigma_1d(j, k)
        plain = np.exp(log_terms)
        weighted = np.exp(log_terms + log_p)
        # per-dimension factors sum_k (1+k)^{theta q} sigma_{k e_j}^{-q}; the k = 0 term is 1
        fp = plain[:, :-1].sum(axis=1)
        fw = weighted[:, :-1].sum(axis=1)
        f_plain.append(fp)
        f_weighted.append(fw)
        # relative weight of the last and the next degree in each dimension
        rel.append(np.stack([plain[:, -2] / fp, plain[:, -1] / fp, weighted[:, -2] / fw, weighted[:, -1] / fw], 1))
    f_plain = np.concatenate(f_plain)
    f_weighted = np.concatenate(f_weighted)
    rel = np.concatenate(rel)
    log_kq = float(np.sum(np.log(f_plain[:-1])))
    log_kqt = float(np.sum(np.log(f_weighted[:-1])))
    if max(log_kq, log_kqt) > _MAX_LOG:
        raise RangeError("tail constant overflows; the weights are not summable enough for this q and theta")
    kq = math.exp(log_kq)
    kq_theta = math.exp(log_kqt / (theta * q)) if theta > 0 else kq ** (1.0 / q)

    def shells(nxt: bool, row: int) -> tuple[float, float]:
        cols = [1, 3] if nxt else [0, 2]
        deg = float(np.max(rel[:row, cols].sum(axis=0)))
        dim = max(float(np.log(f_plain[row])), float(np.log(f_weighted[row])))
        return deg, dim

    deg_next, dim_next = shells(True, dim_cap)
    deg_last, dim_last = shells(False, dim_cap - 1) if dim_cap > 1 else (shells(False, dim_cap)[0], np.inf)
    residual = max(deg_next, dim_next)
    growing = deg_next > deg_last or dim_next > dim_last
    if residual >= tol or growing:
        raise ConvergenceError(
            f"tail sums not converged: next-shell contribution {residual:.3e} (tolerance {tol:.1e})"
            + ("; shell contributions are not decreasing" if growing else ""))
    return TailConstants(kq, kq_theta, residual, dim_cap, deg_cap)
