"""Feed-forward ReLU networks with skip connections to every earlier layer.

Layer ``k`` (1-based) sees the concatenation ``(x, z^1, ..., z^{k-1})`` of the
input and all previous layer outputs.  Hidden layers apply the ReLU, the last
layer is affine.  Weights are stored as sparse triplets so that the size
``W`` (number of nonzero weights and biases) is a native quantity.

Row entries are kept in insertion order and evaluation accumulates them in
that order.  The gadget builders rely on this to obtain bit-exact zeros.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

_EVAL_CHUNK_BYTES = 256 * 2**20


@dataclass(frozen=True)
class Layer:
    """One affine block ``W z + b`` of a skip-connected network."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    bias: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        row_idx = np.asarray(self.row_idx, dtype=np.int64)
        col_idx = np.asarray(self.col_idx, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        bias = np.asarray(self.bias, dtype=float).reshape(-1)
        if not (row_idx.shape == col_idx.shape == values.shape):
            raise ValueError("triplet arrays must have equal length")
        if bias.shape != (self.rows,):
            raise ValueError(f"bias has length {bias.size}, expected {self.rows}")
        if row_idx.size and (row_idx.min() < 0 or row_idx.max() >= self.rows):
            raise ValueError("row index out of range")
        if col_idx.size and (col_idx.min() < 0 or col_idx.max() >= self.cols):
            raise ValueError("column index out of range")
        # stable grouping by row keeps the within-row order of the caller
        order = np.argsort(row_idx, kind="stable")
        row_idx, col_idx, values = row_idx[order], col_idx[order], values[order]
        indptr = np.zeros(self.rows + 1, dtype=np.int64)
        np.add.at(indptr, row_idx + 1, 1)
        indptr = np.cumsum(indptr)
        csr = sp.csr_matrix((values, col_idx, indptr), shape=(self.rows, self.cols))
        for name, arr in (("row_idx", row_idx), ("col_idx", col_idx), ("values", values), ("bias", bias)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_csr", csr)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values) + np.count_nonzero(self.bias))

    def row_entries(self, r: int) -> list[tuple[int, float]]:
        lo, hi = self._csr.indptr[r], self._csr.indptr[r + 1]
        return list(zip(self._csr.indices[lo:hi].tolist(), self._csr.data[lo:hi].tolist()))

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Return ``W z + b`` for a column-stacked state of shape (cols, batch)."""
        # scipy accumulates each row in stored order, starting from zero
        out = self._csr @ state
        out += self.bias[:, None]
        return out


class ReluNetwork:
    """Skip-connected ReLU network.

    Parameters
    ----------
    input_dim : int
        Number of inputs ``d``.
    layers : sequence of Layer
        Layer ``k`` must have ``d + sum_{i<k} N_i`` columns.
    """

    def __init__(self, input_dim: int, layers: Sequence[Layer]):
        if input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not layers:
            raise ValueError("a network needs at least one layer")
        cols = input_dim
        for k, layer in enumerate(layers):
            if layer.cols != cols:
                raise ValueError(f"layer {k + 1} has {layer.cols} columns, expected {cols}")
            cols += layer.rows
        self.input_dim = int(input_dim)
        self.layers: tuple[Layer, ...] = tuple(layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def size(self) -> int:
        return sum(layer.nnz for layer in self.layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].rows

    @property
    def widths(self) -> list[int]:
        return [layer.rows for layer in self.layers]

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at one point (shape ``(d,)``) or a batch (shape ``(n, d)``)."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        batch = arr.reshape(1, -1) if single else arr
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs of dimension {self.input_dim}, got shape {arr.shape}")
        total = self.input_dim + sum(self.widths[:-1])
        chunk = max(1, min(batch.shape[0], _EVAL_CHUNK_BYTES // (8 * max(total, 1))))
        outputs = [self._evaluate_chunk(batch[i:i + chunk]) for i in range(0, batch.shape[0], chunk)]
        out = np.concatenate(outputs, axis=0) if outputs else np.zeros((0, self.output_dim))
        return out[0] if single else out

    __call__ = evaluate

    def _evaluate_chunk(self, batch: np.ndarray) -> np.ndarray:
        total = self.input_dim + sum(self.widths[:-1])
        state = np.empty((total, batch.shape[0]))
        state[: self.input_dim] = batch.T
        filled = self.input_dim
        for layer in self.layers[:-1]:
            pre = layer.apply(state[:filled])
            np.maximum(pre, 0.0, out=pre)
            state[filled:filled + layer.rows] = pre
            filled += layer.rows
        return self.layers[-1].apply(state[:filled]).T

    def to_dict(self) -> dict:
        return {
            "inputDim": self.input_dim,
            "layers": [
                {
                    "rows": layer.rows,
                    "entries": [[int(r), int(c), float(v)] for r, c, v in zip(layer.row_idx, layer.col_idx, layer.values)],
                    "bias": [float(b) for b in layer.bias],
                }
                for layer in self.layers
            ],
        }

    def to_json(self) -> str:
        # repr-based float output is the shortest round-trip form
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, payload: dict) -> "ReluNetwork":
        d = int(payload["inputDim"])
        layers, cols = [], d
        for spec in payload["layers"]:
            entries = np.asarray(spec["entries"], dtype=float).reshape(-1, 3)
            layers.append(Layer(int(spec["rows"]), cols, entries[:, 0].astype(np.int64),
                                entries[:, 1].astype(np.int64), entries[:, 2], spec["bias"]))
            cols += int(spec["rows"])
        return cls(d, layers)

    @classmethod
    def from_json(cls, text: str) -> "ReluNetwork":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"ReluNetwork(input_dim={self.input_dim}, depth={self.depth}, size={self.size}, widths={self.widths})"


class Expr:
    """Ordered linear combination of network nodes plus a constant.

    Node ids below ``input_dim`` are inputs; larger ids are hidden neurons of
    a :class:`NetworkBuilder`.  Term order is preserved.
    """

    __slots__ = ("terms", "const")

    def __init__(self, terms: Iterable[tuple[int, float]] = (), const: float = 0.0):
        self.terms = tuple((int(n), float(c)) for n, c in terms)
        self.const = float(const)

    def __add__(self, other):
        if isinstance(other, Expr):
            return Expr(self.terms + other.terms, self.const + other.const)
        return Expr(self.terms, self.const + float(other))

    __radd__ = __add__

    def __neg__(self):
        return Expr(((n, -c) for n, c in self.terms), -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scale: float):
        s = float(scale)
        return Expr(((n, s * c) for n, c in self.terms), s * self.const)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Expr({list(self.terms)}, const={self.const})"


class NetworkBuilder:
    """Incremental construction of a skip-connected network from neurons.

    Each neuron is placed in the earliest layer after all nodes it reads.
    """

    def __init__(self, input_dim: int):
        self.input_dim = int(input_dim)
        self._levels: list[int] = [0] * self.input_dim
        self._rows: list[Expr] = []

    def input(self, j: int) -> Expr:
        """Expression for the 0-based input coordinate ``j``."""
        if not 0 <= j < self.input_dim:
            raise IndexError(f"input {j} out of range for dimension {self.input_dim}")
        return Expr([(j, 1.0)])

    def relu(self, expr: Expr) -> Expr:
        level = 1 + max((self._levels[n] for n, _ in expr.terms), default=0)
        node = len(self._levels)
        self._levels.append(level)
        self._rows.append(expr)
        return Expr([(node, 1.0)])

    def build(self, outputs: Sequence[Expr]) -> ReluNetwork:
        """Emit the network whose affine output layer realizes ``outputs``."""
        used = _reachable(self.input_dim, self._rows, outputs)
        hidden = [n for n in range(self.input_dim, len(self._levels)) if n in used]
        depth = 1 + max((self._levels[n] for n in hidden), default=0)
        by_level: list[list[int]] = [[] for _ in range(depth)]
        for n in hidden:
            by_level[self._levels[n]].append(n)
        column = {j: j for j in range(self.input_dim)}
        layers, cols = [], self.input_dim
        for lev in range(1, depth):
            exprs = [self._rows[n - self.input_dim] for n in by_level[lev]]
            layers.append(_layer_from_exprs(exprs, column, cols))
            for i, n in enumerate(by_level[lev]):
                column[n] = cols + i
            cols += len(by_level[lev])
        layers.append(_layer_from_exprs(list(outputs), column, cols))
        return ReluNetwork(self.input_dim, layers)


def _reachable(input_dim: int, rows: list[Expr], outputs: Sequence[Expr]) -> set[int]:
    seen: set[int] = set()
    stack = [n for e in outputs for n, _ in e.terms]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if n >= input_dim:
            stack.extend(m for m, _ in rows[n - input_dim].terms)
    return seen


def _merge_terms(terms: Iterable[tuple[int, float]]) -> list[tuple[int, float]]:
    """Combine repeated columns at their first position and drop zeros."""
    pos: dict[int, int] = {}
    merged: list[list] = []
    for col, val in terms:
        if col in pos:
            merged[pos[col]][1] += val
        else:
            pos[col] = len(merged)
            merged.append([col, val])
    return [(c, v) for c, v in merged if v != 0.0]


def _layer_from_rows(row_terms: Sequence[Sequence[tuple[int, float]]], biases: Sequence[float], cols: int) -> Layer:
    r_idx, c_idx, vals = [], [], []
    for r, terms in enumerate(row_terms):
        for c, v in _merge_terms(terms):
            r_idx.append(r)
            c_idx.append(c)
            vals.append(v)
    return Layer(len(row_terms), cols, np.array(r_idx, dtype=np.int64), np.array(c_idx, dtype=np.int64),
                 np.array(vals, dtype=float), np.array(biases, dtype=float))


def _layer_from_exprs(exprs: Sequence[Expr], column: dict[int, int], cols: int) -> Layer:
    rows = [[(column[n], c) for n, c in e.terms] for e in exprs]
    return _layer_from_rows(rows, [e.const for e in exprs], cols)


def identity_network(dim: int = 1) -> ReluNetwork:
    """Exact identity ``x = relu(x) - relu(-x)`` on each coordinate (depth 2)."""
    b = NetworkBuilder(dim)
    outs = [b.relu(b.input(j)) - b.relu(-b.input(j)) for j in range(dim)]
    return b.build(outs)


def affine_network(matrix, offset=None) -> ReluNetwork:
    """Depth-1 network computing ``A x + c``."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    c = np.zeros(a.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    rows = [[(j, a[i, j]) for j in range(a.shape[1])] for i in range(a.shape[0])]
    return ReluNetwork(a.shape[1], [_layer_from_rows(rows, c, a.shape[1])])


def _merged_layer(rows: int, cols: int, r_idx, c_idx, vals, bias) -> Layer:
    """Layer from triplets, merging repeated (row, column) pairs at their first position."""
    r_idx = np.asarray(r_idx, dtype=np.int64)
    c_idx = np.asarray(c_idx, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if r_idx.size:
        key = r_idx * cols + c_idx
        uniq, first, inverse = np.unique(key, return_index=True, return_inverse=True)
        if uniq.size < key.size:
            summed = np.bincount(inverse, weights=vals, minlength=uniq.size)
            order = np.argsort(first, kind="stable")
            pos = first[order]
            r_idx, c_idx, vals = r_idx[pos], c_idx[pos], summed[order]
        keep = vals != 0.0
        r_idx, c_idx, vals = r_idx[keep], c_idx[keep], vals[keep]
    return Layer(rows, cols, r_idx, c_idx, vals, bias)


def _column_map(net: ReluNetwork, block_start: dict[int, int]) -> np.ndarray:
    """Global column of every local column of ``net`` (inputs map to themselves)."""
    parts = [np.arange(net.input_dim)]
    for k, layer in enumerate(net.layers[:-1]):
        parts.append(block_start[k] + np.arange(layer.rows))
    return np.concatenate(parts).astype(np.int64)


def parallelize(nets: Sequence[ReluNetwork], coeffs: Sequence[float] | None = None) -> ReluNetwork:
    """Run networks side by side on a shared input.

    With ``coeffs`` the output is ``sum_j coeffs[j] * nets[j](x)`` (all nets
    must share their output dimension); without it the outputs are stacked.
    Depth is ``max_j L_j``.  Shallower nets need no passthrough because the
    final layer reads their neurons directly through skip connections.
    """
    if not nets:
        raise ValueError("need at least one network")
    d = nets[0].input_dim
    if any(n.input_dim != d for n in nets):
        raise ValueError("all networks must share the input dimension")
    if coeffs is not None:
        coeffs = [float(c) for c in coeffs]
        if len(coeffs) != len(nets):
            raise ValueError("one coefficient per network is required")
        if len({n.output_dim for n in nets}) != 1:
            raise ValueError("combination mode needs equal output dimensions")
    depth = max(n.depth for n in nets)

    starts: list[dict[int, int]] = [dict() for _ in nets]
    layer_rows = []
    cols = d
    for k in range(depth - 1):
        width = 0
        for j, net in enumerate(nets):
            if k < net.depth - 1:
                starts[j][k] = cols + width
                width += net.layers[k].rows
        layer_rows.append(width)
        cols += width
    maps = [_column_map(net, starts[j]) for j, net in enumerate(nets)]

    layers = []
    cols = d
    for k in range(depth - 1):
        r_parts, c_parts, v_parts, b_parts = [], [], [], []
        for j, net in enumerate(nets):
            if k in starts[j]:
                layer = net.layers[k]
                r_parts.append(layer.row_idx + (starts[j][k] - cols))
                c_parts.append(maps[j][layer.col_idx])
                v_parts.append(layer.values)
                b_parts.append(layer.bias)
        layers.append(Layer(layer_rows[k], cols, np.concatenate(r_parts), np.concatenate(c_parts),
                            np.concatenate(v_parts), np.concatenate(b_parts)))
        cols += layer_rows[k]

    r_parts, c_parts, v_parts = [], [], []
    if coeffs is None:
        offset, b_parts = 0, []
        for j, net in enumerate(nets):
            last = net.layers[-1]
            r_parts.append(last.row_idx + offset)
            c_parts.append(maps[j][last.col_idx])
            v_parts.append(last.values)
            b_parts.append(last.bias)
            offset += last.rows
        out_dim, out_bias = offset, np.concatenate(b_parts)
    else:
        out_dim = nets[0].output_dim
        out_bias = np.zeros(out_dim)
        for j, net in enumerate(nets):
            if coeffs[j] == 0.0:
                continue
            last = net.layers[-1]
            r_parts.append(last.row_idx)
            c_parts.append(maps[j][last.col_idx])
            v_parts.append(coeffs[j] * last.values)
            out_bias = out_bias + coeffs[j] * last.bias
    empty = [np.zeros(0, dtype=np.int64)]
    layers.append(_merged_layer(out_dim, cols, np.concatenate(r_parts or empty), np.concatenate(c_parts or empty),
                                np.concatenate(v_parts or [np.zeros(0)]), out_bias))
    return ReluNetwork(d, layers)


def concatenate(first: ReluNetwork, second: ReluNetwork) -> ReluNetwork:
    """Network computing ``second(first(x))`` with depth ``L_1 + L_2``.

    The affine output of ``first`` becomes a hidden layer holding
    ``relu(y)`` and ``relu(-y)``; ``second`` reads ``y`` as their difference.
    """
    if first.output_dim != second.input_dim:
        raise ValueError(f"output dimension {first.output_dim} does not match input dimension {second.input_dim}")
    d = first.input_dim
    layers = list(first.layers[:-1])
    cols = d + sum(first.widths[:-1])
    out = first.layers[-1]
    # rows 2r and 2r+1 hold relu(y_r) and relu(-y_r)
    layers.append(Layer(2 * out.rows, cols,
                        np.concatenate([2 * out.row_idx, 2 * out.row_idx + 1]),
                        np.concatenate([out.col_idx, out.col_idx]),
                        np.concatenate([out.values, -out.values]),
                        np.ravel(np.column_stack([out.bias, -out.bias]))))
    iface_start = cols
    cols += 2 * out.rows

    e = second.input_dim
    for layer in second.layers:
        reads_input = layer.col_idx < e
        # each input entry becomes an adjacent (+v, -v) pair on the interface neurons
        reps = np.where(reads_input, 2, 1)
        r_idx = np.repeat(layer.row_idx, reps)
        vals = np.repeat(layer.values, reps)
        c_idx = np.repeat(layer.col_idx, reps)
        first_of_pair = np.repeat(reads_input, reps)
        second_of_pair = np.zeros_like(first_of_pair)
        pos = np.cumsum(reps) - 1
        second_of_pair[pos[reads_input]] = True
        first_of_pair &= ~second_of_pair
        mapped = iface_start + 2 * e + (c_idx - e)
        mapped[first_of_pair] = iface_start + 2 * c_idx[first_of_pair]
        mapped[second_of_pair] = iface_start + 2 * c_idx[second_of_pair] + 1
        vals = np.where(second_of_pair, -vals, vals)
        layers.append(Layer(layer.rows, cols, r_idx, mapped, vals, layer.bias))
        cols += layer.rows
    return ReluNetwork(d, layers)


def concatenation_overhead(first: ReluNetwork, second: ReluNetwork) -> int:
    """Nonzeros added by :func:`concatenate` beyond ``W_1 + W_2``."""
    reads_input = sum(int(np.count_nonzero((layer.col_idx < second.input_dim) & (layer.values != 0)))
                      for layer in second.layers)
    return first.layers[-1].nnz + reads_input
