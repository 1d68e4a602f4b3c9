"""Reverse-mode autodiff over dense 2-D float64 matrices.

Two structures exist: `Tensor` (dense, optionally carrying a gradient) and
`SparseMatrix` (fixed sparse structure, values are constants). Every
differentiable operation records a backward closure on its output.
`backward()` replays the recording in reverse topological order; gradients
accumulate into `.grad` across calls until explicitly zeroed, which the
multi-term training objective relies on.

Single-threaded by design: tensors are never mutated after creation except
by the optimizer, and one training step owns the whole graph.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class DomainError(ValueError):
    """A value lies outside an operation's numeric domain."""


# Test-only fault injection: name of an op whose backward pass is perturbed.
_GRAD_FAULT: str | None = None


def set_gradient_fault(op_name: str | None) -> None:
    """Perturb the backward pass of the named op (test-only hook).

    Used by the selftest fault-injection check to prove the gradient suite
    can fail; never enable in real runs.
    """
    global _GRAD_FAULT
    _GRAD_FAULT = op_name


def _fault(name: str) -> float:
    return 1.001 if _GRAD_FAULT == name else 1.0


def _as_matrix(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
    return arr


class Tensor:
    """Dense rows x cols float64 matrix with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_matrix(data)
        if not np.isfinite(arr).all():
            raise DomainError("tensor constructed from non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @classmethod
    def zeros(cls, rows: int, cols: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros((rows, cols)), requires_grad=requires_grad)

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Tensor":
        return cls(np.full((rows, cols), float(value)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class SparseMatrix:
    """Sparse matrix with unique (row, col) entries; values are constants.

    Gradients never flow into a SparseMatrix: it holds graph structure
    (adjacency, incidence) fixed before training starts.
    """

    __slots__ = ("rows", "cols", "csr")

    def __init__(self, rows: int, cols: int, entries: Iterable[tuple[int, int, float]]):
        ent = list(entries)
        ri = np.fromiter((e[0] for e in ent), dtype=np.int64, count=len(ent))
        ci = np.fromiter((e[1] for e in ent), dtype=np.int64, count=len(ent))
        vals = np.fromiter((e[2] for e in ent), dtype=np.float64, count=len(ent))
        self._init_from(rows, cols, ri, ci, vals)

    @classmethod
    def from_arrays(cls, rows: int, cols: int, row_idx, col_idx, values) -> "SparseMatrix":
        out = cls.__new__(cls)
        out._init_from(
            rows,
            cols,
            np.asarray(row_idx, dtype=np.int64),
            np.asarray(col_idx, dtype=np.int64),
            np.asarray(values, dtype=np.float64),
        )
        return out

    def _init_from(self, rows, cols, ri, ci, vals):
        if rows < 0 or cols < 0:
            raise ShapeError("sparse dimensions must be nonnegative")
        if len(ri):
            if ri.min() < 0 or ri.max() >= rows:
                raise ShapeError(f"sparse row index out of range for {rows}x{cols}")
            if ci.min() < 0 or ci.max() >= cols:
                raise ShapeError(f"sparse col index out of range for {rows}x{cols}")
            keys = ri * cols + ci
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate (row, col) entry in sparse matrix")
        if not np.isfinite(vals).all():
            raise DomainError("sparse matrix entries must be finite")
        self.rows = int(rows)
        self.cols = int(cols)
        self.csr = sp.csr_matrix((vals, (ri, ci)), shape=(rows, cols))

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    def entries(self) -> list[tuple[int, int, float]]:
        coo = self.csr.tocoo()
        return [(int(r), int(c), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def transpose(self) -> "SparseMatrix":
        coo = self.csr.tocoo()
        return SparseMatrix.from_arrays(self.cols, self.rows, coo.col, coo.row, coo.data)

    def __repr__(self) -> str:
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


# ---------------------------------------------------------------------------
# graph recording / backward


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _send(scratch: dict[int, np.ndarray], t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    key = id(t)
    prev = scratch.get(key)
    scratch[key] = np.array(g, dtype=np.float64) if prev is None else prev + g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into t.grad for every tensor feeding `loss`.

    Repeated calls without zeroing add another copy of the gradients.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 scalar, got shape {loss.shape}")
    if loss._backward is None:
        raise ValueError("backward target was not produced by a recorded operation")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))

    scratch: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = scratch.get(id(node))
        if g is None:
            continue
        if node._backward is not None:
            node._backward(g, scratch)
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        node.grad += g


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# shape helpers


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for ax in (0, 1):
        if shape[ax] == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _domain_check(op: str, ok: np.ndarray, x: Tensor) -> None:
    if not ok.all():
        r, c = np.argwhere(~ok)[0]
        raise DomainError(f"{op}: value {x.data[r, c]!r} out of domain at index ({r}, {c})")


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)

    def bw(g, scr):
        _send(scr, a, g)
        _send(scr, b, g)

    return _result(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)

    def bw(g, scr):
        _send(scr, a, g)
        _send(scr, b, -g)

    return _result(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with row/column broadcasting (n x 1, 1 x d)."""
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(g, scr):
        _send(scr, a, _unbroadcast(g * b.data, a.shape))
        _send(scr, b, _unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), bw)


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)

    def bw(g, scr):
        _send(scr, x, g * s)

    return _result(x.data * s, (x,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")

    def bw(g, scr):
        _send(scr, a, g @ b.data.T)
        _send(scr, b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bw)


def transpose(x: Tensor) -> Tensor:
    def bw(g, scr):
        _send(scr, x, g.T)

    return _result(x.data.T.copy(), (x,), bw)


def spmm(s: SparseMatrix, d: Tensor) -> Tensor:
    """Sparse-dense product; gradient flows to the dense operand only."""
    if s.cols != d.rows:
        raise ShapeError(f"spmm: inner dimensions differ, {s.rows}x{s.cols} x {d.shape}")

    def bw(g, scr):
        _send(scr, d, s.csr.T @ g)

    return _result(s.csr @ d.data, (d,), bw)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g, scr):
        _send(scr, x, g * (1.0 - y * y) * _fault("tanh"))

    return _result(y, (x,), bw)


def artanh(x: Tensor) -> Tensor:
    _domain_check("artanh", np.abs(x.data) < 1.0, x)

    def bw(g, scr):
        _send(scr, x, g / (1.0 - x.data * x.data))

    return _result(np.arctanh(x.data), (x,), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0

    def bw(g, scr):
        _send(scr, x, g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0.0
    factor = np.where(mask, 1.0, slope)

    def bw(g, scr):
        _send(scr, x, g * factor)

    return _result(x.data * factor, (x,), bw)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    if not np.isfinite(y).all():
        bad = ~np.isfinite(y)
        r, c = np.argwhere(bad)[0]
        raise DomainError(f"exp: overflow for value {x.data[r, c]!r} at index ({r}, {c})")

    def bw(g, scr):
        _send(scr, x, g * y)

    return _result(y, (x,), bw)


def log(x: Tensor) -> Tensor:
    _domain_check("log", x.data > 0.0, x)

    def bw(g, scr):
        _send(scr, x, g / x.data)

    return _result(np.log(x.data), (x,), bw)


_ELEMENTWISE = {
    "tanh": tanh,
    "artanh": artanh,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "exp": exp,
    "log": log,
}


def elementwise(op_kind: str, x: Tensor, slope: float = 0.2) -> Tensor:
    """Dispatch a named elementwise op; `slope` only applies to leaky_relu."""
    try:
        fn = _ELEMENTWISE[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    if op_kind == "leaky_relu":
        return fn(x, slope)
    return fn(x)


# ---------------------------------------------------------------------------
# row-structured ops


def softmax_rows(x: Tensor) -> Tensor:
    if np.isnan(x.data).any():
        raise DomainError("softmax_rows: NaN input")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(g, scr):
        dot = (g * y).sum(axis=1, keepdims=True)
        _send(scr, x, y * (g - dot))

    return _result(y, (x,), bw)


def logsumexp_rows(x: Tensor) -> Tensor:
    m = x.data.max(axis=1, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=1, keepdims=True)
    p = e / s

    def bw(g, scr):
        _send(scr, x, g * p)

    return _result(m + np.log(s), (x,), bw)


def rows_l2_normalize(x: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; zero rows pass through unchanged."""
    r = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    inv = np.where(r > 0.0, 1.0 / np.where(r > 0.0, r, 1.0), 1.0)
    y = x.data * inv

    def bw(g, scr):
        dot = (g * x.data).sum(axis=1, keepdims=True)
        _send(scr, x, g * inv - dot * inv**3 * x.data)

    return _result(y, (x,), bw)


def row_sum(x: Tensor) -> Tensor:
    def bw(g, scr):
        _send(scr, x, np.broadcast_to(g, x.shape))

    return _result(x.data.sum(axis=1, keepdims=True), (x,), bw)


def row_norms(x: Tensor) -> Tensor:
    """Per-row L2 norms as an n x 1 tensor; zero rows get zero gradient."""
    r = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))

    def bw(g, scr):
        _send(scr, x, g * x.data / np.maximum(r, 1e-12))

    return _result(r, (x,), bw)


def total_sum(x: Tensor) -> Tensor:
    def bw(g, scr):
        _send(scr, x, np.full(x.shape, g[0, 0]))

    return _result(np.array([[x.data.sum()]]), (x,), bw)


def diag_part(x: Tensor) -> Tensor:
    if x.rows != x.cols:
        raise ShapeError(f"diag_part: needs a square matrix, got {x.shape}")
    n = x.rows

    def bw(g, scr):
        buf = np.zeros_like(x.data)
        buf[np.arange(n), np.arange(n)] = g.ravel()
        _send(scr, x, buf)

    return _result(x.data.diagonal().reshape(n, 1).copy(), (x,), bw)


# ---------------------------------------------------------------------------
# slicing / indexing


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    ca = a.cols

    def bw(g, scr):
        _send(scr, a, g[:, :ca])
        _send(scr, b, g[:, ca:])

    return _result(np.hstack([a.data, b.data]), (a, b), bw)


def slice_cols(x: Tensor, j0: int, j1: int) -> Tensor:
    if not (0 <= j0 <= j1 <= x.cols):
        raise ShapeError(f"slice_cols: [{j0}:{j1}] out of range for {x.shape}")

    def bw(g, scr):
        buf = np.zeros_like(x.data)
        buf[:, j0:j1] = g
        _send(scr, x, buf)

    return _result(x.data[:, j0:j1].copy(), (x,), bw)


def slice_rows(x: Tensor, i0: int, i1: int) -> Tensor:
    if not (0 <= i0 <= i1 <= x.rows):
        raise ShapeError(f"slice_rows: [{i0}:{i1}] out of range for {x.shape}")

    def bw(g, scr):
        buf = np.zeros_like(x.data)
        buf[i0:i1] = g
        _send(scr, x, buf)

    return _result(x.data[i0:i1].copy(), (x,), bw)


def gather_rows(x: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if len(idx) and (idx.min() < 0 or idx.max() >= x.rows):
        raise IndexError(f"gather_rows: index out of range for {x.rows} rows")

    def bw(g, scr):
        buf = np.zeros_like(x.data)
        np.add.at(buf, idx, g)
        _send(scr, x, buf)

    return _result(x.data[idx].copy(), (x,), bw)


# ---------------------------------------------------------------------------
# segment ops (per-neighborhood attention)


def _check_segments(indptr: np.ndarray, total: int) -> np.ndarray:
    indptr = np.asarray(indptr, dtype=np.int64)
    if indptr[0] != 0 or indptr[-1] != total:
        raise ShapeError("segment pointer does not cover the value array")
    if (np.diff(indptr) <= 0).any():
        raise ShapeError("empty segment in segment pointer")
    return indptr


def segment_softmax(logits: Tensor, indptr) -> Tensor:
    """Softmax within contiguous segments of an (E, 1) logit column.

    `indptr` delimits segments CSR-style; every segment must be nonempty.
    """
    if logits.cols != 1:
        raise ShapeError(f"segment_softmax: needs an E x 1 column, got {logits.shape}")
    ptr = _check_segments(indptr, logits.rows)
    starts = ptr[:-1]
    counts = np.diff(ptr)
    v = logits.data.ravel()
    seg_max = np.maximum.reduceat(v, starts)
    e = np.exp(v - np.repeat(seg_max, counts))
    seg_sum = np.add.reduceat(e, starts)
    p = e / np.repeat(seg_sum, counts)

    def bw(g, scr):
        gv = g.ravel()
        dot = np.add.reduceat(p * gv, starts)
        _send(scr, logits, (p * (gv - np.repeat(dot, counts))).reshape(-1, 1))

    return _result(p.reshape(-1, 1), (logits,), bw)


def edge_weighted_aggregate(alpha: Tensor, h: Tensor, indptr, col_indices) -> Tensor:
    """out[i] = sum over edges e in segment i of alpha[e] * h[col_indices[e]].

    Realizes a sparse matrix product where the edge weights themselves are
    differentiable (the sparse structure stays fixed).
    """
    if alpha.cols != 1:
        raise ShapeError(f"edge weights must be E x 1, got {alpha.shape}")
    cols = np.asarray(col_indices, dtype=np.int64)
    if len(cols) != alpha.rows:
        raise ShapeError("edge weights and column indices disagree in length")
    ptr = _check_segments(indptr, alpha.rows)
    n_out = len(ptr) - 1
    if len(cols) and cols.max() >= h.rows:
        raise IndexError("edge column index out of range for the feature matrix")
    w = sp.csr_matrix((alpha.data.ravel(), cols, ptr), shape=(n_out, h.rows))

    def bw(g, scr):
        src = np.repeat(np.arange(n_out), np.diff(ptr))
        galpha = np.einsum("ed,ed->e", g[src], h.data[cols]).reshape(-1, 1)
        _send(scr, alpha, galpha)
        _send(scr, h, w.T @ g)

    return _result(w @ h.data, (alpha, h), bw)
