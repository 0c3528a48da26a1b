"""Small reverse-mode differentiation engine over 2-D float64 arrays.

Every value is a :class:`Var` wrapping a 2-D ``numpy`` array.  Operations
executed while a :class:`Tape` is active are recorded in order, and
``Tape.backward`` replays them in reverse, accumulating gradients into the
inputs.  Outside a tape the same functions run as plain numpy code.

Sparse operands share a fixed :class:`SparsePattern` (CSR layout); only the
per-entry values (an ``(nnz, 1)`` Var) are differentiable.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class NumericError(ArithmeticError):
    """Raised when an operation produces NaN or Inf."""


class Var:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ShapeError(f"Var must be at most 2-D, got shape {arr.shape}")
        self.value = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError("item() needs a single-entry Var")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_var(other), -1.0))

    def __rsub__(self, other):
        return add(as_var(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


# ---------------------------------------------------------------------------
# tape


@dataclass
class _Entry:
    output: Var
    inputs: tuple[Var, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


_ACTIVE: list["Tape"] = []
_CORRUPTED: dict[str, float] = {}


@contextmanager
def corrupt_backward(op: str = "matmul", factor: float = 1.1):
    """Scale the gradients produced by ``op``'s backward rule (negative-control hook)."""
    _CORRUPTED[op] = factor
    try:
        yield
    finally:
        _CORRUPTED.pop(op, None)


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; nested tapes are allowed and only the innermost
    one records.  A tape is not thread-safe.
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def backward(self, loss: Var) -> None:
        if loss.value.size != 1:
            raise ShapeError("backward() needs a scalar loss")
        for entry in self.entries:
            for v in entry.inputs:
                if v.requires_grad:
                    v.grad = np.zeros_like(v.value)
            entry.output.grad = None
        loss.grad = np.ones_like(loss.value)
        for entry in reversed(self.entries):
            g = entry.output.grad
            if g is None:
                continue
            factor = _CORRUPTED.get(entry.op, 1.0) if _CORRUPTED else 1.0
            for v, dv in zip(entry.inputs, entry.backward(g)):
                if dv is None or not v.requires_grad:
                    continue
                v.grad += dv if factor == 1.0 else factor * dv


def _record(out: Var, inputs: tuple[Var, ...], backward, op: str) -> Var:
    if not np.all(np.isfinite(out.value)):
        raise NumericError(f"non-finite values produced by {op}")
    if _ACTIVE and any(v.requires_grad for v in inputs):
        out.requires_grad = True
        _ACTIVE[-1].entries.append(_Entry(out, inputs, backward, op))
    return out


# ---------------------------------------------------------------------------
# dense primitives


def matmul(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    out = Var(a.value @ b.value)

    def backward(g):
        da = g @ b.value.T if a.requires_grad else None
        db = a.value.T @ g if b.requires_grad else None
        return da, db

    return _record(out, (a, b), backward, "matmul")


def transpose(a: Var) -> Var:
    out = Var(a.value.T.copy())
    return _record(out, (a,), lambda g: (g.T,), "transpose")


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    out = Var(a.value + b.value)
    return _record(out, (a, b), lambda g: (g, g), "add")


def add_row(a: Var, bias: Var) -> Var:
    """Add a ``(1, k)`` row vector to every row of ``a``."""
    if bias.shape != (1, a.shape[1]):
        raise ShapeError(f"add_row: {a.shape} vs {bias.shape}")
    out = Var(a.value + bias.value)
    return _record(out, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True)), "add_row")


def scale(a: Var, c: float) -> Var:
    out = Var(a.value * c)
    return _record(out, (a,), lambda g: (g * c,), "scale")


def mul(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    out = Var(a.value * b.value)
    return _record(out, (a, b), lambda g: (g * b.value, g * a.value), "mul")


def leaky_relu(a: Var, slope: float = LEAKY_SLOPE) -> Var:
    # derivative at exactly 0 is taken from the positive branch
    pos = a.value >= 0
    out = Var(np.where(pos, a.value, slope * a.value))
    return _record(out, (a,), lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def relu(a: Var) -> Var:
    pos = a.value > 0
    out = Var(np.where(pos, a.value, 0.0))
    return _record(out, (a,), lambda g: (np.where(pos, g, 0.0),), "relu")


def elu(a: Var) -> Var:
    pos = a.value > 0
    neg_exp = np.exp(np.minimum(a.value, 0.0))
    out = Var(np.where(pos, a.value, neg_exp - 1.0))
    return _record(out, (a,), lambda g: (np.where(pos, g, g * neg_exp),), "elu")


def exp(a: Var) -> Var:
    with np.errstate(over="ignore"):
        out = Var(np.exp(a.value))
    return _record(out, (a,), lambda g: (g * out.value,), "exp")


def log(a: Var) -> Var:
    if np.any(a.value <= 0):
        raise DomainError("log of non-positive entry")
    out = Var(np.log(a.value))
    return _record(out, (a,), lambda g: (g / a.value,), "log")


def total(a: Var) -> Var:
    """Sum of all entries as a 1x1 Var."""
    out = Var(a.value.sum())
    return _record(out, (a,), lambda g: (np.full_like(a.value, g[0, 0]),), "total")


def concat_cols(parts: Sequence[Var]) -> Var:
    widths = [p.shape[1] for p in parts]
    if len({p.shape[0] for p in parts}) != 1:
        raise ShapeError("concat_cols: row counts differ")
    out = Var(np.concatenate([p.value for p in parts], axis=1))
    splits = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=1))

    return _record(out, tuple(parts), backward, "concat_cols")


def slice_rows(a: Var, start: int, stop: int) -> Var:
    out = Var(a.value[start:stop].copy())

    def backward(g):
        full = np.zeros_like(a.value)
        full[start:stop] = g
        return (full,)

    return _record(out, (a,), backward, "slice_rows")


def gather_rows(a: Var, index: np.ndarray) -> Var:
    index = np.asarray(index, dtype=np.int64)
    out = Var(a.value[index])

    def backward(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return (full,)

    return _record(out, (a,), backward, "gather_rows")


def dropout(a: Var, rate: float, rng: np.random.Generator | None) -> Var:
    """Inverted dropout; identity when ``rate == 0`` or ``rng`` is None."""
    if rate <= 0.0 or rng is None:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Var(keep))


def masked_cross_entropy(logits: Var, labels: np.ndarray, mask: np.ndarray) -> Var:
    """Mean of ``-log softmax(logits[i])[labels[i]]`` over the nodes in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("masked_cross_entropy: empty mask")
    n, c = logits.shape
    picked = labels[mask]
    if np.any(picked < 0) or np.any(picked >= c):
        raise ValueError(f"label out of range [0, {c})")
    z = logits.value[mask]
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(mask.size)
    loss = np.mean(log_norm - z[rows, picked])
    out = Var(loss)

    def backward(g):
        probs = np.exp(z - log_norm[:, None])
        probs[rows, picked] -= 1.0
        full = np.zeros_like(logits.value)
        np.add.at(full, mask, probs * (g[0, 0] / mask.size))
        return (full,)

    return _record(out, (logits,), backward, "masked_cross_entropy")


# ---------------------------------------------------------------------------
# sparse primitives


class SparsePattern:
    """Immutable CSR support pattern with sorted column indices per row."""

    def __init__(self, n_rows: int, n_cols: int, indptr, indices):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        if indptr.shape != (n_rows + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
            raise ShapeError("inconsistent row offsets")
        if np.any(np.diff(indptr) < 0):
            raise ShapeError("row offsets must be non-decreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= n_cols):
            raise ShapeError("column index out of range")
        self.row = np.repeat(np.arange(n_rows), np.diff(indptr))
        if indices.size > 1:
            same_row = self.row[1:] == self.row[:-1]
            if np.any(same_row & (indices[1:] <= indices[:-1])):
                raise ShapeError("column indices must be strictly increasing per row")
        self.n_rows, self.n_cols = n_rows, n_cols
        self.indptr, self.indices = indptr, indices
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self.row.setflags(write=False)

    @classmethod
    def from_scipy(cls, m) -> "SparsePattern":
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def csr(self, values) -> sp.csr_matrix:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        return sp.csr_matrix((values, self.indices, self.indptr), shape=self.shape)

    def sample(self, m) -> np.ndarray:
        """Entries of ``m`` (dense or sparse) at this pattern's positions, as ``(nnz, 1)``."""
        if sp.issparse(m):
            vals = np.asarray(sp.csr_matrix(m)[self.row, self.indices]).reshape(-1)
        else:
            vals = np.asarray(m)[self.row, self.indices]
        return vals.reshape(-1, 1).astype(np.float64)

    def densify(self, values) -> np.ndarray:
        return self.csr(values).toarray()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SparsePattern)
            and self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None


@dataclass
class SparseMatrix:
    """A pattern plus one value per stored entry (``values`` is ``(nnz, 1)``)."""

    pattern: SparsePattern
    values: Var

    def __post_init__(self):
        self.values = as_var(self.values)
        if self.values.shape != (self.pattern.nnz, 1):
            raise ShapeError(f"expected {(self.pattern.nnz, 1)} values, got {self.values.shape}")

    @property
    def shape(self):
        return self.pattern.shape

    def to_scipy(self) -> sp.csr_matrix:
        return self.pattern.csr(self.values.value)

    def toarray(self) -> np.ndarray:
        return self.pattern.densify(self.values.value)


def spmm(s: SparseMatrix, d: Var) -> Var:
    """Sparse-times-dense product, differentiable in both the sparse values and ``d``."""
    d = as_var(d)
    pat = s.pattern
    if pat.n_cols != d.shape[0]:
        raise ShapeError(f"spmm: {pat.shape} x {d.shape}")
    m = pat.csr(s.values.value)
    out = Var(m @ d.value)

    def backward(g):
        dvals = None
        if s.values.requires_grad:
            dvals = np.einsum("ij,ij->i", g[pat.row], d.value[pat.indices]).reshape(-1, 1)
        return dvals, (m.T @ g if d.requires_grad else None)

    return _record(out, (s.values, d), backward, "spmm")


def segment_softmax(pattern: SparsePattern, logits: Var) -> Var:
    """Softmax of per-entry logits within each row of ``pattern``."""
    if logits.shape != (pattern.nnz, 1):
        raise ShapeError("segment_softmax: one logit per stored entry expected")
    if np.any(pattern.degree() == 0):
        raise ValueError("segment_softmax: empty segment (isolated node without self-loop)")
    starts = pattern.indptr[:-1]
    x = logits.value[:, 0]
    shifted = x - np.maximum.reduceat(x, starts)[pattern.row]
    e = np.exp(shifted)
    y = e / np.add.reduceat(e, starts)[pattern.row]
    out = Var(y.reshape(-1, 1))

    def backward(g):
        gy = g[:, 0] * y
        return ((gy - y * np.add.reduceat(gy, starts)[pattern.row]).reshape(-1, 1),)

    return _record(out, (logits,), backward, "segment_softmax")


def to_dense(s: SparseMatrix) -> Var:
    pat = s.pattern
    out = Var(pat.densify(s.values.value))
    return _record(out, (s.values,), lambda g: (pat.sample(g),), "to_dense")


def masked_sandwich(pattern: SparsePattern, left: sp.csr_matrix, values: Var) -> Var:
    """Entries of ``L · S · Lᵀ`` on ``pattern``, where ``S`` lives on ``pattern``."""
    s = pattern.csr(values.value)
    left = sp.csr_matrix(left)
    out = Var(pattern.sample(left @ s @ left.T))

    def backward(g):
        return (pattern.sample(left.T @ pattern.csr(g) @ left),)

    return _record(out, (values,), backward, "masked_sandwich")


def sparse_linear(op, values: Var) -> Var:
    """Apply a fixed sparse linear map to a column of values."""
    if op.shape[1] != values.shape[0]:
        raise ShapeError(f"sparse_linear: {op.shape} x {values.shape}")
    out = Var(op @ values.value)
    return _record(out, (values,), lambda g: (op.T @ g,), "sparse_linear")


def sandwich(left, values: Var) -> Var:
    """Dense ``L · S · Lᵀ`` for a dense ``S``; ``L`` may be a dense array or scipy sparse."""
    n = values.shape[0]
    if left.shape != (n, n) or values.shape != (n, n):
        raise ShapeError(f"sandwich: {left.shape} around {values.shape}")
    lt = left.T
    out = Var(np.asarray(left @ (left @ values.value.T).T))

    def backward(g):
        return (np.asarray(lt @ (lt @ g.T).T),)

    return _record(out, (values,), backward, "sandwich")


def masked_gram(pattern: SparsePattern, h: Var) -> Var:
    """Row inner products ``h_i · h_j`` for every stored entry ``(i, j)``."""
    if h.shape[0] != pattern.n_rows or pattern.n_rows != pattern.n_cols:
        raise ShapeError("masked_gram: pattern must be square and match h")
    hv = h.value
    out = Var(np.einsum("ij,ij->i", hv[pattern.row], hv[pattern.indices]).reshape(-1, 1))

    def backward(g):
        gm = pattern.csr(g)
        return (gm @ hv + gm.T @ hv,)

    return _record(out, (h,), backward, "masked_gram")


# ---------------------------------------------------------------------------
# parameters, optimisation, initialisation


@dataclass
class ParamStore:
    params: dict[str, Var] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value) -> Var:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        var = Var(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        var.grad = np.zeros_like(var.value)
        self.params[name] = var
        self.m[name] = np.zeros_like(var.value)
        self.v[name] = np.zeros_like(var.value)
        return var

    def __getitem__(self, name: str) -> Var:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = np.zeros_like(p.value)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for k, arr in values.items():
            p = self.params[k]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{k}: expected {p.shape}, got {arr.shape}")
            p.value = arr.copy()


def adam_step(
    store: ParamStore,
    lr: float = 0.005,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decoupled: bool = True,
) -> None:
    """One Adam update with bias correction; gradients are zeroed afterwards.

    With ``decoupled=False`` the weight decay is added to the gradient (L2
    penalty) instead of being applied directly to the weights.
    """
    store.step += 1
    t = store.step
    for name, p in store.params.items():
        g = np.zeros_like(p.value) if p.grad is None else p.grad
        if weight_decay and not decoupled:
            g = g + weight_decay * p.value
        m = store.m[name] = beta1 * store.m[name] + (1 - beta1) * g
        v = store.v[name] = beta2 * store.v[name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay and decoupled:
            update = update + lr * weight_decay * p.value
        p.value = p.value - update
        p.grad = np.zeros_like(p.value)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows <= 0 or cols <= 0:
        raise ValueError("glorot_init needs positive dimensions")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def grad_check(
    function: Callable[[], Var],
    params: Iterable[Var],
    h: float = 1e-6,
    floor: float = 1e-8,
) -> float:
    """Largest relative gap between tape gradients and central differences.

    ``function`` must recompute the scalar loss from the current values of
    ``params``.  The step for each entry is ``h * max(1, |x|)``; the relative
    error of an entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    params = list(params)
    with Tape() as tape:
        loss = function()
    tape.backward(loss)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            x0 = flat[i]
            step = h * max(1.0, abs(x0))
            flat[i] = x0 + step
            f_plus = function().item()
            flat[i] = x0 - step
            f_minus = function().item()
            flat[i] = x0
            num = (f_plus - f_minus) / (2 * step)
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("non-finite loss during finite differences")
            ana = a.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    return worst


def normalize_rows(a: Var) -> Var:
    """Divide each row of a dense Var by its sum."""
    s = a.value.sum(axis=1, keepdims=True)
    out = Var(a.value / s)

    def backward(g):
        return ((g - (g * out.value).sum(axis=1, keepdims=True)) / s,)

    return _record(out, (a,), backward, "normalize_rows")


def segment_normalize(pattern: SparsePattern, values: Var) -> Var:
    """Divide each stored entry by the sum of its row's stored entries."""
    starts = pattern.indptr[:-1]
    v = values.value[:, 0]
    s = np.add.reduceat(v, starts)[pattern.row]
    y = v / s
    out = Var(y.reshape(-1, 1))

    def backward(g):
        gy = g[:, 0]
        inner = np.add.reduceat(gy * y, starts)[pattern.row]
        return (((gy - inner) / s).reshape(-1, 1),)

    return _record(out, (values,), backward, "segment_normalize")
