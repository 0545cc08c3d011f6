"""Dense float64 tensors with reverse-mode gradients.

Forward ops build a dynamic graph; ``backward`` walks the reachable
nodes in reverse creation order, which is a valid topological order
because every op's output is created after its inputs.  Replaying a
forward pass with identical inputs reproduces identical values bit for
bit (all kernels are plain single-threaded numpy).

The kernels used by the differentiable ops are also exported as plain
array functions (``softmax_kernel``, ``lstm_kernel``, ...) so that
sampling-heavy code paths can run without graph construction and still
produce bitwise-identical numbers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

_creation = itertools.count()


class Tensor:
    """Value node in the computation graph."""

    __slots__ = ("data", "grad", "_parents", "_backward", "_order")

    def __init__(self, data, _parents: tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], None] | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self._order = next(_creation)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable node."""
        if self.data.shape != ():
            raise ShapeError(f"backward requires a scalar, got shape {self.shape}")
        nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[Tensor] = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._order, reverse=True)
        _accum(self, np.ones((), dtype=np.float64))
        for t in nodes:
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """Named trainable tensor with a persistent accumulated gradient.

    ``frozen_rows`` marks first-axis rows (e.g. padding embeddings) that
    gradient steps must never move.
    """

    __slots__ = ("name", "frozen_rows")

    def __init__(self, name: str, data, frozen_rows: tuple[int, ...] | None = None):
        super().__init__(np.array(data, dtype=np.float64))
        self.grad = np.zeros_like(self.data)
        self.name = name
        self.frozen_rows = frozen_rows

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0


# --- kernels (shared by graph ops and no-grad fast paths) -------------------


def softmax_kernel(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_kernel(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def sigmoid_kernel(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def lstm_kernel(w_x: np.ndarray, w_h: np.ndarray, b: np.ndarray,
                x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray]:
    """Gate order: input, forget, output, candidate."""
    hs = h_prev.shape[0]
    z = (w_x @ x + w_h @ h_prev) + b
    i = sigmoid_kernel(z[0:hs])
    f = sigmoid_kernel(z[hs:2 * hs])
    o = sigmoid_kernel(z[2 * hs:3 * hs])
    g = np.tanh(z[3 * hs:4 * hs])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


# --- primitive ops ----------------------------------------------------------


def _shape_check(cond: bool, op: str, *shapes) -> None:
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {' and '.join(map(str, shapes))}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0],
                 "matmul", a.shape, b.shape)
    out = Tensor(a.data @ b.data, (a, b))

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._backward = backward
    return out


def matvec(w: Tensor, x: Tensor) -> Tensor:
    _shape_check(w.ndim == 2 and x.ndim == 1 and w.shape[1] == x.shape[0],
                 "matvec", w.shape, x.shape)
    out = Tensor(w.data @ x.data, (w, x))

    def backward(g):
        _accum(w, np.outer(g, x.data))
        _accum(x, w.data.T @ g)

    out._backward = backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(a.shape == b.shape, "add", a.shape, b.shape)
    out = Tensor(a.data + b.data, (a, b))

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    out._backward = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(a.shape == b.shape, "mul", a.shape, b.shape)
    out = Tensor(a.data * b.data, (a, b))

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    out._backward = backward
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, (a,))

    def backward(g):
        _accum(a, g * c)

    out._backward = backward
    return out


def add_n(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("add_n: empty operand list")
    shape = parts[0].shape
    _shape_check(all(p.shape == shape for p in parts), "add_n", shape)
    acc = parts[0].data.copy()
    for p in parts[1:]:
        acc += p.data
    out = Tensor(acc, tuple(parts))

    def backward(g):
        for p in parts:
            _accum(p, g)

    out._backward = backward
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), (a,))

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    out._backward = backward
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = sigmoid_kernel(a.data)
    out = Tensor(y, (a,))

    def backward(g):
        _accum(a, g * y * (1.0 - y))

    out._backward = backward
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, (a,))

    def backward(g):
        _accum(a, g * (1.0 - y * y))

    out._backward = backward
    return out


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis; rows sum to 1 within 1e-12."""
    y = softmax_kernel(a.data)
    if not np.all(np.isfinite(y)):
        raise NumericError("softmax produced non-finite values")
    out = Tensor(y, (a,))

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, y * (g - dot))

    out._backward = backward
    return out


def log_softmax(a: Tensor) -> Tensor:
    y = log_softmax_kernel(a.data)
    if not np.all(np.isfinite(y)):
        raise NumericError("log_softmax produced non-finite values")
    out = Tensor(y, (a,))

    def backward(g):
        soft = softmax_kernel(a.data)
        _accum(a, g - soft * g.sum(axis=-1, keepdims=True))

    out._backward = backward
    return out


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    _shape_check(all(p.ndim == 1 for p in parts), "concat",
                 *[p.shape for p in parts])
    out = Tensor(np.concatenate([p.data for p in parts]), tuple(parts))
    sizes = [p.shape[0] for p in parts]

    def backward(g):
        off = 0
        for p, s in zip(parts, sizes):
            _accum(p, g[off:off + s])
            off += s

    out._backward = backward
    return out


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    _shape_check(a.ndim == 1 and 0 <= start and start + length <= a.shape[0],
                 "narrow", a.shape, (start, length))
    out = Tensor(a.data[start:start + length].copy(), (a,))

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[start:start + length] += g

    out._backward = backward
    return out


def pick(a: Tensor, index: int) -> Tensor:
    _shape_check(a.ndim == 1 and 0 <= index < a.shape[0], "pick", a.shape, index)
    out = Tensor(a.data[index], (a,))

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g

    out._backward = backward
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(), (a,))

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    out._backward = backward
    return out


def embedding_lookup(table: Tensor, index: int) -> Tensor:
    """Row of an embedding table, differentiable w.r.t. the table."""
    _shape_check(table.ndim == 2 and 0 <= index < table.shape[0],
                 "embedding_lookup", table.shape, index)
    out = Tensor(table.data[index].copy(), (table,))

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        table.grad[index] += g

    out._backward = backward
    return out


def pair_rows(rel_table: Tensor, ent_table: Tensor,
              rel_ids: np.ndarray, ent_ids: np.ndarray) -> Tensor:
    """Stack [rel_emb(a_i); ent_emb(e_i)] rows into one matrix."""
    _shape_check(rel_table.ndim == 2 and ent_table.ndim == 2,
                 "pair_rows", rel_table.shape, ent_table.shape)
    rel_ids = np.asarray(rel_ids, dtype=np.intp)
    ent_ids = np.asarray(ent_ids, dtype=np.intp)
    _shape_check(rel_ids.shape == ent_ids.shape and rel_ids.ndim == 1,
                 "pair_rows", rel_ids.shape, ent_ids.shape)
    e = rel_table.shape[1]
    out = Tensor(np.concatenate([rel_table.data[rel_ids],
                                 ent_table.data[ent_ids]], axis=1),
                 (rel_table, ent_table))

    def backward(g):
        if rel_table.grad is None:
            rel_table.grad = np.zeros_like(rel_table.data)
        if ent_table.grad is None:
            ent_table.grad = np.zeros_like(ent_table.data)
        np.add.at(rel_table.grad, rel_ids, g[:, :e])
        np.add.at(ent_table.grad, ent_ids, g[:, e:])

    out._backward = backward
    return out


def pair_rows_kernel(rel_table: np.ndarray, ent_table: np.ndarray,
                     rel_ids: np.ndarray, ent_ids: np.ndarray) -> np.ndarray:
    return np.concatenate([rel_table[rel_ids], ent_table[ent_ids]], axis=1)


def max_over_axis(a: Tensor, axis: int = 0) -> Tensor:
    """Max-pool a matrix along one axis; gradient routes to the first argmax."""
    _shape_check(a.ndim == 2, "max_over_axis", a.shape)
    idx = a.data.argmax(axis=axis)
    out_data = a.data.max(axis=axis)
    out = Tensor(out_data, (a,))

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        if axis == 0:
            a.grad[idx, np.arange(a.data.shape[1])] += g
        else:
            a.grad[np.arange(a.data.shape[0]), idx] += g

    out._backward = backward
    return out


def unfold_rows(a: Tensor, window: int) -> Tensor:
    """Sliding windows of `window` consecutive rows, flattened per position."""
    _shape_check(a.ndim == 2 and 1 <= window <= a.shape[0],
                 "unfold_rows", a.shape, window)
    n, cols = a.shape
    p = n - window + 1
    out_data = np.empty((p, window * cols), dtype=np.float64)
    for i in range(p):
        out_data[i] = a.data[i:i + window].reshape(-1)
    out = Tensor(out_data, (a,))

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        for i in range(p):
            a.grad[i:i + window] += g[i].reshape(window, cols)

    out._backward = backward
    return out


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log-probability of `target` under softmax(logits)."""
    _shape_check(logits.ndim == 1, "cross_entropy", logits.shape)
    if not 0 <= target < logits.shape[0]:
        raise ShapeError(f"cross_entropy: class {target} out of range "
                         f"for {logits.shape[0]} classes")
    return scale(pick(log_softmax(logits), target), -1.0)


# --- composite ops ----------------------------------------------------------


def lstm_cell(w_x: Tensor, w_h: Tensor, b: Tensor,
              x: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One gated-recurrence step; gate order input/forget/output/candidate.

    Mirrors ``lstm_kernel`` operation for operation so graph and no-grad
    evaluations agree bitwise.
    """
    hs = h_prev.shape[0]
    _shape_check(w_x.shape[0] == 4 * hs and w_h.shape == (4 * hs, hs)
                 and b.shape == (4 * hs,) and c_prev.shape == (hs,),
                 "lstm_cell", w_x.shape, w_h.shape, b.shape)
    z = add(add(matvec(w_x, x), matvec(w_h, h_prev)), b)
    i = sigmoid(narrow(z, 0, hs))
    f = sigmoid(narrow(z, hs, hs))
    o = sigmoid(narrow(z, 2 * hs, hs))
    g = tanh(narrow(z, 3 * hs, hs))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def conv_over_sequence(filters: Tensor, seq: Tensor, window: int) -> Tensor:
    """Filter bank over sliding row windows; output (N-w+1) x D.

    `filters` has shape (window * row_width, D).  The caller pads the
    sequence; no padding happens here.
    """
    _shape_check(seq.ndim == 2, "conv_over_sequence", seq.shape)
    if seq.shape[0] < window:
        raise ShapeError(f"conv_over_sequence: sequence length {seq.shape[0]} "
                         f"shorter than window {window}")
    _shape_check(filters.ndim == 2 and filters.shape[0] == window * seq.shape[1],
                 "conv_over_sequence", filters.shape, seq.shape)
    return matmul(unfold_rows(seq, window), filters)


# --- optimization and verification ------------------------------------------


def sgd_step(params: Iterable[Parameter], learning_rate: float) -> None:
    """p <- p - lr * grad, then zero the gradients of the stepped params."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
        if p.frozen_rows:
            p.grad[list(p.frozen_rows)] = 0.0
        p.data -= learning_rate * p.grad
        p.grad[...] = 0.0


@dataclass
class GradientCheckReport:
    tolerance: float
    max_errors: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance


def gradient_check(loss_fn: Callable[[], Tensor], params: Sequence[Parameter],
                   h: float = 1e-5, tol: float = 1e-4) -> GradientCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    Relative error per element uses a denominator floored at 1e-6 so
    structurally-zero gradients do not divide by rounding noise.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    first = loss_fn().item()
    second = loss_fn().item()
    if first != second:
        raise NumericError("loss function is not deterministic")

    zero_grad(params)
    loss_fn().backward()
    analytic = {p.name: p.grad.copy() for p in params}
    zero_grad(params)

    report = GradientCheckReport(tolerance=tol)
    for p in params:
        flat = p.data.reshape(-1)
        worst = 0.0
        for j in range(flat.shape[0]):
            saved = flat[j]
            flat[j] = saved + h
            f_plus = loss_fn().item()
            flat[j] = saved - h
            f_minus = loss_fn().item()
            flat[j] = saved
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic[p.name].reshape(-1)[j]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
        report.max_errors[p.name] = worst
    return report


# --- initialization ---------------------------------------------------------


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 scale_: float = 0.08) -> np.ndarray:
    return rng.uniform(-scale_, scale_, size=shape)


def embedding_init(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(dim), size=(rows, dim))
