"""Dense 2-D tensors with a per-forward-pass reverse-mode tape.

Every op records a :class:`Node` on the active :class:`Tape` (if any input is
tracked) and its gradient rule is looked up by name in ``BACKWARD_RULES`` when
:func:`backward` runs. Outside a ``with Tape():`` block ops are plain numpy
arithmetic, which is what evaluation and finite differencing use.
"""

from __future__ import annotations

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

EPS = 1e-12
LN_EPS = 1e-5


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class ContractError(ValueError):
    """A caller broke an op precondition (e.g. non-scalar loss)."""


_ACTIVE_TAPE: ContextVar["Tape | None"] = ContextVar("umeml_active_tape", default=None)


class Tensor:
    """A float64 matrix that can participate in a tape.

    Leaves created with ``requires_grad=True`` are parameters. Results of ops
    recorded on a tape carry ``node_id`` (their index on that tape).
    """

    __slots__ = ("data", "requires_grad", "node_id", "_tape", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = arr
        out.requires_grad = False
        out.node_id = None
        out._tape = None
        out.name = None
        return out

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
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return div(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def zeros(rows: int, cols: int) -> Tensor:
    return Tensor._wrap(np.zeros((rows, cols)))


def ones(rows: int, cols: int) -> Tensor:
    return Tensor._wrap(np.ones((rows, cols)))


def eye(n: int) -> Tensor:
    return Tensor._wrap(np.eye(n))


@dataclass(slots=True)
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    saved: Any = None


class Tape:
    """Ordered record of the ops of one forward pass.

    Nodes are appended as ops execute, so the list is already topologically
    sorted. Used as a context manager; the tape is meant to be discarded once
    :meth:`backward` has run.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or t._tape is self

    def backward(self, loss: Tensor, params: Sequence[Tensor] | None = None):
        return backward(self, loss, params)


def _emit(op: str, inputs: tuple[Tensor, ...], data: np.ndarray, saved: Any = None) -> Tensor:
    out = Tensor._wrap(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        for t in inputs:
            if t.requires_grad or t._tape is tape:
                out.node_id = len(tape.nodes)
                out._tape = tape
                tape.nodes.append(Node(op, inputs, out, saved))
                break
    return out


BackwardRule = Callable[[np.ndarray, Node], tuple]
BACKWARD_RULES: dict[str, BackwardRule] = {}


def _rule(name: str):
    def register(fn: BackwardRule) -> BackwardRule:
        BACKWARD_RULES[name] = fn
        return fn

    return register


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep over ``tape`` from the scalar ``loss``.

    Returns a map from parameter tensor to gradient array. When ``params`` is
    given, every listed tensor gets an entry (zeros when unreachable);
    otherwise all reached leaves with ``requires_grad`` are returned.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a 1x1 loss, got {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        leaves[id(loss)] = loss
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = BACKWARD_RULES[node.op](g, node)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None:
                continue
            if t.requires_grad:
                leaves[id(t)] = t
            elif t._tape is not tape:
                continue
            key = id(t)
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
    if params is None:
        return {t: grads[k] for k, t in leaves.items()}
    out = {}
    for p in params:
        g = grads.get(id(p))
        out[p] = np.zeros_like(p.data) if g is None else g
    return out


# ---------------------------------------------------------------------------
# structural helpers


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: inner dims disagree, {a.shape} x {b.shape}")
    return _emit("matmul", (a, b), a.data @ b.data)


def _live(t: Tensor) -> bool:
    # constants never need a gradient; skipping them saves a matmul per node
    return t.requires_grad or t._tape is not None


@_rule("matmul")
def _matmul_back(g, node):
    a, b = node.inputs
    return (g @ b.data.T if _live(a) else None), (a.data.T @ g if _live(b) else None)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-row or 1-column operand is broadcast."""
    _broadcast_shape(a, b, "add")
    return _emit("add", (a, b), a.data + b.data)


@_rule("add")
def _add_back(g, node):
    a, b = node.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    return _emit("sub", (a, b), a.data - b.data)


@_rule("sub")
def _sub_back(g, node):
    a, b = node.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    return _emit("mul", (a, b), a.data * b.data)


@_rule("mul")
def _mul_back(g, node):
    a, b = node.inputs
    return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "div")
    return _emit("div", (a, b), a.data / b.data)


@_rule("div")
def _div_back(g, node):
    a, b = node.inputs
    ga = g / b.data
    gb = -g * a.data / (b.data * b.data)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def scale(a: Tensor, s: float) -> Tensor:
    return _emit("scale", (a,), a.data * s, s)


@_rule("scale")
def _scale_back(g, node):
    return (g * node.saved,)


def transpose(a: Tensor) -> Tensor:
    return _emit("transpose", (a,), a.data.T.copy())


@_rule("transpose")
def _transpose_back(g, node):
    return (g.T,)


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise DimensionError("concat_rows: nothing to concatenate")
    width = parts[0].cols
    for p in parts:
        if p.cols != width:
            raise DimensionError(
                f"concat_rows: widths disagree, {[q.shape for q in parts]}"
            )
    data = np.concatenate([p.data for p in parts], axis=0)
    return _emit("concat_rows", parts, data, [p.rows for p in parts])


@_rule("concat_rows")
def _concat_rows_back(g, node):
    bounds = np.cumsum([0] + node.saved)
    return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(node.saved)))


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise DimensionError("concat_cols: nothing to concatenate")
    height = parts[0].rows
    for p in parts:
        if p.rows != height:
            raise DimensionError(
                f"concat_cols: heights disagree, {[q.shape for q in parts]}"
            )
    data = np.concatenate([p.data for p in parts], axis=1)
    return _emit("concat_cols", parts, data, [p.cols for p in parts])


@_rule("concat_cols")
def _concat_cols_back(g, node):
    bounds = np.cumsum([0] + node.saved)
    return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(node.saved)))


def submatrix(a: Tensor, r0: int, r1: int, c0: int = 0, c1: int | None = None) -> Tensor:
    """Contiguous block ``a[r0:r1, c0:c1]``."""
    c1 = a.cols if c1 is None else c1
    if not (0 <= r0 <= r1 <= a.rows and 0 <= c0 <= c1 <= a.cols):
        raise DimensionError(f"submatrix: [{r0}:{r1}, {c0}:{c1}] out of range for {a.shape}")
    return _emit("submatrix", (a,), a.data[r0:r1, c0:c1].copy(), (r0, r1, c0, c1))


@_rule("submatrix")
def _submatrix_back(g, node):
    (a,) = node.inputs
    r0, r1, c0, c1 = node.saved
    out = np.zeros_like(a.data)
    out[r0:r1, c0:c1] = g
    return (out,)


def row(a: Tensor, i: int) -> Tensor:
    return submatrix(a, i, i + 1)


def sum_all(a: Tensor) -> Tensor:
    return _emit("sum_all", (a,), np.array([[a.data.sum()]]))


@_rule("sum_all")
def _sum_all_back(g, node):
    (a,) = node.inputs
    return (np.full(a.shape, g[0, 0]),)


def sum_rows(a: Tensor) -> Tensor:
    """Column-wise totals over rows, 1 x cols."""
    return _emit("sum_rows", (a,), a.data.sum(axis=0, keepdims=True))


@_rule("sum_rows")
def _sum_rows_back(g, node):
    (a,) = node.inputs
    return (np.broadcast_to(g, a.shape).copy(),)


def mean_rows(a: Tensor) -> Tensor:
    """Average of the rows, 1 x cols."""
    return _emit("mean_rows", (a,), a.data.mean(axis=0, keepdims=True))


@_rule("mean_rows")
def _mean_rows_back(g, node):
    (a,) = node.inputs
    return (np.broadcast_to(g / a.rows, a.shape).copy(),)


def relu(a: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is 0."""
    mask = a.data > 0
    return _emit("relu", (a,), np.where(mask, a.data, 0.0), mask)


@_rule("relu")
def _relu_back(g, node):
    return (g * node.saved,)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit("sigmoid", (a,), out)


@_rule("sigmoid")
def _sigmoid_back(g, node):
    s = node.output.data
    return (g * s * (1.0 - s),)


def exp(a: Tensor) -> Tensor:
    return _emit("exp", (a,), np.exp(a.data))


@_rule("exp")
def _exp_back(g, node):
    return (g * node.output.data,)


def log(a: Tensor) -> Tensor:
    """Natural log with the input clamped below at ``EPS``.

    Clamped entries get zero gradient.
    """
    x = a.data
    clipped = x <= EPS
    return _emit("log", (a,), np.log(np.where(clipped, EPS, x)), clipped)


@_rule("log")
def _log_back(g, node):
    (a,) = node.inputs
    safe = np.where(node.saved, 1.0, a.data)
    return (np.where(node.saved, 0.0, g / safe),)


def softmax_rows(a: Tensor) -> Tensor:
    if not np.all(np.isfinite(a.data)):
        raise ContractError("softmax_rows: non-finite input")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    return _emit("softmax_rows", (a,), e / e.sum(axis=1, keepdims=True))


@_rule("softmax_rows")
def _softmax_rows_back(g, node):
    s = node.output.data
    return (s * (g - (g * s).sum(axis=1, keepdims=True)),)


def log_softmax_rows(a: Tensor) -> Tensor:
    if not np.all(np.isfinite(a.data)):
        raise ContractError("log_softmax_rows: non-finite input")
    z = a.data - a.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return _emit("log_softmax_rows", (a,), out)


@_rule("log_softmax_rows")
def _log_softmax_rows_back(g, node):
    s = np.exp(node.output.data)
    return (g - s * g.sum(axis=1, keepdims=True),)


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    clamped = norms <= EPS
    safe = np.where(clamped, EPS, norms)
    return x / safe, safe, clamped


def cosine_rows(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise row cosine similarity, ``m x n``.

    Row norms below ``EPS`` are clamped to ``EPS`` so zero rows give 0
    similarity instead of NaN.
    """
    if a.cols != b.cols:
        raise DimensionError(f"cosine_rows: widths disagree, {a.shape} vs {b.shape}")
    ua, na, ca = _unit_rows(a.data)
    ub, nb, cb = _unit_rows(b.data)
    return _emit("cosine_rows", (a, b), ua @ ub.T, (ua, na, ca, ub, nb, cb))


def _unit_rows_back(gu: np.ndarray, u: np.ndarray, n: np.ndarray, clamped: np.ndarray) -> np.ndarray:
    radial = np.where(clamped, 0.0, (gu * u).sum(axis=1, keepdims=True))
    return (gu - u * radial) / n


@_rule("cosine_rows")
def _cosine_rows_back(g, node):
    ua, na, ca, ub, nb, cb = node.saved
    return _unit_rows_back(g @ ub, ua, na, ca), _unit_rows_back(g.T @ ua, ub, nb, cb)


def layer_norm_rows(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Per-row standardisation then ``* gain + bias`` (both 1 x cols)."""
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise DimensionError(
            f"layer_norm_rows: gain/bias must be (1, {x.cols}), got {gain.shape}, {bias.shape}"
        )
    inv_n = 1.0 / x.cols
    xc = x.data - x.data.sum(axis=1, keepdims=True) * inv_n
    inv = 1.0 / np.sqrt((xc * xc).sum(axis=1, keepdims=True) * inv_n + LN_EPS)
    xhat = xc * inv
    return _emit("layer_norm_rows", (x, gain, bias), xhat * gain.data + bias.data, (xhat, inv))


@_rule("layer_norm_rows")
def _layer_norm_rows_back(g, node):
    x, gain, _ = node.inputs
    xhat, inv = node.saved
    inv_n = 1.0 / x.cols
    gx_hat = g * gain.data
    gx = inv * (
        gx_hat
        - gx_hat.sum(axis=1, keepdims=True) * inv_n
        - xhat * ((gx_hat * xhat).sum(axis=1, keepdims=True) * inv_n)
    )
    ggain = (g * xhat).sum(axis=0, keepdims=True)
    gbias = g.sum(axis=0, keepdims=True)
    return gx, ggain, gbias


def grouped_linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row ``n`` of ``x`` through its own affine map: ``out[n] = x[n] @ W_n + b[n]``.

    ``w`` stacks the N blocks vertically, ``(N * d_in) x d_out``; ``b`` is ``N x d_out``.
    """
    n, d_in = x.shape
    if w.rows != n * d_in or b.shape != (n, w.cols):
        raise DimensionError(f"grouped_linear: x {x.shape}, w {w.shape}, b {b.shape}")
    w3 = w.data.reshape(n, d_in, w.cols)
    out = np.matmul(x.data[:, None, :], w3)[:, 0, :] + b.data
    return _emit("grouped_linear", (x, w, b), out, w3)


@_rule("grouped_linear")
def _grouped_linear_back(g, node):
    x, w, _ = node.inputs
    w3 = node.saved
    gx = np.matmul(w3, g[:, :, None])[:, :, 0] if _live(x) else None
    gw = (x.data[:, :, None] * g[:, None, :]).reshape(w.shape) if _live(w) else None
    return gx, gw, g
