"""Dense reverse-mode automatic differentiation on top of numpy.

Every operation builds a fresh node eagerly; ``Tensor.backward`` walks the
graph once in reverse topological order. Gradients are accumulated only on
leaves, so calling ``backward`` twice on the same graph without zeroing
gives exactly twice the gradient.

Shapes follow numpy broadcasting. ``matmul`` accepts stacked matrices
(``(..., m, k) @ (..., k, n)``), which is what lets a whole padded batch of
graphs go through a GNN layer in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray
_BackwardFn = Callable[[Array], Sequence["Array | None"]]


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: "Tensor", b: "Tensor", op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


class Tensor:
    """A node in the computation graph holding a float64 array.

    Tensors built by the user are leaves. Pass ``requires_grad=True`` for
    leaves whose gradient you want; results of operations inherit the flag
    from their inputs.
    """

    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: _BackwardFn | None = None
        self.op = "leaf"

    @classmethod
    def _from_op(cls, data: Array, parents: tuple["Tensor", ...], backward: _BackwardFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out._grad = None
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        out.op = op
        return out

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> Array:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> Array:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self._grad = None

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out._grad = None
        out._parents = ()
        out._backward = None
        out.op = "leaf"
        return out

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # -- operators -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    # -- reverse pass ----------------------------------------------------

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` leaf."""
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        pending: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node._grad = g.copy() if node._grad is None else node._grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


TensorLike = "Tensor | Array | float"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise binary ------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        )

    return Tensor._from_op(out, (a, b), backward, "div")


# -- elementwise unary -------------------------------------------------------


def _unary(x: Tensor, value: Array, local_grad: Callable[[], Array], op: str) -> Tensor:
    return Tensor._from_op(value, (x,), lambda g: (g * local_grad(),), op)


def absolute(x) -> Tensor:
    x = as_tensor(x)
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return _unary(x, np.abs(x.data), lambda: np.sign(x.data), "abs")


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    p = float(p)

    def local():
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p * np.power(x.data, p - 1.0)
        return np.where(x.data == 0.0, 0.0 if p != 1.0 else 1.0, d)

    return _unary(x, np.power(x.data, p), local, f"pow{p:g}")


def relu(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.maximum(x.data, 0.0), lambda: (x.data > 0.0).astype(np.float64), "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _unary(x, s, lambda: s * (1.0 - s), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _unary(x, t, lambda: 1.0 - t * t, "tanh")


def exp(x) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data)
    return _unary(x, e, lambda: e, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.log(x.data), lambda: 1.0 / x.data, "log")


# -- linear algebra and shape ------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 dims, got {x.shape}")
    return Tensor._from_op(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def permute_rows(x, order: Array) -> Tensor:
    """Reorder axis -2 by ``order`` (a permutation, one per leading batch index)."""
    x = as_tensor(x)
    order = np.asarray(order, dtype=np.int64)
    if x.ndim < 2 or order.shape != x.shape[:-1]:
        raise DimensionError(f"row order of shape {order.shape} does not fit tensor {x.shape}")
    idx = order[..., None]
    inverse = np.argsort(order, axis=-1)[..., None]
    out = np.take_along_axis(x.data, idx, axis=-2)
    return Tensor._from_op(out, (x,), lambda g: (np.take_along_axis(g, inverse, axis=-2),), "permute_rows")


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


# -- reductions --------------------------------------------------------------


def _check_axis(x: Tensor, axis) -> tuple[int, ...] | None:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
    norm = []
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise DimensionError(f"axis {ax} out of range for shape {x.shape}")
        norm.append(ax % x.ndim)
    return tuple(norm)


def _expand(g: Array, x: Tensor, axes, keepdims: bool) -> Array:
    if axes is None:
        return np.broadcast_to(g.reshape((1,) * x.ndim) if x.ndim else g, x.shape)
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, x.shape)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    axes = _check_axis(x, axis)
    out = np.asarray(x.data.sum(axis=axes, keepdims=keepdims))
    return Tensor._from_op(out, (x,), lambda g: (_expand(g, x, axes, keepdims),), "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _check_axis(x, axis)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    out = np.asarray(x.data.mean(axis=axes, keepdims=keepdims))
    return Tensor._from_op(out, (x,), lambda g: (_expand(g, x, axes, keepdims) / count,), "mean")


def l2_norm(x, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm. A zero vector has norm 0 and passes back zero gradient."""
    x = as_tensor(x)
    axes = _check_axis(x, axis)
    norm = np.sqrt(np.square(x.data).sum(axis=axes, keepdims=True))

    def backward(g):
        ge = _expand(g, x, axes, keepdims)
        safe = np.where(norm > 0.0, norm, 1.0)
        return (np.where(norm > 0.0, ge * x.data / safe, 0.0),)

    out = norm if keepdims else np.asarray(norm.squeeze(axis=axes) if axes is not None else norm.reshape(()))
    return Tensor._from_op(out, (x,), backward, "l2_norm")


# -- losses ------------------------------------------------------------------


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of ``(B, C)`` logits against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy expects (B, C) logits and (B,) labels, got {logits.shape}, {labels.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(labels.size)
    loss = -log_probs[rows, labels].mean()

    def backward(g):
        probs = np.exp(log_probs)
        probs[rows, labels] -= 1.0
        return (g * probs / labels.size,)

    return Tensor._from_op(np.asarray(loss), (logits,), backward, "cross_entropy")


def softmax(scores: Array) -> Array:
    """Row-wise softmax on plain arrays (no graph)."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# -- optimizers --------------------------------------------------------------


def _check_pairs(params: Sequence[Array], grads: Sequence[Array]) -> None:
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} params but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise DimensionError(f"param shape {np.shape(p)} != grad shape {np.shape(g)}")


def sgd_step(params: Sequence[Array], grads: Sequence[Array], lr: float) -> list[Array]:
    """Return ``p - lr * g`` for each pair; inputs are left untouched."""
    _check_pairs(params, grads)
    return [np.asarray(p, dtype=np.float64) - lr * np.asarray(g, dtype=np.float64) for p, g in zip(params, grads)]


@dataclass
class AdamState:
    first: list[Array]
    second: list[Array]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Iterable[Array]) -> "AdamState":
        params = [np.asarray(p, dtype=np.float64) for p in params]
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    state: AdamState,
    params: Sequence[Array],
    grads: Sequence[Array],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[Array], AdamState]:
    """One bias-corrected Adam update. Returns new params and a new state."""
    _check_pairs(params, grads)
    _check_pairs(state.first, params)
    t = state.step + 1
    new_params, first, second = [], [], []
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        first.append(m)
        second.append(v)
    return new_params, AdamState(first, second, t)


@dataclass
class Adam:
    """Stateful wrapper over :func:`adam_step` for a list of leaf tensors."""

    params: list[Tensor]
    lr: float = 1e-3
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.state = AdamState.zeros_like(p.data for p in self.params)

    def step(self) -> None:
        new, self.state = adam_step(self.state, [p.data for p in self.params], [p.grad for p in self.params], self.lr)
        for p, value in zip(self.params, new):
            p.data = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
