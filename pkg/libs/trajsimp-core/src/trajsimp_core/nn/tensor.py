"""
Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed inside an active ``ComputationTape`` are recorded when any input requires
gradients; outside a tape they run as plain numpy. ``tape.backward(loss)`` replays the record in
exact reverse order and accumulates gradients additively.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Sequence
from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..exceptions import NumericalError, ShapeMismatchError

logger = logging.getLogger(__name__)

MAX_RANK = 3

ArrayLike = np.ndarray | float | int | Sequence[Any]
Backward = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_ACTIVE_TAPE: ContextVar[ComputationTape | None] = ContextVar("trajsimp_tape", default=None)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"Non-finite values produced by {op}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array of rank at most 3 that can take part in differentiation."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str | None = None):
        array = np.array(data, dtype=np.float64)
        if array.ndim > MAX_RANK:
            raise ShapeMismatchError("tensor", array.shape)
        _check_finite(array, name or "tensor")
        self.data = array
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray) -> Tensor:
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.name = None
        return out

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data.copy())

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Tensor | ArrayLike) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return take(self, index)

    # ------------------------------------------------------------------
    # Shape and reductions
    # ------------------------------------------------------------------

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        count = self.size if axis is None else self.shape[axis]
        return reduce_sum(self, axis, keepdims) * (1.0 / count)

    def max(self) -> Tensor:
        return reduce_extreme(self, largest=True)

    def min(self) -> Tensor:
        return reduce_extreme(self, largest=False)

    # ------------------------------------------------------------------
    # Elementwise functions
    # ------------------------------------------------------------------

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def sqrt(self) -> Tensor:
        return power(self, 0.5)

    def sin(self) -> Tensor:
        return sin(self)

    def relu(self) -> Tensor:
        return relu(self)

    def leaky_relu(self, slope: float = 0.2) -> Tensor:
        return leaky_relu(self, slope)

    def elu(self) -> Tensor:
        return elu(self)

    def softmax(self, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
        return softmax(self, axis, mask)

    def logsumexp(self, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
        return logsumexp(self, axis, mask)


class Parameter(Tensor):
    """A trainable tensor; always requires gradients."""

    __slots__ = ()

    def __init__(self, data: ArrayLike, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(value: Tensor | ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ============================================================================
# Tape
# ============================================================================


@dataclass(frozen=True)
class TapeEntry:
    op: str
    output: Tensor
    parents: tuple[Tensor, ...]
    backward: Backward


class GradientMap:
    """Gradients keyed by tensor identity."""

    def __init__(self, grads: dict[int, np.ndarray], tensors: dict[int, Tensor]) -> None:
        self._grads = grads
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        return np.zeros_like(tensor.data) if grad is None else grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def __iter__(self) -> Iterator[Tensor]:
        return (self._tensors[k] for k in self._grads)

    def __len__(self) -> int:
        return len(self._grads)


class ComputationTape:
    """
    Ordered record of primitive ops for one backward pass.

    Use as a context manager; a tape must not be shared between concurrent backward passes.
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self._token: Token[ComputationTape | None] | None = None

    def __enter__(self) -> ComputationTape:
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def backward(self, loss: Tensor) -> GradientMap:
        """
        Gradients of scalar ``loss`` for every recorded tensor that requires them.

        Raises:
            ShapeMismatchError: If ``loss`` is not a scalar.
        """
        if loss.size != 1:
            raise ShapeMismatchError("backward (loss must be scalar)", loss.shape)
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        tensors: dict[int, Tensor] = {id(loss): loss}
        for entry in reversed(self.entries):
            upstream = grads.get(id(entry.output))
            if upstream is None:
                continue
            for parent, grad in zip(entry.parents, entry.backward(upstream), strict=True):
                if grad is None or not parent.requires_grad:
                    continue
                grad = _unbroadcast(grad, parent.shape)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad.copy()
                    tensors[key] = parent
        return GradientMap(grads, tensors)


def backward(tape: ComputationTape, loss: Tensor) -> GradientMap:
    """Reverse-mode gradients of ``loss`` over ``tape``."""
    return tape.backward(loss)


def _make(op: str, data: np.ndarray, parents: tuple[Tensor, ...], grad_fn: Backward) -> Tensor:
    if data.ndim > MAX_RANK:
        raise ShapeMismatchError(op, data.shape)
    _check_finite(data, op)
    out = Tensor._wrap(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(TapeEntry(op=op, output=out, parents=parents, backward=grad_fn))
    return out


# ============================================================================
# Primitive ops
# ============================================================================


def _broadcast_shapes(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatchError(op, a.shape, b.shape) from exc


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("sub", a, b)
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("mul", a, b)
    return _make("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _make(
        "div", out, (a, b), lambda g: (g / b.data, -g * a.data / (b.data * b.data))
    )


def power(a: Tensor, exponent: float) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data**exponent
    return _make(
        "pow", out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1.0),)
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def grad_fn(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _make("matmul", a.data @ b.data, (a, b), grad_fn)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeMismatchError("reshape", a.shape, tuple(shape)) from exc
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    order = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(order))
    return _make("transpose", a.data.transpose(order), (a,), lambda g: (g.transpose(inverse),))


def take(a: Tensor, index: Any) -> Tensor:
    def grad_fn(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make("take", np.array(a.data[index]), (a,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatchError("concat")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatchError("concat", *(t.shape for t in tensors)) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(
        "concat", out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis))
    )


def reduce_sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def grad_fn(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), grad_fn)


def reduce_extreme(a: Tensor, largest: bool) -> Tensor:
    """Global max or min; the gradient is shared equally among tied extremes."""
    value = a.data.max() if largest else a.data.min()
    winners = (a.data == value).astype(np.float64)
    winners /= winners.sum()
    return _make("max" if largest else "min", np.asarray(value), (a,), lambda g: (g * winners,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make("log", out, (a,), lambda g: (g / a.data,))


def sin(a: Tensor) -> Tensor:
    return _make("sin", np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def relu(a: Tensor) -> Tensor:
    return _make("relu", np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope)
    return _make("leaky_relu", a.data * scale, (a,), lambda g: (g * scale,))


def elu(a: Tensor) -> Tensor:
    negative = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, negative)
    return _make("elu", out, (a,), lambda g: (g * np.where(a.data > 0, 1.0, negative + 1.0),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def l2norm(a: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as 0."""
    norm = np.sqrt((a.data * a.data).sum(axis=axis))

    def grad_fn(g: np.ndarray) -> tuple[np.ndarray]:
        safe = np.where(norm > 0, norm, 1.0)
        scale = np.where(norm > 0, g / safe, 0.0)
        return (a.data * np.expand_dims(scale, axis),)

    return _make("l2norm", norm, (a,), grad_fn)


def _masked(a: np.ndarray, mask: np.ndarray | None, axis: int) -> tuple[np.ndarray, np.ndarray]:
    allowed = np.ones(a.shape, dtype=bool) if mask is None else np.broadcast_to(mask, a.shape)
    if not np.all(allowed.any(axis=axis)):
        raise NumericalError("softmax over a fully masked row")
    peak = np.where(allowed, a, -np.inf).max(axis=axis, keepdims=True)
    weights = np.where(allowed, np.exp(np.where(allowed, a - peak, 0.0)), 0.0)
    return weights, peak


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get weight 0."""
    weights, _ = _masked(a.data, mask, axis)
    out = weights / weights.sum(axis=axis, keepdims=True)

    def grad_fn(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", out, (a,), grad_fn)


def logsumexp(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """``log(sum(exp(a)))`` along ``axis`` over the unmasked entries."""
    weights, peak = _masked(a.data, mask, axis)
    total = weights.sum(axis=axis, keepdims=True)
    out = (np.log(total) + peak).squeeze(axis)
    probs = weights / total

    def grad_fn(g: np.ndarray) -> tuple[np.ndarray]:
        return (probs * np.expand_dims(g, axis),)

    return _make("logsumexp", out, (a,), grad_fn)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean cross-entropy of rows of ``logits`` (n, classes) against integer ``targets``."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatchError("cross_entropy", logits.shape, targets.shape)
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -log_probs[rows, targets].mean()

    def grad_fn(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        return (grad * (g / n),)

    return _make("cross_entropy", np.asarray(loss), (logits,), grad_fn)
