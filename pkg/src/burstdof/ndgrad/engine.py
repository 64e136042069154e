"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Values are float64 numpy arrays. Ops executed inside a `with Tape():` block
append backward rules in creation order; `tape.backward(loss)` replays them
in reverse, accumulating gradients additively into `.grad` of every tensor
that requires them. Creation order is a topological order of the DAG, so
each record runs exactly once.

Elementwise ops support equal shapes or a scalar (0-d / python number)
operand; there is no general broadcasting. Every op output (and, during
backward, every gradient) is checked for non-finite values while finite
checks are enabled (the default).
"""

from __future__ import annotations

import threading

import numpy as np
from scipy.special import expit

_STATE = threading.local()


class NonFiniteError(FloatingPointError):
    """An op produced NaN or infinity."""


def _tape_stack() -> list:
    if not hasattr(_STATE, "stack"):
        _STATE.stack = []
    return _STATE.stack


def current_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle NaN/inf checking after every op; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def _check_finite(arr: np.ndarray, op_name: str) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {op_name}")


class Tensor:
    """A float64 array plus optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars are allowed on either side
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


class Tape:
    """Ordered op records; backward visits each exactly once in reverse."""

    def __init__(self):
        self._records: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tape_stack().pop()
        assert popped is self, "tapes must unwind in LIFO order"

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, backward_fn) -> None:
        out.node_id = len(self._records)
        self._records.append((out, backward_fn))

    def backward(self, root: Tensor) -> None:
        """Seed root.grad with ones and propagate to all tracked inputs."""
        if not root.requires_grad:
            raise ValueError("backward root does not require gradients")
        root.grad = np.ones_like(root.data)
        for out, backward_fn in reversed(self._records):
            if out.grad is None:
                continue
            backward_fn(out.grad)


class no_grad:
    """Context that suspends recording on the active tape."""

    def __enter__(self):
        _tape_stack().append(None)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    _check_finite(g, "backward")
    t.grad = g if t.grad is None else t.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn, name: str) -> Tensor:
    _check_finite(data, name)
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    tape = current_tape()
    if tape is not None and out.requires_grad:
        tape._record(out, backward_fn)
    return out


def _binary_shapes(a: Tensor, b: Tensor, name: str) -> None:
    if a.data.shape != b.data.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ValueError(f"{name}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # gradient for a scalar operand of an elementwise op
    return g if g.shape == shape else np.asarray(g.sum(), dtype=np.float64).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")

    def backward(g):
        _accumulate(a, _reduce_to(g, a.data.shape))
        _accumulate(b, _reduce_to(g, b.data.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")

    def backward(g):
        _accumulate(a, _reduce_to(g, a.data.shape))
        _accumulate(b, _reduce_to(-g, b.data.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")

    def backward(g):
        _accumulate(a, _reduce_to(g * b.data, a.data.shape))
        _accumulate(b, _reduce_to(g * a.data, b.data.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "div")

    def backward(g):
        _accumulate(a, _reduce_to(g / b.data, a.data.shape))
        _accumulate(b, _reduce_to(-g * a.data / (b.data * b.data), b.data.shape))

    return _result(a.data / b.data, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, -g)

    return _result(-a.data, (a,), backward, "neg")


def abs_(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return _result(np.abs(a.data), (a,), backward, "abs")


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias [C] to a feature map [N, C, H, W]."""
    x, bias = _as_tensor(x), _as_tensor(bias)
    if x.data.ndim != 4 or bias.data.shape != (x.data.shape[1],):
        raise ValueError(
            f"add_bias: expected [N,C,H,W] and [C], got {x.data.shape} and {bias.data.shape}"
        )

    def backward(g):
        _accumulate(x, g)
        _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return _result(x.data + bias.data[None, :, None, None], (x, bias), backward, "add_bias")


def sum_all(a) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _result(np.asarray(a.data.sum()), (a,), backward, "sum")


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def backward(g):
        _accumulate(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _result(np.asarray(a.data.mean()), (a,), backward, "mean")


def sum_axis(a, axis: int, keepdims: bool = True) -> Tensor:
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"sum_axis: axis {axis} out of range for shape {a.data.shape}")

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum_axis")


def concat(a, b, axis: int) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != b.data.ndim:
        raise ValueError("concat: rank mismatch")
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"concat: axis {axis} out of range for shape {a.data.shape}")
    split = a.data.shape[axis]

    def backward(g):
        ga, gb = np.split(g, [split], axis=axis)
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _result(np.concatenate([a.data, b.data], axis=axis), (a, b), backward, "concat")


def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = _as_tensor(a)
    factor = np.where(a.data >= 0, 1.0, slope)

    def backward(g):
        _accumulate(a, g * factor)

    return _result(a.data * factor, (a,), backward, "leaky_relu")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = expit(a.data)

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _result(y, (a,), backward, "sigmoid")


def softmax(a, axis: int) -> Tensor:
    a = _as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"softmax: axis {axis} out of range for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, y * (g - inner))

    return _result(y, (a,), backward, "softmax")


def l1_loss(a, b) -> Tensor:
    """Mean absolute difference, as a scalar tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"l1_loss: shape mismatch {a.data.shape} vs {b.data.shape}")
    return mean_all(abs_(sub(a, b)))
