"""Dense float64 tensors with reverse-mode gradients.

Every differentiable operation records a node on an implicit tape (nodes
carry monotonically increasing creation ids); ``backward`` replays the tape
in reverse creation order. All forward results are validated to be finite,
and reductions rely on numpy's fixed deterministic ordering so identical
inputs give bitwise-identical outputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    DegenerateInputError,
    EvaluationError,
    MissingGradientError,
    ShapeError,
)

__all__ = [
    "Tensor",
    "GradCheckReport",
    "add",
    "sub",
    "mul",
    "scale",
    "power",
    "matmul",
    "transpose",
    "reshape",
    "relu",
    "exp",
    "log",
    "softmax",
    "log_softmax",
    "l2_normalize",
    "tensor_sum",
    "tensor_mean",
    "conv2d",
    "backward",
    "sgd_step",
    "grad_check",
]

_TAPE_COUNTER = itertools.count()


def _as_array(data) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if any(dim <= 0 for dim in arr.shape):
        raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
    return arr


class Tensor:
    """A contiguous float64 array with an optional gradient buffer.

    Tensors are immutable once created; only ``sgd_step`` (and the
    finite-difference harness) mutate ``data`` in place.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_tape_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        if not np.all(np.isfinite(self.data)):
            raise EvaluationError("tensor initialised with non-finite values")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._tape_id = next(_TAPE_COUNTER)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A gradient-free view sharing this tensor's data."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
        out._tape_id = next(_TAPE_COUNTER)
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Convenience operators; the module-level functions are the primary API.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], None],
    op_name: str,
) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise EvaluationError(f"{op_name} produced a non-finite result")
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data, dtype=np.float64)
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    out._tape_id = next(_TAPE_COUNTER)
    return out


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / broadcasting ops


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make_result(data, (a, b), backward_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make_result(data, (a, b), backward_fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make_result(data, (a, b), backward_fn, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    data = x.data * factor

    def backward_fn(g):
        _accumulate(x, g * factor)

    return _make_result(data, (x,), backward_fn, "scale")


def power(x: Tensor, exponent: float) -> Tensor:
    """Elementwise ``x ** exponent`` for a fixed scalar exponent (x >= 0)."""
    exponent = float(exponent)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        data = np.power(x.data, exponent)

    def backward_fn(g):
        if exponent == 0.0:
            return
        if exponent == 1.0:
            _accumulate(x, g)
            return
        _accumulate(x, g * exponent * np.power(x.data, exponent - 1.0))

    return _make_result(data, (x,), backward_fn, "power")


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)

    def backward_fn(g):
        _accumulate(x, g * (x.data > 0.0))

    return _make_result(data, (x,), backward_fn, "relu")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        data = np.exp(x.data)

    def backward_fn(g):
        _accumulate(x, g * data)

    return _make_result(data, (x,), backward_fn, "exp")


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(x.data)

    def backward_fn(g):
        _accumulate(x, g / x.data)

    return _make_result(data, (x,), backward_fn, "log")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backward_fn(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make_result(data, (a, b), backward_fn, "matmul")


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")
    data = x.data.T

    def backward_fn(g):
        _accumulate(x, g.T)

    return _make_result(data, (x,), backward_fn, "transpose")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = x.data.reshape(shape)

    def backward_fn(g):
        _accumulate(x, g.reshape(x.shape))

    return _make_result(data, (x,), backward_fn, "reshape")


# ---------------------------------------------------------------------------
# reductions and normalisations


def tensor_sum(x: Tensor, axis: int | None = None) -> Tensor:
    data = np.sum(x.data, axis=axis)

    def backward_fn(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.shape).copy())
        else:
            _accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())

    return _make_result(np.asarray(data), (x,), backward_fn, "sum")


def tensor_mean(x: Tensor, axis: int | None = None) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return scale(tensor_sum(x, axis=axis), 1.0 / count)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (row max subtracted)."""
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        inner = np.sum(g * data, axis=axis, keepdims=True)
        _accumulate(x, data * (g - inner))

    return _make_result(data, (x,), backward_fn, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    data = shifted - lse

    def backward_fn(g):
        p = np.exp(data)
        _accumulate(x, g - p * np.sum(g, axis=axis, keepdims=True))

    return _make_result(data, (x,), backward_fn, "log_softmax")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm.

    Raises ``DegenerateInputError`` on a zero-norm slice; there is no
    silent epsilon.
    """
    norms = np.linalg.norm(x.data, axis=axis, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("l2_normalize received a zero-norm row")
    data = x.data / norms

    def backward_fn(g):
        inner = np.sum(g * data, axis=axis, keepdims=True)
        _accumulate(x, (g - data * inner) / norms)

    return _make_result(data, (x,), backward_fn, "l2_normalize")


# ---------------------------------------------------------------------------
# convolution (used by the image-mode feature extractor)


def _im2col(x: np.ndarray, k: int, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    n, c, h, w = x.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv2d output collapsed for input {x.shape} with kernel {k}")
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((n, c, k, k, oh, ow), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = padded[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * k * k, oh * ow), oh, ow


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """2-D convolution; x is (N, C, H, W), weight is (out_ch, C, k, k), bias (out_ch,)."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d expects (N, C, H, W) input, got {x.shape}")
    out_ch, in_ch, k, k2 = weight.shape
    if k != k2:
        raise ShapeError(f"conv2d kernel must be square, got {weight.shape}")
    if in_ch != x.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    n = x.shape[0]
    cols, oh, ow = _im2col(x.data, k, stride, padding)
    w_mat = weight.data.reshape(out_ch, in_ch * k * k)
    data = np.einsum("of,nfp->nop", w_mat, cols).reshape(n, out_ch, oh, ow)
    data += bias.data.reshape(1, out_ch, 1, 1)

    def backward_fn(g):
        g_mat = g.reshape(n, out_ch, oh * ow)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if weight.requires_grad:
            gw = np.einsum("nop,nfp->of", g_mat, cols)
            _accumulate(weight, gw.reshape(weight.shape))
        if x.requires_grad:
            gcols = np.einsum("of,nop->nfp", w_mat, g_mat)
            gcols = gcols.reshape(n, in_ch, k, k, oh, ow)
            h, w = x.shape[2], x.shape[3]
            gpad = np.zeros((n, in_ch, h + 2 * padding, w + 2 * padding), dtype=np.float64)
            for i in range(k):
                for j in range(k):
                    gpad[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, i, j]
            if padding:
                gpad = gpad[:, :, padding:-padding, padding:-padding]
            _accumulate(x, gpad)

    return _make_result(data, (x, weight, bias), backward_fn, "conv2d")


# ---------------------------------------------------------------------------
# backward pass, parameter updates, verification


def backward(output: Tensor) -> None:
    """Propagate gradients from a scalar output back through the tape."""
    if output.data.size != 1:
        raise ShapeError(f"backward expects a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise MissingGradientError("backward called on a tensor with no gradient path")

    nodes: list[Tensor] = []
    seen: set[int] = set()
    stack = [output]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(node._parents)

    output.grad = np.ones_like(output.data)
    for node in sorted(nodes, key=lambda t: t._tape_id, reverse=True):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def sgd_step(params: Iterable[Tensor], learning_rate: float) -> None:
    """Apply ``p <- p - lr * grad(p)`` to every parameter, then clear gradients.

    Raises ``MissingGradientError`` if any parameter has no populated gradient.
    """
    if learning_rate < 0:
        raise ValueError(f"learning rate must be nonnegative, got {learning_rate}")
    params = list(params)
    for p in params:
        if p.grad is None:
            raise MissingGradientError("sgd_step called on a parameter with no gradient")
    for p in params:
        p.data -= learning_rate * p.grad
        p.grad = None


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients to central finite differences."""

    max_relative_error: float
    per_parameter_errors: list[tuple[str, float]] = field(default_factory=list)
    passed: bool = False
    tolerance: float = 1e-4


def grad_check(
    function: Callable,
    point: Tensor | Mapping[str, Tensor],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Verify analytic gradients of ``function`` at ``point`` against central differences.

    ``function`` receives ``point`` unchanged and must return a scalar Tensor.
    ``point`` is either a single Tensor or a name->Tensor mapping; every
    coordinate of every tensor is perturbed by +/- epsilon. Relative errors
    use the denominator max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    params: dict[str, Tensor] = {"x": point} if isinstance(point, Tensor) else dict(point)
    for name, t in params.items():
        if not t.requires_grad:
            raise ValueError(f"grad_check parameter {name!r} does not require gradients")
        t.zero_grad()

    out = function(point)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ValueError("grad_check function must return a scalar Tensor")
    backward(out)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }

    per_parameter: list[tuple[str, float]] = []
    for name, t in params.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            f_plus = function(point).item()
            flat[i] = original - epsilon
            f_minus = function(point).item()
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
        per_parameter.append((name, worst))

    for t in params.values():
        t.zero_grad()
    max_err = max(err for _, err in per_parameter)
    return GradCheckReport(
        max_relative_error=max_err,
        per_parameter_errors=per_parameter,
        passed=max_err <= tolerance,
        tolerance=tolerance,
    )
