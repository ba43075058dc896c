"""Dense tensors with a reverse-mode gradient tape.

The forecasting model needs a small, fixed set of array operations, so the
tape records exactly those and nothing else.  Every value is float64: the
finite-difference gradient checks need the headroom, and at desk scale the
storage savings of float32 are irrelevant.

A tape is single-writer: one forward pass records onto it, one backward()
consumes it.  Tensors are immutable once created and may be shared freely
(parameters are plain leaf tensors reused across many tapes; their .grad
accumulates across backward calls until an optimizer clears it).
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """A value or gradient stopped being finite."""


def _check_finite(arr: np.ndarray, where: str) -> None:
    # One reduction instead of isfinite().all(): any NaN/Inf entry makes the
    # sum non-finite (desk-scale magnitudes cannot overflow a float64 sum).
    if not math.isfinite(arr.sum()):
        raise NumericError(f"non-finite values produced by {where}")


# Per-thread stack of active tapes, so concurrent forward passes never
# record onto each other's tape.
_LOCAL = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = _LOCAL.stack = []
    return stack


class Tensor:
    """A dense float64 array, optionally recorded on the active tape."""

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        _check_finite(self.data, "tensor constructor")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # Convenience arithmetic; scalars multiply, tensors combine elementwise.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of one forward pass, consumed by one backward pass."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    @property
    def nodes(self) -> list[Tensor]:
        return self._nodes

    def reset(self) -> None:
        """Discard the recorded pass so the tape can record a fresh one."""
        self._nodes.clear()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        """Reverse-accumulate d(loss)/d(node) for every recorded node.

        Leaf tensors with requires_grad=True receive (accumulate into) their
        .grad; constant leaves are skipped.  The loss must be a scalar node
        recorded on this tape.  A second backward without reset() is an
        error, matching the single-writer contract.
        """
        if self._consumed:
            raise RuntimeError("backward already ran on this tape; call reset() first")
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise ValueError(f"loss must be a scalar tensor, got shape {getattr(loss, 'shape', None)}")
        if not any(loss is n for n in self._nodes):
            raise ValueError("loss is not a node recorded on this tape")
        self._consumed = True

        for node in self._nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.data)

        for node in reversed(self._nodes):
            if node._vjp is None or node.grad is None:
                continue  # leaf, or not reachable from the loss
            contributions = node._vjp(node.grad)
            for parent, g in zip(node.parents, contributions):
                if g is None:
                    continue
                _check_finite(g, f"backward of {node.op}")
                if parent._vjp is None and not parent.requires_grad:
                    continue  # constant leaf, gradient not wanted
                if parent.grad is None:
                    parent.grad = np.array(g)  # copy: g may alias another grad
                else:
                    parent.grad += g

        for node in self._nodes:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)


def _record(data: np.ndarray, op: str, parents: tuple[Tensor, ...], vjp) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    out.op = op
    out.parents = parents
    out._vjp = vjp
    stack = _tape_stack()
    if stack:
        stack[-1]._nodes.append(out)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(t: Tensor) -> bool:
    return t._vjp is not None or t.requires_grad


# ---------------------------------------------------------------------------
# Operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    need_a, need_b = _tracked(a), _tracked(b)

    def vjp(g):
        return (g @ b.data.T if need_a else None,
                a.data.T @ g if need_b else None)

    return _record(a.data @ b.data, "matmul", (a, b), vjp)


def sparse_matmul(sp_mat, x: Tensor, sp_mat_t=None) -> Tensor:
    """Product of a constant scipy sparse matrix with a dense tensor.

    The sparse operand carries no gradient.  Pass the precomputed transpose
    when available; otherwise it is formed on demand in the backward pass.
    """
    x = as_tensor(x)
    if x.data.ndim != 2 or sp_mat.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_matmul: cannot multiply {sp_mat.shape} by {x.shape}")

    def vjp(g):
        t = sp_mat_t if sp_mat_t is not None else sp_mat.T
        return (t @ g,)

    return _record(np.asarray(sp_mat @ x.data), "sparse_matmul", (x,), vjp)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    need_a, need_b = _tracked(a), _tracked(b)

    def vjp(g):
        return (g * b.data if need_a else None,
                g * a.data if need_b else None)

    return _record(a.data * b.data, "hadamard", (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-D row bias against a 2-D tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _record(a.data + b.data, "add", (a, b), lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _record(a.data + b.data, "add_bias", (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ")
    return _record(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.data * c, "scale", (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    # Subgradient at 0 is 0: the mask is strict.
    a = as_tensor(a)
    return _record(np.maximum(a.data, 0.0), "relu", (a,), lambda g: (g * (a.data > 0),))


def absolute(a: Tensor) -> Tensor:
    # sign(0) = 0 gives the subgradient-0 tie rule used by the MAE loss.
    a = as_tensor(a)
    return _record(np.abs(a.data), "absolute", (a,), lambda g: (g * np.sign(a.data),))


def mean_all(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (np.full(a.shape, float(g) / a.size),)

    return _record(np.asarray(a.data.mean()), "mean_all", (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _record(np.asarray(a.data.sum()), "sum_all", (a,), lambda g: (np.full(a.shape, float(g)),))


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _record(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: shapes {a.shape} and {b.shape} do not stack")
    split = a.shape[1]

    def vjp(g):
        return g[:, :split], g[:, split:]

    return _record(np.concatenate([a.data, b.data], axis=1), "concat_cols", (a, b), vjp)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if not (0 <= start <= stop <= a.shape[0]):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {a.shape}")

    def vjp(g):
        z = np.zeros_like(a.data)
        z[start:stop] = g
        return (z,)

    return _record(a.data[start:stop].copy(), "slice_rows", (a,), vjp)


def tile_rows(a: Tensor, reps: int) -> Tensor:
    """Vertically stack `reps` copies of a matrix: [a; a; ...; a]."""
    a = as_tensor(a)
    n, d = a.shape

    def vjp(g):
        return (g.reshape(reps, n, d).sum(axis=0),)

    return _record(np.tile(a.data, (reps, 1)), "tile_rows", (a,), vjp)


def repeat_rows(a: Tensor, reps: int) -> Tensor:
    """Repeat each row `reps` times consecutively."""
    a = as_tensor(a)
    n, d = a.shape

    def vjp(g):
        return (g.reshape(n, reps, d).sum(axis=1),)

    return _record(np.repeat(a.data, reps, axis=0), "repeat_rows", (a,), vjp)


def window_max_rows(a: Tensor, window: int, t_steps: int, n_nodes: int) -> Tensor:
    """Per-node elementwise max over non-overlapping windows of time steps.

    The input is time-major with t_steps blocks of n_nodes rows; the output
    has t_steps// window blocks.  Gradient flows to the earliest maximizer
    in each window (argmax tie rule), which keeps backward deterministic.
    """
    a = as_tensor(a)
    if t_steps % window != 0:
        raise ShapeError(f"window_max_rows: window {window} does not divide {t_steps} steps")
    if a.shape[0] != t_steps * n_nodes:
        raise ShapeError(f"window_max_rows: expected {t_steps * n_nodes} rows, got {a.shape[0]}")
    k = t_steps // window
    d = a.shape[1]
    blocks = a.data.reshape(k, window, n_nodes, d)

    def vjp(g):
        idx = blocks.argmax(axis=1)
        z = np.zeros_like(blocks)
        np.put_along_axis(z, idx[:, None], g.reshape(k, 1, n_nodes, d), axis=1)
        return (z.reshape(t_steps * n_nodes, d),)

    return _record(blocks.max(axis=1).reshape(k * n_nodes, d), "window_max_rows", (a,), vjp)


def mean_over_time(a: Tensor, t_steps: int, n_nodes: int) -> Tensor:
    """Average a time-major (t_steps*n_nodes, d) matrix down to (n_nodes, d)."""
    a = as_tensor(a)
    if a.shape[0] != t_steps * n_nodes:
        raise ShapeError(f"mean_over_time: expected {t_steps * n_nodes} rows, got {a.shape[0]}")
    d = a.shape[1]

    def vjp(g):
        return (np.tile(g / t_steps, (t_steps, 1)),)

    return _record(a.data.reshape(t_steps, n_nodes, d).mean(axis=0), "mean_over_time", (a,), vjp)


def softmax_vec(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 1:
        raise ShapeError(f"softmax_vec: expected a vector, got shape {a.shape}")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    w = e / e.sum()

    def vjp(g):
        return (w * (g - np.dot(g, w)),)

    return _record(w, "softmax_vec", (a,), vjp)


def linear_combination(xs: Sequence[Tensor], coeffs: Tensor) -> Tensor:
    """Sum of same-shaped tensors weighted by the entries of a vector."""
    xs = [as_tensor(x) for x in xs]
    coeffs = as_tensor(coeffs)
    if coeffs.data.ndim != 1 or len(xs) != coeffs.size:
        raise ShapeError(f"linear_combination: {len(xs)} tensors vs {coeffs.shape} coefficients")
    if any(x.shape != xs[0].shape for x in xs):
        raise ShapeError("linear_combination: tensor shapes differ")
    stack = np.stack([x.data for x in xs])

    def vjp(g):
        grads = [c * g for c in coeffs.data]
        grads.append(np.array([np.sum(g * x.data) for x in xs]))
        return grads

    return _record(np.tensordot(coeffs.data, stack, axes=1), "linear_combination", (*xs, coeffs), vjp)


# ---------------------------------------------------------------------------
# Gradient verification


def finite_difference_check(f, theta: Tensor, h: float = 1e-5) -> float:
    """Compare tape gradients of f against central differences at theta.

    f maps a tensor to a scalar loss tensor and must be deterministic.
    Returns max over coordinates of |analytic - numeric| divided by
    (|analytic| + |numeric| + 1e-12).
    """
    base = np.array(theta.data, copy=True)
    param = Tensor(base, requires_grad=True)
    with Tape() as tape:
        loss = f(param)
    tape.backward(loss)
    analytic = param.grad if param.grad is not None else np.zeros_like(base)

    numeric = np.zeros_like(base)
    for idx in np.ndindex(*base.shape):
        bumped = base.copy()
        bumped[idx] = base[idx] + h
        up = float(f(Tensor(bumped)).data)
        bumped[idx] = base[idx] - h
        down = float(f(Tensor(bumped)).data)
        numeric[idx] = (up - down) / (2.0 * h)

    denom = np.abs(analytic) + np.abs(numeric) + 1e-12
    return float(np.max(np.abs(analytic - numeric) / denom))
