"""Reverse-mode differentiation over dense float64 arrays.

Every primitive builds a ``Tensor`` node holding its forward value and a
vector-Jacobian product closure. ``backward`` walks the recorded DAG in
reverse topological order. Values are plain ``numpy`` arrays; the node
wrapper only adds the bookkeeping needed to differentiate.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NumericOverflowError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


class ShapeError(ValueError):
    pass


VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "parents", "vjp", "op", "requires_grad", "name")

    def __init__(self, data, parents: tuple["Tensor", ...] = (), vjp: VJP | None = None,
                 op: str = "leaf", requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericOverflowError(f"non-finite value produced by '{op}'")
        self.data = arr
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return add(self, neg(as_tensor(other)))
    def __rsub__(self, other): return add(other, neg(self))
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __pow__(self, p: float): return power(self, p)
    def __truediv__(self, other): return mul(self, power(as_tensor(other), -1.0))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _not_scalar(t: Tensor):
    raise ShapeError(f"expected a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def leaf(data, name: str | None = None, requires_grad: bool = True) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


# ----------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return Tensor(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return Tensor(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                  "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return Tensor(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    with np.errstate(all="ignore"):
        out = np.power(a.data, p)

    def vjp(g):
        return (g * p * np.power(a.data, p - 1.0),)

    return Tensor(out, (a,), vjp, "power")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return Tensor(out, (a,), lambda g: (g / a.data,), "log")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign to keep exp() from overflowing
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def absolute(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    return Tensor(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def sum(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp, "sum")


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis, keepdims), 1.0 / n)


def l1_norm(a: Tensor) -> Tensor:
    return Tensor(np.abs(a.data).sum(), (a,), lambda g: (g * np.sign(a.data),), "l1_norm")


def l2_norm_sq(a: Tensor) -> Tensor:
    return Tensor(np.sum(a.data * a.data), (a,), lambda g: (2.0 * g * a.data,), "l2_norm_sq")


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm; the subgradient at the origin is taken as zero."""
    m = float(np.max(np.abs(a.data))) if a.data.size else 0.0
    # scale first so tiny or huge entries neither underflow nor overflow
    n = m * float(np.sqrt(np.sum((a.data / m) ** 2))) if m > 0 else 0.0

    def vjp(g):
        if n == 0.0:
            return (np.zeros_like(a.data),)
        return (g * a.data / n,)

    return Tensor(n, (a,), vjp, "l2_norm")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from exc
    return Tensor(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return Tensor(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data.copy(), op="const")


def custom(a: Tensor, forward: np.ndarray, vjp: VJP, op: str) -> Tensor:
    """Wrap an arbitrary forward value with a user-supplied backward rule."""
    return Tensor(forward, (a,), vjp, op)


def binarize_ste(a: Tensor, threshold: float = 0.5) -> Tensor:
    """1 where ``a > threshold`` else 0, with a straight-through backward pass."""
    return custom(a, (a.data > threshold).astype(np.float64), lambda g: (g,), "binarize_ste")


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def vjp(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds, bounds[1:]))

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), parts, vjp, "concat")


def exclusive_binarize_ste(a: Tensor, threshold: float = 0.5) -> Tensor:
    """Per-position one-hot over axis 0, straight-through on the way back.

    At every position the largest entry along axis 0 wins (lowest index on
    ties) and is set to 1 only if it exceeds ``threshold``.
    """
    winner = np.argmax(a.data, axis=0)
    onehot = np.zeros_like(a.data)
    np.put_along_axis(onehot, winner[None], 1.0, axis=0)
    onehot *= (np.max(a.data, axis=0) > threshold)[None]
    return custom(a, onehot, lambda g: (g,), "exclusive_binarize_ste")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1, same-padded 2-D cross-correlation.

    ``x`` is (N, C, H, W), ``w`` is (F, C, k, k) with odd k, ``b`` is (F,).
    Patches are extracted im2col-style so the forward is one matmul.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, cw, k, k2 = w.shape
    if cw != c or k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: kernel {w.shape} incompatible with input {x.shape}")
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    # (N, C, H, W, k, k) -> (N, H, W, C, k, k) -> (N*H*W, C*k*k)
    cols = sliding_window_view(xp, (k, k), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5)
    cols = cols.reshape(n * h * wd, c * k * k)
    wmat = w.data.reshape(f, c * k * k)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape(n, h, wd, f).transpose(0, 3, 1, 2)

    def vjp(g):
        gflat = g.transpose(0, 2, 3, 1).reshape(n * h * wd, f)
        gw = (gflat.T @ cols).reshape(w.shape)
        gcols = (gflat @ wmat).reshape(n, h, wd, c, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + h, j:j + wd] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p:p + h, p:p + wd]
        if b is None:
            return gx, gw
        return gx, gw, gflat.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out, parents, vjp, "conv2d")


# ----------------------------------------------------------------------------
# reverse pass


def _toposort(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(output: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a single-element ``output`` w.r.t. each tensor in ``wrt``.

    Leaves that ``output`` does not depend on get zero gradients.
    """
    if output.size != 1:
        raise ShapeError(f"gradient requires a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(_toposort(output)):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
    out = []
    for t in wrt:
        g = grads.get(id(t))
        out.append(np.zeros_like(t.data) if g is None else np.asarray(g, dtype=np.float64).reshape(t.shape))
    return out
