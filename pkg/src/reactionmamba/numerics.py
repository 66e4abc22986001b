"""Dense float tensors with reverse-mode automatic differentiation, plus the
layer primitives the architecture is assembled from: linear maps, RMS
normalization, and the gated MLP.

Working precision is float32; float64 is used when verifying gradients
against central finite differences (see grad_check). Any non-finite value
produced by a forward operation raises NumericError immediately.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError, NumericError, ShapeError, UsageError

_ALLOWED = (np.dtype(np.float32), np.dtype(np.float64))


def _check_finite(arr: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite value produced by {context}")


class Tensor:
    """N-dimensional float array with an optional autodiff tape entry.

    A tensor produced by an operation records its parents and a closure that
    scatters the incoming gradient back to them; backward() replays the graph
    in reverse topological order. Tensors are immutable after construction
    except for their grad buffers.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in _ALLOWED:
                arr = arr.astype(np.float32)
        if arr.dtype not in _ALLOWED:
            raise UsageError(f"unsupported dtype {arr.dtype}; use float32 or float64")
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple, backward, context: str) -> "Tensor":
        _check_finite(data, context)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- basic properties ------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff ---------------------------------------------------------------

    def backward(self) -> None:
        """Populate .grad on every reachable requires_grad tensor.

        Only valid from a scalar (single-element) tensor.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ----------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), mul(self, -1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow_(other, -1.0))
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_(self, p)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach grad.shape from shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise and reduction ops --------------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._from_op(out, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if not isinstance(b, Tensor) and np.isscalar(b):
        s = float(b)
        out = a.data * np.asarray(s, dtype=a.dtype)

        def backward_s(g):
            if a.requires_grad:
                a._accumulate(g * s)

        return Tensor._from_op(out, (a,), backward_s, "mul")
    b = _as_tensor(b, a.dtype)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out, (a, b), backward, "mul")


def pow_(a: Tensor, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    with np.errstate(all="ignore"):
        out = a.data ** p

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1.0))

    return Tensor._from_op(out, (a,), backward, "pow")


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(all="ignore"):
        out = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out)

    return Tensor._from_op(out, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(all="ignore"):
        out = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return Tensor._from_op(out, (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    """Square root whose gradient is defined as 0 at exactly 0.

    The subgradient choice keeps norms of identical poses differentiable
    instead of producing NaN.
    """
    a = _as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            denom = 2.0 * out
            ga = np.where(denom > 0.0, g / np.where(denom > 0.0, denom, 1.0), 0.0)
            a._accumulate(ga.astype(a.dtype, copy=False))

    return Tensor._from_op(out, (a,), backward, "sqrt")


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out * out))

    return Tensor._from_op(out, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid_arr(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out * (1.0 - out))

    return Tensor._from_op(out, (a,), backward, "sigmoid")


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x); gradient s * (1 + x * (1 - s))."""
    a = _as_tensor(a)
    s = _sigmoid_arr(a.data)
    out = a.data * s

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * s * (1.0 + a.data * (1.0 - s)))

    return Tensor._from_op(out, (a,), backward, "silu")


def _sigmoid_arr(x: np.ndarray) -> np.ndarray:
    # stable for both signs: e^{-|x|} never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably; gradient sigmoid(x)."""
    a = _as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * _sigmoid_arr(x))

    return Tensor._from_op(out, (a,), backward, "softplus")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a_ % a.data.ndim for a_ in axes):
                    gg = np.expand_dims(gg, ax)
            a._accumulate(np.broadcast_to(gg, a.data.shape).astype(a.dtype, copy=False))

    return Tensor._from_op(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- shape ops -----------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2) if b.data.ndim > 1 else np.outer(g, b.data)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            if a.data.ndim > 1:
                gb = np.swapaxes(a.data, -1, -2) @ g
            else:
                gb = np.outer(a.data, g)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return Tensor._from_op(out, (a, b), backward, "matmul")


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor._from_op(out, (a,), backward, "reshape")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = _as_tensor(a)
    out = np.swapaxes(a.data, ax1, ax2).copy()

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.swapaxes(g, ax1, ax2))

    return Tensor._from_op(out, (a,), backward, "swapaxes")


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    out = np.broadcast_to(a.data, shape).copy()

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))

    return Tensor._from_op(out, (a,), backward, "broadcast_to")


def concat(tensors: list, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return Tensor._from_op(out, tuple(tensors), backward, "concat")


def split(a: Tensor, boundaries: list, axis: int = -1) -> list:
    """Split along axis at the given boundary indices (numpy.split semantics)."""
    a = _as_tensor(a)
    pieces = np.split(a.data, boundaries, axis=axis)
    sizes = [p.shape[axis] for p in pieces]
    offsets = np.cumsum([0] + sizes)
    outs = []
    for piece, lo in zip(pieces, offsets[:-1]):
        lo = int(lo)
        hi = lo + piece.shape[axis]

        def backward(g, lo=lo, hi=hi):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                idx = [slice(None)] * full.ndim
                idx[axis] = slice(lo, hi)
                full[tuple(idx)] = g
                a._accumulate(full)

        outs.append(Tensor._from_op(piece.copy(), (a,), backward, "split"))
    return outs


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along axis."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (out * g).sum(axis=axis, keepdims=True)
            a._accumulate(out * (g - inner))

    return Tensor._from_op(out, (a,), backward, "softmax")


# -- layer primitives ------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b). x has shape (..., d_in), w (d_in, d_out), b (d_out)."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"linear: input last dim {x.data.shape} does not match weight {w.data.shape}"
        )
    y = matmul(x, w)
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (w.data.shape[-1],):
            raise ShapeError(f"linear: bias shape {b.data.shape} does not match weight {w.data.shape}")
        y = add(y, b)
    return y


def rmsnorm(x: Tensor, scale: Tensor, eps: float = 1e-8) -> Tensor:
    """y_i = scale_i * x_i / sqrt(mean_j(x_j^2) + eps), over the last axis.

    eps = 0 is allowed (the direction-invariance property is exact there);
    negative eps is rejected.
    """
    if eps < 0:
        raise DomainError(f"rmsnorm eps must be >= 0, got {eps}")
    x = _as_tensor(x)
    scale = _as_tensor(scale)
    ms = mean(mul(x, x), axis=-1, keepdims=True)
    inv = pow_(add(ms, float(eps)), -0.5)
    return mul(mul(x, inv), scale)


def gated_mlp(x: Tensor, params: dict) -> Tensor:
    """y = (silu(x @ w_gate) * (x @ w_up)) @ w_down.

    params maps names {w_gate, w_up, w_down} to tensors of shapes
    (d_model, d_intermediate) twice and (d_intermediate, d_model).
    """
    for name in ("w_gate", "w_up", "w_down"):
        if name not in params:
            raise ConfigError(f"gated_mlp: missing parameter {name!r}")
    gate = silu(linear(x, params["w_gate"]))
    up = linear(x, params["w_up"])
    return linear(mul(gate, up), params["w_down"])


# -- verification -----------------------------------------------------------------------


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    f must be a scalar-valued function of x, and x must be float64 so the
    finite-difference quotient has enough precision to be an oracle.
    Error per coordinate is |analytic - numeric| / (|analytic| + 1e-12).
    """
    if x.data.dtype != np.float64:
        raise UsageError("grad_check requires a float64 tensor")
    if not x.requires_grad:
        raise UsageError("grad_check requires requires_grad=True on x")
    x.grad = None
    out = f(x)
    if out.data.size != 1:
        raise UsageError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x).data)
        flat[i] = orig - h
        fm = float(f(x).data)
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * h)
        err = abs(aflat[i] - numeric) / (abs(aflat[i]) + 1e-12)
        if err > worst:
            worst = err
    return worst
