"""Dense float tensors (rank <= 3) with reverse-mode autodiff.

float32 is the working precision for training and inference. The
``double_precision()`` context switches newly created tensors to float64 and
exists solely so finite-difference gradient checks can use tight tolerances.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteError

_DTYPE = np.float32
_GRAD_ENABLED = True


def current_dtype():
    return _DTYPE


@contextlib.contextmanager
def double_precision():
    """Create tensors in float64 inside the block (gradient-check mode)."""
    global _DTYPE
    prev, _DTYPE = _DTYPE, np.float64
    try:
        yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Skip graph recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_DTYPE)
        if arr.ndim > 3:
            raise ValueError(f"rank {arr.ndim} > 3 not supported")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward: Callable[[], None] | None = None
        self._parents: tuple = ()

    # -- introspection -----------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- autodiff ----------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad = self.grad + g

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._backward = None
        out._parents = ()
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar")
            grad = np.ones_like(self.data)
        # Iterative post-order DFS; recursion depth would track graph depth.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for nd in reversed(topo):
            if nd._backward is not None and nd.grad is not None:
                nd._backward()

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = node(self.data + other.data, (self, other),
                   lambda g: (g, g))
        return out

    __radd__ = __add__

    def __neg__(self):
        return node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other)
        return node(self.data - other.data, (self, other),
                    lambda g: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return node(a * b, (self, other),
                    lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return node(a / b, (self, other),
                    lambda g: (g / b, -g * a / (b * b)))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != b.ndim or a.ndim not in (2, 3):
            raise ValueError(f"matmul expects equal-rank 2D or 3D operands, got {a.ndim}D @ {b.ndim}D")
        if a.ndim == 2:
            return node(a @ b, (self, other),
                        lambda g: (g @ b.T, a.T @ g))
        at = a.transpose(0, 2, 1)
        bt = b.transpose(0, 2, 1)
        return node(a @ b, (self, other),
                    lambda g: (g @ bt, at @ g))

    # -- shape -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape
        return node(self.data.reshape(shape), (self,),
                    lambda g: (g.reshape(orig),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return node(self.data.transpose(axes), (self,),
                    lambda g: (g.transpose(inv),))

    @property
    def T(self):
        if self.ndim != 2:
            raise ValueError("T is defined for rank-2 tensors")
        return self.transpose(1, 0)

    def __getitem__(self, key):
        data = self.data[key]
        shape = self.data.shape

        def vjp(g):
            buf = np.zeros(shape, dtype=g.dtype)
            np.add.at(buf, key, g)
            return (buf,)

        return node(data, (self,), vjp)

    # -- elementwise -------------------------------------------------------

    def relu(self):
        x = self.data
        return node(np.maximum(x, 0), (self,),
                    lambda g: (g * (x > 0),))

    def tanh(self):
        y = np.tanh(self.data)
        return node(y, (self,), lambda g: (g * (1.0 - y * y),))

    def sigmoid(self):
        y = 1.0 / (1.0 + np.exp(-self.data))
        return node(y, (self,), lambda g: (g * y * (1.0 - y),))

    def exp(self):
        y = np.exp(self.data)
        return node(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return node(np.log(x), (self,), lambda g: (g / x,))

    def abs(self):
        x = self.data
        return node(np.abs(x), (self,), lambda g: (g * np.sign(x),))

    def clamp_max(self, cap: float):
        """min(x, cap); gradient is zero where the cap binds."""
        x = self.data
        return node(np.minimum(x, cap), (self,),
                    lambda g: (g * (x < cap),))

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.data.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).astype(g.dtype),)
            ge = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(ge, shape).astype(g.dtype),)

        return node(self.data.sum(axis=axis, keepdims=keepdims), (self,), vjp)

    def mean(self):
        n = self.data.size
        shape = self.data.shape
        return node(self.data.mean(), (self,),
                    lambda g: (np.broadcast_to(g / n, shape).astype(g.dtype),))

    # -- softmax family ----------------------------------------------------

    def softmax(self, axis: int = -1):
        x = self.data
        m = x.max(axis=axis, keepdims=True)
        e = np.exp(x - m)
        y = e / e.sum(axis=axis, keepdims=True)
        return node(y, (self,),
                    lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))

    def log_softmax(self, axis: int = -1):
        x = self.data
        m = x.max(axis=axis, keepdims=True)
        s = x - m
        lse = np.log(np.exp(s).sum(axis=axis, keepdims=True))
        y = s - lse
        return node(y, (self,),
                    lambda g: (g - np.exp(y) * g.sum(axis=axis, keepdims=True),))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def node(data: np.ndarray, parents: Sequence[Tensor],
         vjp: Callable[[np.ndarray], tuple], op: str = "") -> Tensor:
    """Create a graph node. `vjp(out_grad)` returns one grad per parent."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)

        def _bw():
            grads = vjp(out.grad)
            for p, g in zip(parents, grads):
                if p.requires_grad and g is not None:
                    p._accumulate(np.asarray(g, dtype=p.data.dtype))

        out._backward = _bw
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return node(np.concatenate([t.data for t in tensors], axis=axis),
                tensors, vjp)


def index_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows: out[i] = x[idx[i]]. Rows may repeat."""
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.data.shape

    def vjp(g):
        buf = np.zeros(shape, dtype=g.dtype)
        np.add.at(buf, idx, g)
        return (buf,)

    return node(x.data[idx], (x,), vjp)


def gather(table: Tensor, idx: np.ndarray) -> Tensor:
    """Index a 1-D table with an integer array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    shape = table.data.shape

    def vjp(g):
        buf = np.zeros(shape, dtype=g.dtype)
        np.add.at(buf, idx, g)
        return (buf,)

    return node(table.data[idx], (table,), vjp)


def pick_rowwise(x: Tensor, cols: np.ndarray) -> Tensor:
    """out[i] = x[i, cols[i]] for a rank-2 tensor."""
    cols = np.asarray(cols, dtype=np.int64)
    n = x.data.shape[0]
    rows = np.arange(n)
    shape = x.data.shape

    def vjp(g):
        buf = np.zeros(shape, dtype=g.dtype)
        np.add.at(buf, (rows, cols), g)
        return (buf,)

    return node(x.data[rows, cols], (x,), vjp)


def assert_finite(x, what: str = "value") -> None:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite {what} detected")
