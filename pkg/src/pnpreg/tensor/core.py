"""Tensor type and the reverse-mode tape.

Every differentiable operation produces a new :class:`Tensor` holding a
reference to its parents and a closure mapping the output gradient to one
gradient per parent. :func:`backward` replays those closures in reverse
topological order.
"""

import contextlib
import threading

import numpy as np

__all__ = ["Tensor", "DimensionError", "backward", "no_grad", "is_grad_enabled",
           "as_tensor", "FLOAT_DTYPES"]

FLOAT_DTYPES = (np.float32, np.float64)


class DimensionError(ValueError):
    """Raised when tensor shapes are incompatible with an operation."""


_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _as_float_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """N-dimensional float array that can take part in reverse-mode AD.

    Parameters
    ----------
    data : array_like
        Values. Non-float input is promoted to float64.
    requires_grad : bool
        Whether gradients should be accumulated into ``.grad`` for this leaf.
    dtype : numpy dtype, optional
        Force ``float32`` or ``float64``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_float_array(data, dtype)
        if self.data.dtype not in FLOAT_DTYPES:
            raise ValueError(f"unsupported dtype {self.data.dtype}")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    # construction of non-leaf nodes
    @classmethod
    def _make(cls, data, parents, backward_fn):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None, retain_graph=False):
        backward(self, grad=grad, retain_graph=retain_graph)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # arithmetic sugar, implemented in ops
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from .ops import scale
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return scale(self, 1.0 / other)

    def __neg__(self):
        from .ops import scale
        return scale(self, -1.0)

    def __getitem__(self, idx):
        from .ops import index
        return index(self, idx)

    def sum(self):
        from .ops import sum_all
        return sum_all(self)

    def mean(self):
        from .ops import mean_all
        return mean_all(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        if dtype is not None and x.dtype != dtype:
            raise ValueError(f"dtype mismatch: {x.dtype} vs {dtype}")
        return x
    return Tensor(x, dtype=dtype)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, grad=None, retain_graph=False):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf.

    ``loss`` must hold a single element unless an explicit seed ``grad`` is
    given. Gradients add onto existing ``.grad`` buffers. Unless
    ``retain_graph`` is set, the recorded graph is released afterwards.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if grad is None:
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        seed = np.ones_like(loss.data)
    else:
        seed = np.asarray(grad, dtype=loss.dtype)
        if seed.shape != loss.shape:
            raise DimensionError(f"seed gradient shape {seed.shape} != {loss.shape}")
    if not loss.requires_grad:
        return

    grads = {id(loss): seed}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        if not retain_graph:
            node._parents = ()
            node._backward = _released
    return


def _released(_g):
    raise RuntimeError("graph already released; call backward(retain_graph=True) to reuse it")
