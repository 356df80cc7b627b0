"""Differentiable kernels.

Images follow the (N, C, H, W) layout. ``conv2d`` is a cross-correlation, as
in most deep-learning code; use a flipped kernel for a true convolution.
"""

import numpy as np

from .core import DimensionError, Tensor, as_tensor

__all__ = [
    "add", "sub", "mul", "scale", "relu", "square", "absolute", "sum_all",
    "mean_all", "elementwise", "conv2d", "resample", "concat", "pad2d", "index",
    "linear_map", "correlate2d", "correlate2d_adjoint",
]


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _coerce(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    dtype = a.dtype if isinstance(a, Tensor) else b.dtype
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=dtype))
    b = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=dtype))
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}") from None
    return a, b


def add(a, b):
    a, b = _coerce(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _coerce(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return Tensor._make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _coerce(a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._make(a.data * b.data, (a, b), bw)


def scale(x, alpha):
    x = as_tensor(x)
    alpha = x.dtype.type(alpha)

    def bw(g):
        return (g * alpha,)

    return Tensor._make(x.data * alpha, (x,), bw)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return Tensor._make(np.where(mask, x.data, x.dtype.type(0)), (x,), bw)


def square(x):
    x = as_tensor(x)

    def bw(g):
        return (2 * g * x.data,)

    return Tensor._make(x.data * x.data, (x,), bw)


def absolute(x):
    x = as_tensor(x)

    def bw(g):
        return (g * np.sign(x.data),)

    return Tensor._make(np.abs(x.data), (x,), bw)


def sum_all(x):
    x = as_tensor(x)

    def bw(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._make(np.asarray(x.data.sum(), dtype=x.dtype), (x,), bw)


def mean_all(x):
    x = as_tensor(x)
    n = x.size

    def bw(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return Tensor._make(np.asarray(x.data.mean(), dtype=x.dtype), (x,), bw)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "relu": relu, "scale": scale}


def elementwise(op, *args):
    """Dispatch by name: ``elementwise("relu", x)``, ``elementwise("scale", x, 0.5)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# --------------------------------------------------------------------------
# convolution

def _pad_hw(x, ph, pw, padding):
    if ph == 0 and pw == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)]
    if padding == "circular":
        return np.pad(x, widths, mode="wrap")
    return np.pad(x, widths, mode="constant")


def _im2col(x, kh, kw, padding, stride):
    """(N, C, H, W) -> columns (N, C*kh*kw, Ho*Wo), C-major then kernel offset."""
    n, c, h, w = x.shape
    xp = _pad_hw(x, kh // 2, kw // 2, padding)
    ho, wo = -(-h // stride), -(-w // stride)
    cols = np.empty((n, c, kh * kw, ho, wo), dtype=x.dtype)
    for a in range(kh):
        for b in range(kw):
            cols[:, :, a * kw + b] = xp[:, :, a:a + (ho - 1) * stride + 1:stride,
                                        b:b + (wo - 1) * stride + 1:stride]
    return cols.reshape(n, c * kh * kw, ho * wo), (ho, wo)


def correlate2d(x, k, padding="zero", stride=1):
    """Plain-array 'same' cross-correlation: (N,C,H,W) x (O,C,kh,kw) -> (N,O,ceil(H/s),ceil(W/s))."""
    o, _, kh, kw = k.shape
    cols, (ho, wo) = _im2col(x, kh, kw, padding, stride)
    out = np.matmul(k.reshape(o, -1), cols)
    return out.reshape(x.shape[0], o, ho, wo)


def correlate2d_adjoint(g, k, in_hw, padding="zero", stride=1):
    """Adjoint of :func:`correlate2d` with respect to its image input."""
    h, w = in_hw
    if stride > 1:
        full = np.zeros(g.shape[:2] + (h, w), dtype=g.dtype)
        full[:, :, ::stride, ::stride] = g
        g = full
    kt = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return correlate2d(g, kt, padding=padding, stride=1)


def conv2d(x, k, padding="zero", stride=1):
    """Differentiable 'same'-padded 2-D cross-correlation.

    Parameters
    ----------
    x : Tensor, shape (N, C, H, W)
    k : Tensor, shape (O, C, kh, kw) with odd kh, kw
    padding : {"zero", "circular"}
    stride : int
        Output keeps every ``stride``-th position starting at index 0.
    """
    x, k = as_tensor(x), as_tensor(k)
    if x.ndim != 4 or k.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape} and {k.shape}")
    if x.shape[1] != k.shape[1]:
        raise DimensionError(f"channel mismatch: input {x.shape[1]} vs kernel {k.shape[1]}")
    kh, kw = k.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
    if padding not in ("zero", "circular"):
        raise ValueError(f"unknown padding {padding!r}")
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    stride = int(stride)
    h, w = x.shape[2:]
    if padding == "circular" and (kh > h or kw > w):
        raise DimensionError(f"circular padding needs kernel <= image, got {kh}x{kw} on {h}x{w}")
    if x.dtype != k.dtype:
        raise ValueError(f"dtype mismatch: {x.dtype} vs {k.dtype}")

    o = k.shape[0]
    cols, (ho, wo) = _im2col(x.data, kh, kw, padding, stride)
    out = np.matmul(k.data.reshape(o, -1), cols).reshape(x.shape[0], o, ho, wo)

    def bw(g):
        gx = gk = None
        if x.requires_grad:
            gx = correlate2d_adjoint(g, k.data, (h, w), padding, stride)
        if k.requires_grad:
            g2 = g.reshape(g.shape[0], o, -1)
            gk = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(k.shape)
        return gx, gk

    return Tensor._make(out, (x, k), bw)


# --------------------------------------------------------------------------
# resampling and reshaping

def resample(x, factor, direction="down"):
    """Decimate (keep index 0, t, 2t, ...) or zero-fill upsample the last two axes.

    The two directions are exact adjoints of one another.
    """
    x = as_tensor(x)
    t = int(factor)
    if t != factor or t < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    if x.ndim < 2:
        raise DimensionError("resample needs at least 2 dimensions")
    if direction == "down":
        h, w = x.shape[-2:]
        if h % t or w % t:
            raise DimensionError(f"extent {h}x{w} not divisible by {t}")
        out = np.ascontiguousarray(x.data[..., ::t, ::t])

        def bw(g):
            full = np.zeros(x.shape, dtype=x.dtype)
            full[..., ::t, ::t] = g
            return (full,)

    elif direction in ("up", "up-zero-fill"):
        h, w = x.shape[-2:]
        out = np.zeros(x.shape[:-2] + (h * t, w * t), dtype=x.dtype)
        out[..., ::t, ::t] = x.data

        def bw(g):
            return (np.ascontiguousarray(g[..., ::t, ::t]),)

    else:
        raise ValueError(f"unknown direction {direction!r}")
    return Tensor._make(out, (x,), bw)


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return Tensor._make(out, tuple(tensors), bw)


def pad2d(x, bottom, right):
    """Zero-pad the last two axes at the bottom and right edges."""
    x = as_tensor(x)
    if bottom == 0 and right == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(0, bottom), (0, right)]
    h, w = x.shape[-2:]

    def bw(g):
        return (np.ascontiguousarray(g[..., :h, :w]),)

    return Tensor._make(np.pad(x.data, widths), (x,), bw)


def index(x, idx):
    """Basic (slice) indexing."""
    x = as_tensor(x)
    out = x.data[idx]

    def bw(g):
        full = np.zeros(x.shape, dtype=x.dtype)
        full[idx] = g
        return (full,)

    return Tensor._make(np.array(out, copy=True), (x,), bw)


def linear_map(x, forward, adjoint):
    """Apply a fixed linear map given as a pair of array functions.

    The backward pass applies ``adjoint``; correctness therefore depends on
    ``adjoint`` being the true adjoint of ``forward``.
    """
    x = as_tensor(x)
    out = np.ascontiguousarray(forward(x.data), dtype=x.dtype)

    def bw(g):
        return (np.asarray(adjoint(g), dtype=x.dtype),)

    return Tensor._make(out, (x,), bw)
