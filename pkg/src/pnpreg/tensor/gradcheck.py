"""Finite-difference verification of reverse-mode gradients."""

import numpy as np

from .core import Tensor, backward

__all__ = ["numerical_grad", "gradcheck"]


def numerical_grad(f, arrays, eps=1e-6):
    """Central differences of the scalar ``f(*arrays)`` w.r.t. each array (fp64)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + eps
            fp = f(*arrays)
            a[i] = old - eps
            fm = f(*arrays)
            a[i] = old
            g[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def gradcheck(fn, arrays, eps=1e-6, seed=0):
    """Max relative error between autodiff and central-difference gradients.

    ``fn`` maps Tensors to a Tensor of any shape; it is reduced to a scalar by
    a fixed random projection. Error per input is
    ``max|g_auto - g_num| / max(max|g_num|, 1e-12)``; the worst input is returned.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    rng = np.random.default_rng(seed)
    proj = {}

    def scalar_out(out):
        if out.shape not in proj:
            proj[out.shape] = rng.standard_normal(out.shape)
        return proj[out.shape]

    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*ts)
    w = scalar_out(out)
    loss = (out * Tensor(w)).sum()
    backward(loss)

    def f(*arrs):
        o = fn(*[Tensor(a) for a in arrs])
        return float(np.sum(o.data * w))

    nums = numerical_grad(f, arrays, eps)
    worst = 0.0
    for t, gn in zip(ts, nums):
        ga = t.grad if t.grad is not None else np.zeros_like(gn)
        err = np.max(np.abs(ga - gn)) / max(np.max(np.abs(gn)), 1e-12)
        worst = max(worst, float(err))
    return worst
