"""Analytic and learned priors."""

import numpy as np

from .analytic import (
    LaplacianPrior, Prior, TikhonovPrior, UnsupportedOperationError, ZeroPrior,
    circular_laplacian, prior_grad, prior_prox,
)
from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from ..tensor import Tensor
from .networks import (
    SIGMA_MAX, BiasFreeUNet, DenoiserNet, DenoiserPrior, ReGNet, ReGPrior, build_network,
    denoise, reg_grad,
)

__all__ = [
    "Prior", "TikhonovPrior", "LaplacianPrior", "ZeroPrior", "UnsupportedOperationError",
    "circular_laplacian", "prior_grad", "prior_prox", "BiasFreeUNet", "DenoiserNet",
    "ReGNet", "DenoiserPrior", "ReGPrior", "SIGMA_MAX", "build_network", "denoise",
    "reg_grad", "as_prior", "residual_identity_error", "jacobian_asymmetry", "save_checkpoint",
    "load_checkpoint", "encode_checkpoint", "decode_checkpoint",
]


def as_prior(obj):
    """Wrap networks as priors; pass priors through."""
    if isinstance(obj, Prior):
        return obj
    if isinstance(obj, DenoiserNet):
        return DenoiserPrior(obj)
    if isinstance(obj, ReGNet):
        return ReGPrior(obj)
    raise TypeError(f"cannot use {type(obj).__name__} as a prior")


def residual_identity_error(G, D, z, sigma):
    """Mean over entries of ``(sigma^2 G(D_sigma(z)) - (z - D_sigma(z)))^2``.

    ``G`` needs a gradient and ``D`` a proximal operator; networks are wrapped.
    Zero exactly when ``D`` is the prox of a prior whose gradient is ``G``.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    G, D = as_prior(G), as_prior(D)
    z = np.asarray(z, dtype=np.float64)
    dz = prior_prox(D, z, sigma)
    r = sigma ** 2 * prior_grad(G, dz) - (z - dz)
    return float(np.mean(r * r))


def jacobian_asymmetry(G, x, eps=1e-6):
    """``||J - J^T||_F / ||J||_F`` for the Jacobian of ``G`` at ``x``.

    Diagnostic only: nothing forces a learned ``G`` to be a true gradient
    field. Builds the dense Jacobian, so keep ``x`` small. Networks are
    differentiated exactly; analytic priors by central differences.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    J = np.zeros((n, n))
    if isinstance(G, ReGNet):
        xt, _ = G._as_batch(x)
        for i in range(n):
            t = Tensor(xt.data.copy(), requires_grad=True)
            e = np.zeros(t.shape, dtype=t.data.dtype)
            e.flat[i] = 1
            (G(t) * Tensor(e)).sum().backward()
            J[i] = np.ravel(t.grad)
    else:
        G = as_prior(G)
        flat = x.reshape(-1).copy()
        for j in range(n):
            old = flat[j]
            flat[j] = old + eps
            gp = prior_grad(G, flat.reshape(x.shape))
            flat[j] = old - eps
            gm = prior_grad(G, flat.reshape(x.shape))
            flat[j] = old
            J[:, j] = np.ravel(gp - gm) / (2 * eps)
    norm = np.linalg.norm(J)
    return float(np.linalg.norm(J - J.T) / norm) if norm > 0 else 0.0
