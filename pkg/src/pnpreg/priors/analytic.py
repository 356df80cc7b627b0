"""Priors with closed-form gradients and proximal operators.

Here ``prox(z, sigma)`` means ``argmin_x 0.5*||x - z||^2 + sigma^2 * phi(x)``,
i.e. a MAP Gaussian denoiser at noise level ``sigma``.
"""

import numpy as np

from ..linalg import conjugate_gradient

__all__ = ["UnsupportedOperationError", "Prior", "TikhonovPrior", "LaplacianPrior",
           "ZeroPrior", "prior_grad", "prior_prox", "circular_laplacian"]


class UnsupportedOperationError(NotImplementedError):
    """The prior does not provide the requested capability."""


class Prior:
    has_grad = False
    has_prox = False
    has_value = False
    quadratic = False
    name = "prior"

    def grad(self, x):
        raise UnsupportedOperationError(f"{self.name} has no gradient")

    def prox(self, z, sigma):
        raise UnsupportedOperationError(f"{self.name} has no proximal operator")

    def value(self, x):
        raise UnsupportedOperationError(f"{self.name} has no value")

    def apply_quadratic(self, x):
        """``Q x`` for priors of the form ``0.5 * x^T Q x``."""
        raise UnsupportedOperationError(f"{self.name} is not quadratic")


def prior_grad(prior, x):
    if not prior.has_grad:
        raise UnsupportedOperationError(f"{prior.name} has no gradient")
    return prior.grad(x)


def prior_prox(prior, z, sigma):
    if not prior.has_prox:
        raise UnsupportedOperationError(f"{prior.name} has no proximal operator")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return prior.prox(z, sigma)


class ZeroPrior(Prior):
    """phi = 0: gradient zero, prox the identity."""

    has_grad = has_prox = has_value = quadratic = True
    name = "zero"

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def prox(self, z, sigma):
        return np.array(z, dtype=np.float64, copy=True)

    def value(self, x):
        return 0.0

    def apply_quadratic(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


class TikhonovPrior(Prior):
    """phi(x) = 0.5 * ||x||^2."""

    has_grad = has_prox = has_value = quadratic = True
    name = "tikhonov"

    def grad(self, x):
        return np.array(x, dtype=np.float64, copy=True)

    def prox(self, z, sigma):
        return np.asarray(z, dtype=np.float64) / (1.0 + sigma ** 2)

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * float(np.vdot(x, x))

    def apply_quadratic(self, x):
        return np.array(x, dtype=np.float64, copy=True)


def circular_laplacian(x):
    """5-point discrete Laplacian with periodic boundaries on the last two axes."""
    x = np.asarray(x, dtype=np.float64)
    return (4.0 * x
            - np.roll(x, 1, axis=-1) - np.roll(x, -1, axis=-1)
            - np.roll(x, 1, axis=-2) - np.roll(x, -1, axis=-2))


class LaplacianPrior(Prior):
    """phi(x) = 0.5 * ||L x||^2 with the circular Laplacian ``L`` (symmetric).

    The prox solves ``(I + sigma^2 L^T L) x = z`` by conjugate gradient.
    """

    has_grad = has_prox = has_value = quadratic = True
    name = "laplacian"

    def __init__(self, tol=1e-10, maxiter=500):
        self.tol = tol
        self.maxiter = maxiter

    def grad(self, x):
        return circular_laplacian(circular_laplacian(x))

    def apply_quadratic(self, x):
        return self.grad(x)

    def value(self, x):
        lx = circular_laplacian(x)
        return 0.5 * float(np.vdot(lx, lx))

    def prox(self, z, sigma):
        z = np.asarray(z, dtype=np.float64)
        if sigma == 0:
            return z.copy()
        s2 = sigma ** 2
        return conjugate_gradient(lambda v: v + s2 * self.grad(v), z,
                                  tol=self.tol, maxiter=self.maxiter)
