"""Exact MAP estimate for quadratic priors."""

import numpy as np

from ..linalg import conjugate_gradient, dense_matrix
from ..priors import UnsupportedOperationError, as_prior
from ..tensor import DimensionError

__all__ = ["map_closed_form"]


def map_closed_form(A, y, prior, sigma, input_shape=None, dense_limit=4096, tol=1e-12):
    """Minimizer of ``0.5||Ax - y||^2 + sigma^2 * 0.5 x^T Q x``.

    Solves ``(A^T A + sigma^2 Q) x = A^T y`` densely when the problem has at
    most ``dense_limit`` unknowns per channel, by conjugate gradient otherwise.
    ``input_shape`` defaults to what ``A`` maps onto ``y.shape``.
    """
    prior = as_prior(prior)
    if not prior.quadratic:
        raise UnsupportedOperationError(f"{prior.name} is not quadratic")
    y = np.asarray(y, dtype=np.float64)
    shape = tuple(input_shape) if input_shape is not None else A.input_shape(y.shape)
    if tuple(A.output_shape(shape)) != y.shape:
        raise DimensionError(f"operator maps {shape} to {A.output_shape(shape)}, not {y.shape}")
    s2 = sigma ** 2

    def normal(v):
        return A.normal(v) + s2 * prior.apply_quadratic(v)

    rhs = A.adjoint(y)
    plane = shape[-2:]
    if int(np.prod(plane)) <= dense_limit:
        # the operators act per channel, so one plane-sized system serves all
        M = dense_matrix(normal, plane, max_unknowns=dense_limit)
        flat = rhs.reshape(-1, plane[0] * plane[1]).T
        try:
            sol = np.linalg.solve(M, flat)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError("normal matrix is singular; the prior does not "
                                        "regularize the null space of A") from None
        return sol.T.reshape(shape)
    return conjugate_gradient(normal, rhs, tol=tol, maxiter=10 * int(np.prod(plane)))
