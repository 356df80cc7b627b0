"""Small linear-algebra helpers shared by priors and solvers."""

import numpy as np

__all__ = ["ConvergenceError", "conjugate_gradient", "dense_matrix"]


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message}; relative residual {residual:.3e}")
        self.residual = residual


def conjugate_gradient(apply, b, x0=None, tol=1e-10, maxiter=500):
    """Solve ``apply(x) = b`` for a symmetric positive definite operator.

    Stops when ``||b - apply(x)|| <= tol * ||b||``. Raises
    :class:`ConvergenceError` if ``maxiter`` iterations do not get there.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    r = b - apply(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = float(np.vdot(r, r))
    target = (tol * bnorm) ** 2
    if rs <= target:
        return x
    for _ in range(maxiter):
        ap = apply(p)
        alpha = rs / float(np.vdot(p, ap))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r))
        if rs_new <= target:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise ConvergenceError(f"conjugate gradient did not converge in {maxiter} iterations",
                           np.sqrt(rs) / bnorm)


def dense_matrix(apply, input_shape, max_unknowns=4096):
    """Assemble the matrix of a linear map by applying it to basis vectors."""
    n = int(np.prod(input_shape))
    if n > max_unknowns:
        raise ValueError(f"{n} unknowns exceeds the dense-assembly limit of {max_unknowns}")
    cols = []
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        cols.append(np.asarray(apply(e.reshape(input_shape)), dtype=np.float64).ravel())
        e[i] = 0.0
    return np.stack(cols, axis=1)
