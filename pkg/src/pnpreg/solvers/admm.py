"""Plug-and-play ADMM with an increasing penalty schedule."""

import math
from dataclasses import dataclass

import numpy as np

from ..degradations import CircularBlur, IdentityOperator, MaskOperator, SuperResolution
from ..linalg import conjugate_gradient
from ..priors import UnsupportedOperationError, as_prior
from .gd import _ensembled, _prepare
from .trace import DivergenceError, SolveTrace

__all__ = ["ADMMConfig", "admm_schedule", "solve_data_subproblem", "pnp_admm",
           "SIGMA_FLOOR"]

SIGMA_FLOOR = 0.001 / 255.0


def admm_schedule(sigma, s0, sN, N):
    """Initial penalty and growth factor giving denoiser levels s0 -> sN over N steps.

    ``rho0 = (sigma / s0)^2`` and ``alpha = (s0 / sN)^(2 / N)``, so that
    ``s_k = sigma / sqrt(rho0 * alpha^k)`` reaches ``sN`` at ``k = N``.
    """
    if sigma <= 0 or s0 <= 0 or sN <= 0:
        raise ValueError("sigma, s0 and sN must be positive")
    if s0 < sN:
        raise ValueError(f"need s0 >= sN, got {s0} < {sN}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return (sigma / s0) ** 2, (s0 / sN) ** (2.0 / N)


@dataclass
class ADMMConfig:
    """``sigma`` is the problem's noise weight; ``s0``/``sN`` the first/last denoiser levels.

    Runs ``max_iter`` iterations (default ``n_iter``); beyond ``n_iter`` the
    penalty, hence the denoiser level, is held at its final value.
    """

    sigma: float
    s0: float
    sN: float
    n_iter: int
    max_iter: int = None
    self_ensemble: bool = False
    tol: float = None
    cg_tol: float = 1e-10
    cg_maxiter: int = 500

    def __post_init__(self):
        self.rho0, self.alpha = admm_schedule(self.sigma, self.s0, self.sN, self.n_iter)
        if self.max_iter is None:
            self.max_iter = self.n_iter

    @classmethod
    def for_noise(cls, sigma_n, s0, sN, n_iter, **kw):
        """Use ``sigma = max(sigma_n, 0.001/255)`` so noiseless problems keep a prior."""
        return cls(sigma=max(sigma_n, SIGMA_FLOOR), s0=s0, sN=sN, n_iter=n_iter, **kw)

    def rho(self, k):
        return self.rho0 * self.alpha ** min(k, self.n_iter)

    def s(self, k):
        return self.sigma / math.sqrt(self.rho(k))


def _block_mean(a, t):
    *lead, h, w = a.shape
    return a.reshape(*lead, t, h // t, t, w // t).mean(axis=(-4, -2))


def solve_data_subproblem(A, y, rho, v, method="auto", tol=1e-10, maxiter=500):
    """Solve ``(A^T A + rho I) x = A^T y + rho v``.

    ``method="auto"`` uses closed forms for identity and mask operators and
    Fourier-domain solves for circular blur and blur+decimation; ``"cg"``
    forces conjugate gradient.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if method not in ("auto", "cg"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        if isinstance(A, IdentityOperator):
            return (y + rho * v) / (1.0 + rho)
        if isinstance(A, MaskOperator):
            m = A.mask
            return (m * y + rho * v) / (m + rho)
        if isinstance(A, CircularBlur) and A.method == "fft":
            hw = v.shape[-2:]
            K = A.otf(hw)
            num = np.conj(K) * np.fft.rfft2(y) + rho * np.fft.rfft2(v)
            return np.fft.irfft2(num / (np.abs(K) ** 2 + rho), s=hw)
        if isinstance(A, SuperResolution) and A.blur.method == "fft":
            t = A.factor
            FB = A.blur.otf(v.shape[-2:], real=False)
            FR = np.fft.fft2(A.adjoint(y) + rho * v)
            FBR = _block_mean(FB * FR, t)
            inv_w = _block_mean(np.abs(FB) ** 2, t)
            tiled = np.tile(FBR / (inv_w + rho), (t, t))
            return np.real(np.fft.ifft2((FR - np.conj(FB) * tiled) / rho))
    rhs = A.adjoint(y) + rho * v
    return conjugate_gradient(lambda u: A.normal(u) + rho * u, rhs, tol=tol, maxiter=maxiter)


def pnp_admm(y, A, prior, cfg, x_init=None, x_true=None):
    """ADMM where the z-update is the prior's prox (or a denoiser) at ``s_k = sigma/sqrt(rho_k)``.

    Per iteration::

        x <- argmin ||Ax - y||^2 + rho ||x - (z - l/rho)||^2
        z <- D_{s_k}(x + l/rho)
        l <- l + rho (x - z);  rho <- alpha * rho

    The dual ``l`` starts at zero and ``z`` at ``x_init``. Returns the last
    ``x`` and the trace (recorded on ``x``).
    """
    prior = as_prior(prior)
    if not prior.has_prox:
        raise UnsupportedOperationError(f"{prior.name} has no proximal operator")
    y, z = _prepare(y, A, x_init)
    x = z.copy()
    lam = np.zeros_like(z)
    trace = SolveTrace()
    for k in range(cfg.max_iter):
        rho = cfg.rho(k)
        x_new = solve_data_subproblem(A, y, rho, z - lam / rho, tol=cfg.cg_tol,
                                      maxiter=cfg.cg_maxiter)
        s = cfg.sigma / math.sqrt(rho)
        u = x_new + lam / rho
        if cfg.self_ensemble:
            z = _ensembled(lambda a: prior.prox(a, s), u, k)
        else:
            z = prior.prox(u, s)
        lam = lam + rho * (x_new - z)
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(z))):
            raise DivergenceError(f"non-finite iterate at iteration {k}", trace)
        trace.record(x_new, x, x_true)
        x = x_new
        if cfg.tol is not None and trace.iterate_mse[-1] < cfg.tol:
            break
    return x, trace
