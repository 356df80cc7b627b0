"""Gradient-descent solvers: plug-and-play with a regularizing gradient, and RED."""

from dataclasses import dataclass

import numpy as np

from ..data import dihedral, dihedral_inverse
from ..priors import UnsupportedOperationError, as_prior
from ..tensor import AdamState, DimensionError, adam_step
from .trace import DivergenceError, SolveTrace

__all__ = ["GDConfig", "REDConfig", "pnp_gd", "red_gd"]


@dataclass
class GDConfig:
    """Step ``mu``, regularization weight ``sigma`` (enters as sigma^2), ``n_iter`` steps.

    ``update="adam"`` replaces the raw step with Adam, taking ``mu`` as its
    learning rate. ``tol`` stops early once the consecutive-iterate MSE drops
    below it.
    """

    mu: float
    sigma: float
    n_iter: int = 1500
    update: str = "plain"
    self_ensemble: bool = False
    tol: float = None
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.n_iter < 0:
            raise ValueError(f"n_iter must be >= 0, got {self.n_iter}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.update not in ("plain", "adam"):
            raise ValueError(f"update must be 'plain' or 'adam', got {self.update!r}")


@dataclass
class REDConfig:
    w: float
    sigma_f: float
    mu: float
    n_iter: int = 300
    update: str = "plain"
    self_ensemble: bool = False
    tol: float = None
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.w < 0:
            raise ValueError(f"w must be >= 0, got {self.w}")
        if self.sigma_f <= 0:
            raise ValueError(f"sigma_f must be positive, got {self.sigma_f}")
        if self.mu <= 0 or self.n_iter < 0:
            raise ValueError("mu must be positive and n_iter >= 0")
        if self.update not in ("plain", "adam"):
            raise ValueError(f"update must be 'plain' or 'adam', got {self.update!r}")


def _ensembled(fn, x, k):
    """fn applied under the k-th dihedral transform (cycled one per iteration)."""
    return np.ascontiguousarray(dihedral_inverse(fn(np.ascontiguousarray(dihedral(x, k))), k))


def _prepare(y, A, x_init):
    y = np.asarray(y, dtype=np.float64)
    x = y.copy() if x_init is None else np.array(x_init, dtype=np.float64)
    if tuple(A.output_shape(x.shape)) != y.shape:
        raise DimensionError(f"operator maps {x.shape} to {A.output_shape(x.shape)}, not {y.shape}")
    return y, x


def _descend(y, A, x, reg_fn, cfg, x_true, objective_fn):
    trace = SolveTrace()
    state = AdamState(lr=cfg.mu, beta1=cfg.betas[0], beta2=cfg.betas[1], eps=cfg.eps)
    for k in range(cfg.n_iter):
        g_reg = _ensembled(reg_fn, x, k) if cfg.self_ensemble else reg_fn(x)
        grad = A.adjoint(A.apply(x) - y) + g_reg
        if cfg.update == "plain":
            x_new = x - cfg.mu * grad
        else:
            try:
                (x_new,) = adam_step([x], [grad], state)
            except FloatingPointError:
                raise DivergenceError(f"non-finite gradient at iteration {k}", trace) from None
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", trace)
        obj = objective_fn(x_new) if objective_fn is not None else None
        trace.record(x_new, x, x_true, obj)
        x = x_new
        if cfg.tol is not None and trace.iterate_mse[-1] < cfg.tol:
            break
    return x, trace


def pnp_gd(y, A, prior, cfg, x_init=None, x_true=None):
    """Plug-and-play gradient descent on ``0.5||Ax - y||^2 + sigma^2 phi(x)``.

    ``prior`` supplies the gradient of phi: an analytic prior or a trained
    :class:`~pnpreg.priors.ReGNet`. ``x_init`` defaults to ``y``.
    Returns ``(x, trace)``.
    """
    prior = as_prior(prior)
    if not prior.has_grad:
        raise UnsupportedOperationError(f"{prior.name} has no gradient")
    y, x = _prepare(y, A, x_init)
    s2 = cfg.sigma ** 2

    def reg(v):
        return s2 * prior.grad(v)

    objective = None
    if prior.has_value:
        def objective(v):
            r = A.apply(v) - y
            return 0.5 * float(np.vdot(r, r)) + s2 * prior.value(v)

    return _descend(y, A, x, reg, cfg, x_true, objective)


def red_gd(y, A, denoiser, cfg, x_init=None, x_true=None):
    """RED gradient descent: the regularizer gradient is ``w (x - D_sigma_f(x))``."""
    prior = as_prior(denoiser)
    if not prior.has_prox:
        raise UnsupportedOperationError(f"{prior.name} has no denoiser/proximal operator")
    y, x = _prepare(y, A, x_init)

    def reg(v):
        return cfg.w * (v - prior.prox(v, cfg.sigma_f))

    return _descend(y, A, x, reg, cfg, x_true, None)
