"""A fixed number of gradient steps trained end to end through the network G."""

from dataclasses import dataclass

import numpy as np

from ..degradations import add_awgn, initial_estimate
from ..priors import Prior
from ..tensor import Adam, Tensor, square
from ..training import _check_finite, write_log

__all__ = ["UnrolledConfig", "unrolled_forward", "unrolled_gd_train"]


@dataclass
class UnrolledConfig:
    mu: float
    sigma: float
    n_steps: int = 6
    sigma_n: float = 0.0
    lr: float = 1e-4
    batch_size: int = 8
    train_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


def _grad_term(G, x):
    if isinstance(G, Prior):
        return Tensor(np.asarray(G.grad(x.data), dtype=x.dtype))
    return G(x)


def unrolled_forward(G, A, y, x0, mu, sigma, n_steps):
    """``n_steps`` of ``x <- x - mu [A^T(Ax - y) + sigma^2 G(x)]``, differentiable in G.

    ``y`` and ``x0`` are batches; returns the final iterate as a Tensor.
    """
    dtype = getattr(G, "dtype", np.float64)
    x = x0 if isinstance(x0, Tensor) else Tensor(np.asarray(x0, dtype=dtype))
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=dtype))
    s2 = sigma ** 2
    for _ in range(n_steps):
        data = A.adjoint_tensor(A.apply_tensor(x) - y)
        x = x - (data + _grad_term(G, x) * s2) * mu
    return x


def unrolled_gd_train(dataset, A, G, cfg, log_path=None, dump_dir=None):
    """Train G so that the unrolled iterate matches ground truth in mean squared error.

    Each batch is degraded by ``A`` plus noise of level ``cfg.sigma_n`` and
    started from the task's usual initial estimate. With ``n_steps = 0`` the
    output does not depend on G, so G is returned unchanged.
    """
    rng = np.random.default_rng(cfg.seed)
    dataset.reset()
    opt = Adam(G.parameters(), lr=cfg.lr)
    rows = []
    for step in range(cfg.train_steps):
        xt = dataset.sample(cfg.batch_size, rng)
        y = add_awgn(A.apply(xt), cfg.sigma_n, int(rng.integers(2 ** 63)))
        x0 = initial_estimate(A, y)
        xN = unrolled_forward(G, A, y, x0, cfg.mu, cfg.sigma, cfg.n_steps)
        loss = square(xN - Tensor(xt.astype(xN.dtype))).mean()
        val = float(loss.item())
        _check_finite(val, [G], dump_dir, step)
        if cfg.n_steps > 0:
            opt.zero_grad()
            loss.backward()
            opt.step()
            G.step += 1
        rows.append({"step": step, "L_D": 0.0, "L_G": val, "L": val, "lr": cfg.lr,
                     "delta_rate": 0.0})
    if log_path:
        write_log(log_path, rows)
    G.history = rows
    return G
