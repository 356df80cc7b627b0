"""Joint training of the denoiser D and the regularizing-gradient network G.

Per step a ground-truth batch ``x0`` is corrupted as ``z = x0 + eta`` with
``eta ~ N(0, sigma0^2)``. The global loss is ``delta * L_D + lam * L_G`` with
``L_D = mean|D_sigma0(z) - x0|`` and
``L_G = mean(sigma^2 G(D_sigma(z)) - (z - D_sigma(z)))^2``.
"""

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .priors import DenoiserNet, Prior, ReGNet, save_checkpoint
from .priors.networks import SIGMA_MAX
from .tensor import Adam, Tensor, absolute, no_grad, square

__all__ = [
    "SigmaDraw", "TrainConfig", "TrainingDivergedError", "lr_at", "sample_sigmas",
    "loss_LD", "loss_LG", "loss_total", "pretrain_denoiser", "joint_train",
    "HeldOut", "make_heldout", "evaluate_losses", "write_log",
]

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "L_D", "L_G", "L", "lr", "delta_rate")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, message, dump_path=None):
        super().__init__(message if dump_path is None else f"{message}; state dumped to {dump_path}")
        self.dump_path = dump_path


@dataclass(frozen=True)
class SigmaDraw:
    sigma0: float
    sigma: float
    delta: int


@dataclass
class TrainConfig:
    lam: float = 0.004
    sigma_max: float = SIGMA_MAX
    alternation: float = 0.5
    batch_size: int = 8
    patch_size: int = 32
    lr: float = 1e-4
    lr_period: int = 5000
    lr_floor: float = 1e-5
    steps: int = 20000
    seed: int = 0
    # D is also updated on delta=0 steps (where only L_G reaches it)
    update_denoiser_always: bool = True

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0 <= self.alternation <= 1:
            raise ValueError(f"alternation fraction must be in [0, 1], got {self.alternation}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")


def lr_at(step, cfg):
    """``max(lr * 2**-floor(step / period), floor)``."""
    return max(cfg.lr * 2.0 ** (-(step // cfg.lr_period)), cfg.lr_floor)


def sample_sigmas(cfg, rng):
    """Draw (sigma0, sigma, delta).

    With probability ``cfg.alternation`` both levels share one uniform draw and
    delta is 1; otherwise they are independent and delta is 0 (1 on an exact tie).
    """
    if rng.random() < cfg.alternation:
        s = float(rng.uniform(0.0, cfg.sigma_max))
        return SigmaDraw(s, s, 1)
    s0 = float(rng.uniform(0.0, cfg.sigma_max))
    s = float(rng.uniform(0.0, cfg.sigma_max))
    return SigmaDraw(s0, s, int(s0 == s))


def _as_t(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _dtype_of(*nets):
    for n in nets:
        if hasattr(n, "dtype"):
            return n.dtype
    return np.float64


def _apply_D(D, z, sigma):
    if isinstance(D, Prior):
        return Tensor(np.asarray(D.prox(z.data, sigma), dtype=z.dtype))
    return D(z, sigma)


def _apply_G(G, x):
    if isinstance(G, Prior):
        return Tensor(np.asarray(G.grad(x.data), dtype=x.dtype))
    return G(x)


def loss_LD(D, z, x0, sigma0):
    """Per-entry mean absolute error of ``D_sigma0(z)`` against ``x0``."""
    dtype = _dtype_of(D)
    z, x0 = _as_t(z, dtype), _as_t(x0, dtype)
    return absolute(_apply_D(D, z, sigma0) - x0).mean()


def loss_LG(G, D, z, sigma, dz=None):
    """Per-entry mean of ``(sigma^2 G(D_sigma(z)) - (z - D_sigma(z)))^2``.

    Gradients reach both networks. ``D`` and ``G`` may also be analytic priors
    or any callables with the network signatures.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    z = _as_t(z, _dtype_of(G, D))
    if dz is None:
        dz = _apply_D(D, z, sigma)
    s2 = sigma ** 2
    if s2 == 0:
        return square(z - dz).mean()
    r = _apply_G(G, dz) * s2 - (z - dz)
    return square(r).mean()


def loss_total(LD, LG, delta, lam):
    if delta not in (0, 1):
        raise ValueError(f"delta must be 0 or 1, got {delta}")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if delta == 0:
        return LG * lam
    return LD * delta + LG * lam


# --------------------------------------------------------------------------
# loops

def write_log(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(LOG_COLUMNS)
        for r in rows:
            wr.writerow([r["step"]] + [f"{r[c]:.9g}" for c in LOG_COLUMNS[1:]])


def _check_finite(value, nets, dump_dir, step):
    if math.isfinite(value):
        return
    dump = None
    if dump_dir is not None:
        os.makedirs(dump_dir, exist_ok=True)
        for net in nets:
            dump = os.path.join(dump_dir, f"diverged_{net.kind}_step{step}.pnpr")
            save_checkpoint(dump, net)
    raise TrainingDivergedError(f"non-finite loss at step {step}", dump)


def _noise(rng, shape, sigma0, dtype):
    s = np.asarray(sigma0, dtype=np.float64).reshape((-1,) + (1,) * (len(shape) - 1))
    return (s * rng.standard_normal(shape)).astype(dtype)


def pretrain_denoiser(dataset, cfg, D=None, log_path=None, dump_dir=None, dtype=np.float32,
                      arch=None):
    """Train D alone on L_D with sigma = sigma0, drawn per sample in [0, sigma_max]."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if D is None:
        D = DenoiserNet(dataset.channels, seed=cfg.seed, dtype=dtype, **(arch or {}))
    rng = np.random.default_rng(cfg.seed)
    dataset.reset()
    opt = Adam(D.parameters(), lr=cfg.lr)
    rows = []
    for step in range(cfg.steps):
        opt.lr = lr_at(step, cfg)
        x0 = dataset.sample(cfg.batch_size, rng).astype(D.dtype)
        s0 = rng.uniform(0.0, cfg.sigma_max, cfg.batch_size)
        z = Tensor(x0 + _noise(rng, x0.shape, s0, D.dtype))
        ld = absolute(D(z, s0) - Tensor(x0)).mean()
        val = float(ld.item())
        _check_finite(val, [D], dump_dir, step)
        opt.zero_grad()
        ld.backward()
        try:
            opt.step()
        except FloatingPointError:
            _check_finite(float("nan"), [D], dump_dir, step)
        D.step += 1
        rows.append({"step": step, "L_D": val, "L_G": 0.0, "L": val, "lr": opt.lr,
                     "delta_rate": 1.0})
    if log_path:
        write_log(log_path, rows)
    D.history = rows
    return D


def joint_train(D, G, dataset, cfg, freeze_denoiser=False, log_path=None, dump_dir=None):
    """Train G (and, unless frozen, D) on the global loss.

    With ``freeze_denoiser`` delta is forced to 0 and D is left untouched, so
    the objective reduces to ``lam * L_G``.
    """
    if G is None:
        G = ReGNet(D.channels, seed=cfg.seed + 1, dtype=D.dtype)
    rng = np.random.default_rng(cfg.seed)
    dataset.reset()
    g_opt = Adam(G.parameters(), lr=cfg.lr)
    d_opt = None if freeze_denoiser else Adam(D.parameters(), lr=cfg.lr)
    rows, deltas = [], 0
    for step in range(cfg.steps):
        lr = lr_at(step, cfg)
        g_opt.lr = lr
        draw = sample_sigmas(cfg, rng)
        delta = 0 if freeze_denoiser else draw.delta
        deltas += delta
        x0 = dataset.sample(cfg.batch_size, rng).astype(D.dtype)
        z = Tensor(x0 + _noise(rng, x0.shape, draw.sigma0, D.dtype))
        if freeze_denoiser:
            with no_grad():
                dz = D(z, draw.sigma)
            dz = Tensor(dz.data)
        else:
            dz = D(z, draw.sigma)
        lg = loss_LG(G, D, z, draw.sigma, dz=dz)
        ld = absolute(dz - Tensor(x0)).mean() if delta else None
        total = loss_total(ld, lg, delta, cfg.lam)
        val = float(total.item())
        _check_finite(val, [D, G], dump_dir, step)
        g_opt.zero_grad()
        if d_opt is not None:
            d_opt.zero_grad()
        total.backward()
        try:
            g_opt.step()
            if d_opt is not None and (delta or cfg.update_denoiser_always):
                d_opt.lr = lr
                d_opt.step()
                D.step += 1
        except FloatingPointError:
            _check_finite(float("nan"), [D, G], dump_dir, step)
        G.step += 1
        rows.append({"step": step, "L_D": float(ld.item()) if ld is not None else 0.0,
                     "L_G": float(lg.item()), "L": val, "lr": lr,
                     "delta_rate": deltas / (step + 1)})
    if log_path:
        write_log(log_path, rows)
    G.history = rows
    return D, G


# --------------------------------------------------------------------------
# held-out evaluation

@dataclass
class HeldOut:
    """Fixed evaluation batches with their noise and sigma draws."""

    x0: list
    noise: list
    draws: list


def make_heldout(images, cfg, n_batches=8, seed=12345):
    """Held-out batches from ``images``; every other draw has delta = 1."""
    from .data import PatchDataset

    ds = PatchDataset(images, cfg.patch_size, augment=False, seed=seed)
    rng = np.random.default_rng(seed)
    x0s, noises, draws = [], [], []
    for i in range(n_batches):
        x0 = ds.sample(cfg.batch_size, rng)
        if i % 2 == 0:
            s = float(rng.uniform(0.01, cfg.sigma_max))
            draw = SigmaDraw(s, s, 1)
        else:
            draw = SigmaDraw(float(rng.uniform(0.01, cfg.sigma_max)),
                             float(rng.uniform(0.01, cfg.sigma_max)), 0)
        x0s.append(x0)
        noises.append(rng.standard_normal(x0.shape))
        draws.append(draw)
    return HeldOut(x0s, noises, draws)


def evaluate_losses(D, G, heldout, lam=0.004):
    """Mean L_D (delta=1 batches), L_G (all batches) and global loss on held-out data."""
    lds, lgs, totals = [], [], []
    dtype = D.dtype if hasattr(D, "dtype") else np.float64
    with no_grad():
        for x0, eta, draw in zip(heldout.x0, heldout.noise, heldout.draws):
            z = Tensor((x0 + draw.sigma0 * eta).astype(dtype))
            dz = _apply_D(D, z, draw.sigma)
            lg = float(loss_LG(G, D, z, draw.sigma, dz=dz).item())
            lgs.append(lg)
            if draw.delta:
                ld = float(np.mean(np.abs(dz.data - x0)))
                lds.append(ld)
                totals.append(ld + lam * lg)
            else:
                totals.append(lam * lg)
    return {"L_D": float(np.mean(lds)) if lds else 0.0, "L_G": float(np.mean(lgs)),
            "L": float(np.mean(totals))}


def config_dict(cfg):
    return asdict(cfg)
