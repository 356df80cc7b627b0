"""Built-in oracle suite: adjoints, residual identity, solver agreement, gradients, formats."""

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import degradations as dg
from .priors import (
    DenoiserNet, LaplacianPrior, ReGNet, TikhonovPrior, decode_checkpoint,
    encode_checkpoint, residual_identity_error,
)
from .solvers import ADMMConfig, GDConfig, admm_schedule, map_closed_form, pnp_admm, pnp_gd
from .solvers.trace import fmt
from .solvers.unrolled import unrolled_forward
from .tensor import Tensor, absolute, conv2d, gradcheck, relu, resample, square
from .tensor.serialize import decode_ptns, encode_ptns

__all__ = ["Check", "run_selfcheck", "write_checks"]


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {fmt(self.value)} <= {fmt(self.tol)}"


def _operators(rng, hw=30):
    blur = dg.make_gaussian_kernel(9, 1.6).kernel
    return {
        "blur_fft": dg.CircularBlur(blur),
        "blur_direct": dg.CircularBlur(blur, method="direct"),
        "blur_aniso1": dg.CircularBlur(dg.load_anisotropic_kernel("aniso1")),
        "sr2_bicubic": dg.SuperResolution(dg.make_bicubic_kernel(2), 2),
        "sr3_bicubic": dg.SuperResolution(dg.make_bicubic_kernel(3), 3),
        "sr2_gaussian": dg.SuperResolution(dg.SRSpec("gaussian", 2).make_kernel(), 2),
        "mask": dg.MaskOperator(dg.make_mask((hw, hw), 0.3, int(rng.integers(1 << 31))).mask),
        "identity": dg.IdentityOperator(),
    }


def check_adjoints(rng, probes=10, hw=30):
    out = []
    for name, A in _operators(rng, hw).items():
        worst = 0.0
        for _ in range(probes):
            x = rng.standard_normal((2, hw, hw))
            y = rng.standard_normal(A.output_shape(x.shape))
            lhs, rhs = np.vdot(A.apply(x), y), np.vdot(x, A.adjoint(y))
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        out.append(Check(f"adjoint/{name}", worst, 1e-10))
    return out


def check_residual_identity(rng, probes=100, hw=16):
    out = []
    for prior in (TikhonovPrior(), LaplacianPrior(tol=1e-14, maxiter=2000)):
        worst = 0.0
        for _ in range(probes):
            z = rng.random((1, hw, hw))
            sigma = float(rng.uniform(0.01, 1.0))
            x = prior.prox(z, sigma)
            r = sigma ** 2 * prior.grad(x) - (z - x)
            worst = max(worst, float(np.max(np.abs(r))))
        out.append(Check(f"residual_identity/{prior.name}", worst, 1e-9))
        err = residual_identity_error(prior, prior, rng.random((1, hw, hw)), 0.3)
        out.append(Check(f"residual_identity_mse/{prior.name}", err, 1e-18))
    return out


def check_solver_equivalence(rng, instances=3, hw=16):
    sigma = 0.5
    ops = {"deblur": lambda: dg.CircularBlur(dg.make_gaussian_kernel(7, 1.6).kernel),
           "inpaint": lambda: dg.MaskOperator(
               dg.make_mask((hw, hw), 0.5, int(rng.integers(1 << 31))).mask),
           "sr2": lambda: dg.SuperResolution(dg.make_bicubic_kernel(2), 2)}
    out = []
    for name, mk in ops.items():
        worst = 0.0
        for _ in range(instances):
            A = mk()
            x = rng.random((1, hw, hw))
            y = A.apply(x) + 0.01 * rng.standard_normal(A.output_shape(x.shape))
            x0 = dg.initial_estimate(A, y)
            ref = map_closed_form(A, y, TikhonovPrior(), sigma)
            xg, _ = pnp_gd(y, A, TikhonovPrior(),
                           GDConfig(mu=1 / (1 + sigma ** 2), sigma=sigma, n_iter=600), x_init=x0)
            xa, _ = pnp_admm(y, A, TikhonovPrior(),
                             ADMMConfig(sigma=sigma, s0=sigma, sN=sigma, n_iter=1, max_iter=600),
                             x_init=x0)
            n = np.linalg.norm
            worst = max(worst, n(xg - ref) / n(ref), n(xa - ref) / n(ref), n(xg - xa) / n(xa))
        out.append(Check(f"solver_equivalence/{name}", worst, 1e-5))
    return out


def check_schedule():
    _, alpha = admm_schedule(0.1, 0.2, 0.2, 10)
    rho0, _ = admm_schedule(2.55 / 255, 50 / 255, 0.1 / 255, 25)
    return [Check("admm_schedule/alpha_constant", abs(alpha - 1.0), 1e-12),
            Check("admm_schedule/rho0", abs(rho0 - 0.002601), 1e-12)]


def check_gradients(rng):
    r = rng.standard_normal
    cases = {
        "conv2d_zero": (lambda x, k: conv2d(x, k), [r((2, 2, 5, 5)), r((3, 2, 3, 3))]),
        "conv2d_circular_s2": (lambda x, k: conv2d(x, k, padding="circular", stride=2),
                               [r((1, 2, 6, 6)), r((2, 2, 3, 3))]),
        "resample_down": (lambda x: resample(x, 2, "down"), [r((1, 1, 4, 4))]),
        "resample_up": (lambda x: resample(x, 2, "up"), [r((1, 1, 3, 3))]),
        "relu": (lambda x: relu(x), [r((1, 1, 4, 4)) + 0.05]),
        "loss_L1": (lambda a, b: absolute(a - b).mean(), [r((1, 1, 4, 4)), r((1, 1, 4, 4))]),
        "loss_L2": (lambda a, b: square(a - b).mean(), [r((1, 1, 4, 4)), r((1, 1, 4, 4))]),
    }
    G = ReGNet(1, base_channels=2, scales=2, blocks=1, seed=3, dtype=np.float64)
    A = dg.CircularBlur(dg.make_gaussian_kernel(3, 1.0).kernel)
    cases["unrolled_3step"] = (lambda y, x0: unrolled_forward(G, A, y, x0, 0.3, 0.5, 3),
                               [r((1, 1, 6, 6)), r((1, 1, 6, 6))])
    return [Check(f"gradient/{k}", gradcheck(f, arrs), 1e-5) for k, (f, arrs) in cases.items()]


def check_formats(rng):
    a = rng.standard_normal((2, 3, 4))
    b, _ = decode_ptns(encode_ptns(a))
    out = [Check("format/ptns_roundtrip", float(np.max(np.abs(a - b))), 0.0)]
    for cls in (DenoiserNet, ReGNet):
        net = cls(1, base_channels=4, seed=int(rng.integers(1000)))
        twin = decode_checkpoint(encode_checkpoint(net))
        x = rng.random((1, 1, 8, 8)).astype(net.dtype)
        if cls is DenoiserNet:
            o1, o2 = net(Tensor(x), 0.1).data, twin(Tensor(x), 0.1).data
        else:
            o1, o2 = net(Tensor(x)).data, twin(Tensor(x)).data
        out.append(Check(f"format/checkpoint_{net.kind}", float(np.max(np.abs(o1 - o2))), 0.0))
    return out


def run_selfcheck(seed=0):
    """Run every oracle check; returns a list of :class:`Check`."""
    rng = np.random.default_rng(seed)
    checks = []
    checks += check_adjoints(rng)
    checks += check_residual_identity(rng)
    checks += check_schedule()
    checks += check_gradients(rng)
    checks += check_solver_equivalence(rng)
    checks += check_formats(rng)
    return checks


def write_checks(checks, path_or_buf):
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["check", "status", "value", "tolerance"])
        for c in checks:
            wr.writerow([c.name, "PASS" if c.passed else "FAIL", fmt(c.value), fmt(c.tol)])
    finally:
        if own:
            fh.close()


def checks_csv(checks):
    buf = io.StringIO()
    write_checks(checks, buf)
    return buf.getvalue()
