"""Fixed-vs-joint denoiser ablation and ADMM convergence study."""

import copy
import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..priors import as_prior
from ..solvers.trace import fmt
from ..training import TrainConfig, evaluate_losses, make_heldout
from .config import ConfigError
from .experiment import _run_one, check_compatibility, ground_truth_images, solver_settings

__all__ = ["AblationReport", "StabilityReport", "ablation_fixed_vs_joint",
           "admm_stability_study", "heldout_residual_error"]


def heldout_residual_error(D, G, images, patch_size=16, n_batches=8, seed=12345):
    """Mean residual-identity error of (G, D) on fixed held-out noisy patches."""
    cfg = TrainConfig(patch_size=patch_size)
    held = make_heldout(images, cfg, n_batches=n_batches, seed=seed)
    return evaluate_losses(D, G, held, lam=cfg.lam)["L_G"]


def _with(cfg, **sets):
    c = copy.deepcopy(cfg)
    for k, v in sets.items():
        c.set(k.replace("__", "."), v)
    return c


def _restore_all(cfg, prior, images):
    scfg = solver_settings(cfg)
    check_compatibility(cfg["solver"]["algorithm"], prior)
    return [_run_one(i, name, im, cfg, prior, scfg, None) for i, (name, im) in enumerate(images)]


def _mean_curve(results, attr):
    curves = [getattr(r.trace, attr) for r in results if r.trace is not None]
    if not curves or not all(curves):
        return []
    n = min(len(c) for c in curves)
    return [float(np.mean([c[i] for c in curves])) for i in range(n)]


@dataclass
class AblationReport:
    residual_error: dict
    per_image: list
    curves: dict = field(default_factory=dict)

    @property
    def mean_delta(self):
        d = [r["delta"] for r in self.per_image if math.isfinite(r["delta"])]
        return float(np.mean(d)) if d else math.nan

    def write(self, out):
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "ablation.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["name", "psnr_input", "psnr_frozen", "psnr_joint", "delta"])
            for r in self.per_image:
                wr.writerow([r["name"], fmt(r["psnr_input"]), fmt(r["psnr_frozen"]),
                             fmt(r["psnr_joint"]), fmt(r["delta"])])
        with open(os.path.join(out, "residual_identity.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["variant", "residual_identity_error"])
            for k in ("frozen", "joint"):
                wr.writerow([k, fmt(self.residual_error[k])])
        _curve_csv(os.path.join(out, "psnr_curves.csv"), self.curves, "psnr")


def _curve_csv(path, curves, what):
    names = list(curves)
    n = max((len(c) for c in curves.values()), default=0)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["iter"] + [f"{what}_{k}" for k in names])
        for i in range(n):
            wr.writerow([i + 1] + [fmt(curves[k][i]) if i < len(curves[k]) else ""
                                   for k in names])


def ablation_fixed_vs_joint(cfg, joint, frozen, heldout_images=None, out_dir=None):
    """Compare (D, G) trained jointly against (D, G) trained with D frozen.

    Both G variants run identical PnP-GD restorations on the configured
    images. Reports per-image PSNR, the joint-minus-frozen delta, mean PSNR
    curves over iterations, and each pair's held-out residual-identity error.
    """
    for label, pair in (("joint", joint), ("frozen", frozen)):
        if pair is None or any(n is None for n in pair):
            raise ConfigError(f"the {label} variant needs both a denoiser and a reg network")
    cfg = _with(cfg, solver__algorithm="pnp_gd")
    images = ground_truth_images(cfg)
    held = heldout_images if heldout_images is not None else [im for _, im in images]
    st = cfg["study"]
    res_err = {k: heldout_residual_error(D, G, held, n_batches=st["heldout_count"],
                                         seed=st["heldout_seed"])
               for k, (D, G) in (("joint", joint), ("frozen", frozen))}
    runs = {k: _restore_all(cfg, as_prior(G), images)
            for k, (_, G) in (("joint", joint), ("frozen", frozen))}
    per_image = []
    for rj, rf in zip(runs["joint"], runs["frozen"]):
        per_image.append({"name": rj.name, "psnr_input": rj.psnr_input,
                          "psnr_frozen": rf.psnr, "psnr_joint": rj.psnr,
                          "delta": rj.psnr - rf.psnr})
    curves = {k: _mean_curve(v, "psnr") for k, v in runs.items()}
    rep = AblationReport(res_err, per_image, curves)
    if out_dir:
        rep.write(out_dir)
        if cfg["run"]["figures"] and all(curves.values()):
            from .plotting import plot_curves
            plot_curves(os.path.join(out_dir, "psnr_curves.svg"), curves, "PSNR [dB]")
    return rep


@dataclass
class StabilityReport:
    psnr: dict
    iterate_mse: dict
    final_psnr: dict

    def write(self, out):
        os.makedirs(out, exist_ok=True)
        _curve_csv(os.path.join(out, "admm_psnr.csv"), self.psnr, "psnr")
        _curve_csv(os.path.join(out, "admm_iterate_mse.csv"), self.iterate_mse, "iterate_mse")


def admm_stability_study(cfg, denoisers, out_dir=None):
    """Run PnP-ADMM with each prior in ``denoisers`` ({label: prior or network}).

    Exports mean PSNR and consecutive-iterate MSE per iteration; ``max_iter``
    beyond ``n_iter`` shows behaviour once the schedule is held fixed.
    """
    if not denoisers:
        raise ConfigError("admm_stability_study needs at least one denoiser")
    cfg = _with(cfg, solver__algorithm="admm")
    images = ground_truth_images(cfg)
    psnr_c, mse_c, final = {}, {}, {}
    for label, den in denoisers.items():
        runs = _restore_all(cfg, as_prior(den), images)
        bad = [r for r in runs if r.status != "ok"]
        if bad:
            raise RuntimeError(f"ADMM with {label} failed on {bad[0].name}: {bad[0].status}")
        psnr_c[label] = _mean_curve(runs, "psnr")
        mse_c[label] = _mean_curve(runs, "iterate_mse")
        final[label] = float(np.mean([r.psnr for r in runs]))
    rep = StabilityReport(psnr_c, mse_c, final)
    if out_dir:
        rep.write(out_dir)
        if cfg["run"]["figures"]:
            from .plotting import plot_curves
            plot_curves(os.path.join(out_dir, "admm_psnr.svg"), psnr_c, "PSNR [dB]")
            plot_curves(os.path.join(out_dir, "admm_iterate_mse.svg"), mse_c,
                        "MSE between consecutive iterates", logy=True)
    return rep
