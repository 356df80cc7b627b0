"""Experiment orchestration: degrade, initialize, solve, measure, write outputs."""

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import degradations as dg
from ..data import toy_images
from ..metrics import psnr
from ..priors import (
    LaplacianPrior, TikhonovPrior, ZeroPrior, as_prior, build_network,
)
from ..solvers import (
    ADMMConfig, GDConfig, REDConfig, map_closed_form, pnp_admm, pnp_gd, red_gd,
)
from ..solvers.trace import fmt
from .config import ConfigError, ExperimentConfig
from .io import list_images, load_checkpoint, load_image, save_image, save_ptns
from .presets import solver_preset

__all__ = ["Report", "ImageResult", "run_experiment", "build_prior", "load_network",
           "solver_settings", "ground_truth_images", "make_operator", "REPORT_COLUMNS"]

REPORT_COLUMNS = ("index", "name", "psnr_input", "psnr", "iterations", "status")


@dataclass
class ImageResult:
    index: int
    name: str
    psnr_input: float = math.nan
    psnr: float = math.nan
    iterations: int = 0
    status: str = "ok"
    trace_path: str = None
    runtime: float = 0.0
    trace: object = field(default=None, repr=False)


@dataclass
class Report:
    """Per-image results of one experiment plus the config that produced them."""

    results: list
    config_echo: str
    runtime: float = 0.0
    out_dir: str = None

    @property
    def ok(self):
        return [r for r in self.results if r.status == "ok"]

    @property
    def mean_psnr(self):
        vals = [r.psnr for r in self.ok]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_psnr_input(self):
        vals = [r.psnr_input for r in self.ok]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def errors(self):
        return [(r.name, r.status) for r in self.results if r.status != "ok"]

    @property
    def trace_paths(self):
        return [r.trace_path for r in self.results if r.trace_path]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(REPORT_COLUMNS)
            for r in self.results:
                wr.writerow([r.index, r.name, fmt(r.psnr_input), fmt(r.psnr), r.iterations,
                             r.status])
            wr.writerow(["", "mean", fmt(self.mean_psnr_input), fmt(self.mean_psnr), "",
                         f"{len(self.ok)}/{len(self.results)} ok"])

    def summary(self):
        return {"mean_psnr": self.mean_psnr, "mean_psnr_input": self.mean_psnr_input,
                "runtime_s": self.runtime, "n_images": len(self.results),
                "errors": self.errors, "traces": self.trace_paths,
                "per_image": [{"name": r.name, "psnr": r.psnr, "psnr_input": r.psnr_input,
                               "runtime_s": r.runtime} for r in self.results]}


# --------------------------------------------------------------------------
# building blocks

def load_network(path, expected_kind, fp64=False):
    if path is None:
        raise ConfigError(f"a {expected_kind} checkpoint is required")
    if not os.path.isfile(path):
        raise ConfigError(f"checkpoint {path!r} does not exist")
    net = load_checkpoint(path)
    if net.kind != expected_kind:
        raise ConfigError(f"{path!r} holds a {net.kind} network, expected {expected_kind}")
    if fp64 and net.dtype != np.float64:
        twin = build_network(net.architecture(), dtype=np.float64)
        twin.load_state_dict(net.state_dict())
        net = twin
    return net


def build_prior(cfg):
    kind = cfg["prior"]["kind"]
    if kind == "tikhonov":
        return TikhonovPrior()
    if kind == "laplacian":
        return LaplacianPrior()
    if kind == "zero":
        return ZeroPrior()
    path = cfg.resolve_path(cfg["prior"]["checkpoint"])
    return as_prior(load_network(path, kind, fp64=cfg["run"]["fp64"]))


def solver_settings(cfg):
    """Merged solver parameters: published preset (if requested), then explicit keys."""
    s, t = cfg["solver"], cfg["task"]
    algo = s["algorithm"]
    params = {}
    if s["preset"]:
        params.update(solver_preset(algo, t["name"], t["kernel"], t["sigma_n"], t["keep_rate"]))
    for key in ("mu", "sigma", "n_iter", "max_iter", "tol", "w", "sigma_f", "s0", "sN"):
        if s[key] is not None:
            params[key] = s[key]
    if not s["preset"] or s["update"] != "plain":
        params["update"] = s["update"]
    if s["self_ensemble"]:
        params["self_ensemble"] = True

    def need(*keys):
        missing = [k for k in keys if params.get(k) is None]
        if missing:
            raise ConfigError(f"{algo} needs solver.{', solver.'.join(missing)}")

    try:
        if algo == "pnp_gd":
            need("mu", "sigma")
            return GDConfig(mu=params["mu"], sigma=params["sigma"],
                            n_iter=params.get("n_iter", 1500),
                            update=params.get("update", "plain"),
                            self_ensemble=params.get("self_ensemble", False),
                            tol=params.get("tol"))
        if algo == "red":
            need("w", "sigma_f", "mu")
            return REDConfig(w=params["w"], sigma_f=params["sigma_f"], mu=params["mu"],
                             n_iter=params.get("n_iter", 300),
                             update=params.get("update", "plain"),
                             self_ensemble=params.get("self_ensemble", False),
                             tol=params.get("tol"))
        if algo == "admm":
            need("s0", "sN", "n_iter")
            sigma = params.get("sigma")
            kw = dict(s0=params["s0"], sN=params["sN"], n_iter=params["n_iter"],
                      max_iter=params.get("max_iter"),
                      self_ensemble=params.get("self_ensemble", False), tol=params.get("tol"))
            if sigma is None:
                return ADMMConfig.for_noise(t["sigma_n"], **kw)
            return ADMMConfig(sigma=sigma, **kw)
        need("sigma")
        return {"sigma": params["sigma"]}
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def check_compatibility(algo, prior):
    needs = {"pnp_gd": ("has_grad", "a gradient"), "red": ("has_prox", "a denoiser"),
             "admm": ("has_prox", "a proximal operator"),
             "closed_form": ("quadratic", "a quadratic form")}[algo]
    if not getattr(prior, needs[0]):
        raise ConfigError(f"{algo} needs a prior with {needs[1]}; {prior.name} has none")


def _deblur_kernel(t):
    k = t["kernel"]
    if k.startswith("gauss"):
        try:
            sb = float(k[len("gauss"):])
        except ValueError:
            raise ConfigError(f"bad Gaussian kernel name {k!r}") from None
        return dg.make_gaussian_kernel(t["kernel_size"], sb).kernel
    if k in dg.ANISOTROPIC_COVARIANCES:
        return dg.load_anisotropic_kernel(k)
    raise ConfigError(f"unknown deblurring kernel {k!r}")


def make_operator(cfg, image_shape, seed):
    """Degradation operator for one image; masks are drawn from ``seed``."""
    t = cfg["task"]
    name, method = t["name"], t["operator_method"]
    if name == "denoise":
        return dg.IdentityOperator()
    if name == "deblur":
        return dg.CircularBlur(_deblur_kernel(t), method=method)
    if name in ("sr2", "sr3"):
        factor = int(name[2])
        if t["kernel"] == "bicubic":
            return dg.SuperResolution(dg.make_bicubic_kernel(factor), factor, method=method)
        if t["kernel"] == "gaussian":
            spec = dg.SRSpec(kernel="gaussian", factor=factor)
            return dg.SuperResolution(spec.make_kernel(), factor, method=method)
        raise ConfigError(f"SR kernel must be bicubic or gaussian, got {t['kernel']!r}")
    if not 0 < t["keep_rate"] <= 1:
        raise ConfigError(f"task.keep_rate must be in (0, 1], got {t['keep_rate']}")
    return dg.MaskOperator(dg.make_mask(image_shape[-2:], t["keep_rate"], seed).mask)


def ground_truth_images(cfg):
    """``[(name, image)]`` from ``data.images`` or, if empty, seeded toy images."""
    d = cfg["data"]
    if d["images"].strip():
        paths = list_images(" ".join(cfg.resolve_path(p) for p in d["images"].split()))
        if not paths:
            raise ConfigError("data.images matched no PNG files")
        return [(os.path.splitext(os.path.basename(p))[0],
                 load_image(p, channels=d["channels"] if d["channels"] in (1, 3) else None))
                for p in paths]
    imgs = toy_images(d["toy_count"], d["toy_size"], d["channels"], seed=cfg["run"]["seed"])
    return [(f"toy{i:03d}", im) for i, im in enumerate(imgs)]


def _crop(x, factor):
    h, w = x.shape[-2:]
    return x[..., : h - h % factor, : w - w % factor]


# --------------------------------------------------------------------------
# running

def _solve(algo, y, A, prior, scfg, x_init, x_true):
    if algo == "pnp_gd":
        return pnp_gd(y, A, prior, scfg, x_init=x_init, x_true=x_true)
    if algo == "red":
        return red_gd(y, A, prior, scfg, x_init=x_init, x_true=x_true)
    if algo == "admm":
        return pnp_admm(y, A, prior, scfg, x_init=x_init, x_true=x_true)
    x = map_closed_form(A, y, prior, scfg["sigma"], input_shape=x_init.shape)
    return x, None


def _run_one(index, name, x_gt, cfg, prior, scfg, dirs):
    t = cfg["task"]
    seed = cfg["run"]["seed"] + index
    res = ImageResult(index=index, name=name)
    t0 = time.perf_counter()
    try:
        if t["name"] in ("sr2", "sr3"):
            x_gt = _crop(x_gt, int(t["name"][2]))
        A = make_operator(cfg, x_gt.shape, seed)
        y = dg.add_awgn(A.apply(x_gt), t["sigma_n"], seed)
        x0 = dg.initial_estimate(A, y)
        res.psnr_input = psnr(np.clip(x0, 0, 1), x_gt)
        x, trace = _solve(cfg["solver"]["algorithm"], y, A, prior, scfg, x0, x_gt)
        res.psnr = psnr(np.clip(x, 0, 1), x_gt)
        res.trace = trace
        res.iterations = len(trace) if trace is not None else 0
        if dirs is not None:
            if trace is not None:
                res.trace_path = os.path.join(dirs["traces"], f"{name}.csv")
                trace.to_csv(res.trace_path)
            if cfg["run"]["save_images"]:
                save_image(os.path.join(dirs["images"], f"{name}_restored.png"), x)
                save_image(os.path.join(dirs["images"], f"{name}_input.png"), x0)
                save_ptns(os.path.join(dirs["images"], f"{name}_restored.ptns"), x)
    except Exception as exc:  # recorded per image; the rest of the run continues
        trace = getattr(exc, "trace", None)
        if trace is not None:
            res.iterations = len(trace)
        res.status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    res.runtime = time.perf_counter() - t0
    return res


def prepare(cfg):
    """Validate ``cfg`` and build (prior, solver config) before any image is touched."""
    if not isinstance(cfg, ExperimentConfig):
        raise TypeError("expected an ExperimentConfig")
    algo = cfg["solver"]["algorithm"]
    scfg = solver_settings(cfg)
    if cfg["run"]["jobs"] < 1:
        raise ConfigError("run.jobs must be >= 1")
    if algo in ("red", "admm") and cfg["prior"]["kind"] == "reg":
        raise ConfigError(f"{algo} needs a denoiser or an analytic prior, not a reg network")
    prior = build_prior(cfg)
    check_compatibility(algo, prior)
    return prior, scfg


def run_experiment(cfg, out_dir=None):
    """Run the configured restoration over every ground-truth image.

    Writes ``report.csv``, ``report.json``, ``config.ini``, per-image trace
    CSVs and images, and PSNR / iterate-MSE figures under ``out_dir``
    (default ``run.out``); pass ``out_dir=False`` to skip writing.
    """
    prior, scfg = prepare(cfg)
    images = ground_truth_images(cfg)
    out = cfg["run"]["out"] if out_dir is None else out_dir
    dirs = None
    if out:
        dirs = {"root": out, "traces": os.path.join(out, "traces"),
                "images": os.path.join(out, "images")}
        for d in dirs.values():
            os.makedirs(d, exist_ok=True)
    t0 = time.perf_counter()
    jobs = cfg["run"]["jobs"]
    args = [(i, name, im, cfg, prior, scfg, dirs) for i, (name, im) in enumerate(images)]
    if jobs == 1:
        results = [_run_one(*a) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(lambda a: _run_one(*a), args))
    report = Report(results=results, config_echo=cfg.echo(),
                    runtime=time.perf_counter() - t0, out_dir=out or None)
    if dirs is not None:
        report.write_csv(os.path.join(out, "report.csv"))
        with open(os.path.join(out, "config.ini"), "w") as fh:
            fh.write(report.config_echo)
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump(report.summary(), fh, indent=2, allow_nan=True)
        if cfg["run"]["figures"]:
            _figures(report, out)
    return report


def _figures(report, out):
    from .plotting import plot_curves

    traced = [r for r in report.results if r.trace is not None and len(r.trace)]
    if not traced:
        return
    if any(r.trace.psnr for r in traced):
        plot_curves(os.path.join(out, "psnr.svg"), {r.name: r.trace.psnr for r in traced},
                    "PSNR [dB]")
    plot_curves(os.path.join(out, "iterate_mse.svg"),
                {r.name: r.trace.iterate_mse for r in traced},
                "MSE between consecutive iterates", logy=True)
