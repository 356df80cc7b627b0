"""Published parameter blocks per task, algorithm and noise level.

Noise levels and denoiser strengths are stored in 8-bit units (value * 255).
"""

import math

from .config import ConfigError

__all__ = ["noise_key", "kernel_family", "solver_preset", "unrolled_preset", "NOISE_LEVELS"]

R2 = math.sqrt(2.0)
NOISE_LEVELS = {"0": 0.0, "sqrt2": R2, "2.55": 2.55, "7.65": 7.65}


def noise_key(sigma_n):
    s = sigma_n * 255.0
    for key, v in NOISE_LEVELS.items():
        if abs(s - v) < 1e-6:
            return key
    raise ConfigError(f"no published parameters for sigma_n*255 = {s:.6g}")


def kernel_family(task, kernel):
    if task in ("sr2", "sr3"):
        if kernel not in ("bicubic", "gaussian"):
            raise ConfigError(f"SR kernel must be bicubic or gaussian, got {kernel!r}")
        return kernel
    if task == "deblur":
        if kernel in ("gauss1.6", "gauss2.0"):
            return "isotropic"
        if kernel in ("aniso1", "aniso2"):
            return "anisotropic"
        raise ConfigError(f"unknown deblurring kernel {kernel!r}")
    return None


# (task, family, noise) -> (mu, sigma*255)
_GD = {}
for _t, _f, _mu0, _s0 in [("sr2", "bicubic", .008, 1.2), ("sr2", "gaussian", .008, .8),
                          ("sr3", "bicubic", .002, .9), ("sr3", "gaussian", .004, .4)]:
    _GD[(_t, _f, "0")] = (_mu0, _s0)
    _GD[(_t, _f, "sqrt2")] = (.002, R2)
    _GD[(_t, _f, "2.55")] = (.002, 2.55)
for _f, _mu in [("isotropic", .004), ("anisotropic", .005)]:
    for _n in ("sqrt2", "2.55", "7.65"):
        _GD[("deblur", _f, _n)] = (_mu, NOISE_LEVELS[_n])
_GD_INPAINT = {0.1: (.025, 3.6), 0.2: (.01, 1.0)}

# (task, noise) -> w for SR; sigma_f*255 and mu per scale
_RED_SR = {("sr2", "0"): .005, ("sr2", "sqrt2"): .03, ("sr2", "2.55"): .07,
           ("sr3", "0"): .005, ("sr3", "sqrt2"): .01, ("sr3", "2.55"): .03}
_RED_SR_SF = {"sr2": 7.0, "sr3": 10.0}
# deblur: (first kernel?, noise) -> (w, sigma_f*255)
_RED_DEBLUR = {(True, "sqrt2"): (.01, 10.0), (True, "2.55"): (.03, 16.0),
               (True, "7.65"): (.03, 16.0), (False, "sqrt2"): (.01, 16.0),
               (False, "2.55"): (.01, 16.0), (False, "7.65"): (.03, 16.0)}
_RED_INPAINT = {0.1: (.001, 27.0, .006), 0.2: (.001, 24.0, .008)}

# (task, family, noise) -> (s0*255, sN*255, N)
_ADMM = {
    ("sr2", "bicubic", "0"): (50, .1, 25), ("sr2", "bicubic", "sqrt2"): (20, 20, 30),
    ("sr2", "bicubic", "2.55"): (30, 30, 30),
    ("sr2", "gaussian", "0"): (50, .1, 25), ("sr2", "gaussian", "sqrt2"): (30, 30, 30),
    ("sr2", "gaussian", "2.55"): (45, 45, 30),
    ("sr3", "bicubic", "0"): (50, .1, 40), ("sr3", "bicubic", "sqrt2"): (60, 60, 30),
    ("sr3", "bicubic", "2.55"): (100, 100, 30),
    ("sr3", "gaussian", "0"): (50, .1, 25), ("sr3", "gaussian", "sqrt2"): (30, 30, 30),
    ("sr3", "gaussian", "2.55"): (45, 45, 30),
}
for _f, _N in [("isotropic", 20), ("anisotropic", 30)]:
    for _n, _s in [("sqrt2", 25), ("2.55", 30), ("7.65", 35)]:
        _ADMM[("deblur", _f, _n)] = (_s, _s, _N)
_ADMM_INPAINT = {0.1: (255, 1, 118), 0.2: (255, 1, 200)}

_UNROLLED = {("sr2", "0"): (1.2, .008), ("sr3", "0"): (1.6, .1),
             ("gauss1.6", "sqrt2"): (R2, .004), ("gauss2.0", "sqrt2"): (R2, .004)}


def _inpaint_rate(keep_rate):
    for p in (0.1, 0.2):
        if abs(keep_rate - p) < 1e-9:
            return p
    raise ConfigError(f"no published inpainting parameters for keep_rate={keep_rate}")


def solver_preset(algorithm, task, kernel, sigma_n, keep_rate=None):
    """Solver parameters (in [0, 1] intensity units) for one published configuration."""
    if algorithm == "closed_form":
        raise ConfigError("the closed-form solver has no published parameters")
    if task == "denoise":
        raise ConfigError("no published restoration parameters for plain denoising")
    if task == "inpaint":
        if sigma_n != 0:
            raise ConfigError("published inpainting parameters are for noiseless data")
        p = _inpaint_rate(keep_rate)
        if algorithm == "pnp_gd":
            mu, s = _GD_INPAINT[p]
            return dict(mu=mu, sigma=s / 255, n_iter=1500, update="adam", self_ensemble=True)
        if algorithm == "red":
            w, sf, mu = _RED_INPAINT[p]
            return dict(w=w, sigma_f=sf / 255, mu=mu, n_iter=800, update="adam")
        s0, sN, N = _ADMM_INPAINT[p]
        return dict(s0=s0 / 255, sN=sN / 255, n_iter=N)
    fam = kernel_family(task, kernel)
    nk = noise_key(sigma_n)
    try:
        if algorithm == "pnp_gd":
            mu, s = _GD[(task, fam, nk)]
            return dict(mu=mu, sigma=s / 255, n_iter=1500, update="adam", self_ensemble=True)
        if algorithm == "red":
            if task == "deblur":
                w, sf = _RED_DEBLUR[(kernel == "gauss1.6", nk)]
                mu = .01
            else:
                w, sf, mu = _RED_SR[(task, nk)], _RED_SR_SF[task], .08
            return dict(w=w, sigma_f=sf / 255, mu=mu, n_iter=300, update="adam")
        s0, sN, N = _ADMM[(task, fam, nk)]
        return dict(s0=s0 / 255, sN=sN / 255, n_iter=N)
    except KeyError:
        raise ConfigError(f"no published {algorithm} parameters for {task}/{kernel} "
                          f"at sigma_n*255={sigma_n * 255:.4g}") from None


def unrolled_preset(task, kernel, sigma_n):
    """(sigma, mu, n_steps) for the unrolled scheme."""
    nk = noise_key(sigma_n)
    key = (task, nk) if task in ("sr2", "sr3") else (kernel, nk)
    if key not in _UNROLLED:
        raise ConfigError(f"no published unrolled parameters for {task}/{kernel}/{nk}")
    s, mu = _UNROLLED[key]
    return s / 255, mu, 6
