"""Experiment configuration, orchestration, studies and file I/O."""

from ..metrics import mse, psnr
from .config import ConfigError, ExperimentConfig, load_config, safe_eval
from .experiment import ImageResult, Report, run_experiment
from .io import load_image, save_image
from .presets import solver_preset, unrolled_preset
from .studies import ablation_fixed_vs_joint, admm_stability_study, heldout_residual_error

__all__ = [
    "psnr", "mse", "ConfigError", "ExperimentConfig", "load_config", "safe_eval",
    "Report", "ImageResult", "run_experiment", "load_image", "save_image",
    "solver_preset", "unrolled_preset", "ablation_fixed_vs_joint", "admm_stability_study",
    "heldout_residual_error",
]
