"""Iterative and closed-form solvers for linear inverse problems."""

from .admm import SIGMA_FLOOR, ADMMConfig, admm_schedule, pnp_admm, solve_data_subproblem
from .closed_form import map_closed_form
from .gd import GDConfig, REDConfig, pnp_gd, red_gd
from .trace import DivergenceError, SolveTrace
from .unrolled import UnrolledConfig, unrolled_forward, unrolled_gd_train

__all__ = [
    "ADMMConfig", "GDConfig", "REDConfig", "UnrolledConfig", "SolveTrace",
    "DivergenceError", "SIGMA_FLOOR", "admm_schedule", "solve_data_subproblem",
    "pnp_admm", "pnp_gd", "red_gd", "map_closed_form", "unrolled_forward",
    "unrolled_gd_train",
]
