import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..metrics import psnr

__all__ = ["SolveTrace", "DivergenceError", "fmt"]


def fmt(v):
    if v is None:
        return ""
    if math.isinf(v):
        return "inf"
    return f"{v:.10g}"


class DivergenceError(FloatingPointError):
    """A solver produced a non-finite iterate; ``trace`` holds the history so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolveTrace:
    """Per-iteration history of a solver run."""

    psnr: list = field(default_factory=list)
    iterate_mse: list = field(default_factory=list)
    objective: list = field(default_factory=list)

    def __len__(self):
        return len(self.iterate_mse)

    def record(self, x_new, x_old, x_true=None, objective=None):
        d = x_new - x_old
        self.iterate_mse.append(float(np.mean(d * d)))
        if x_true is not None:
            self.psnr.append(psnr(x_new, x_true))
        if objective is not None:
            self.objective.append(float(objective))

    def rows(self):
        for i in range(len(self)):
            yield (i + 1,
                   self.psnr[i] if i < len(self.psnr) else None,
                   self.iterate_mse[i],
                   self.objective[i] if i < len(self.objective) else None)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iter", "psnr", "iterate_mse", "objective"])
            for it, p, m, o in self.rows():
                wr.writerow([it, fmt(p), fmt(m), fmt(o)])
