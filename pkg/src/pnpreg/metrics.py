import math

import numpy as np

from .tensor import DimensionError

__all__ = ["psnr", "mse"]


def mse(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b, peak=1.0):
    """PSNR in dB over all channels jointly; ``inf`` for identical inputs, ``-inf`` on overflow."""
    m = mse(a, b)
    if m == 0:
        return math.inf
    if not math.isfinite(m):
        return -math.inf if m == math.inf else math.nan
    return 10.0 * math.log10(peak * peak / m)
