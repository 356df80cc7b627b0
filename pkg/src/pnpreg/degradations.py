"""Linear degradation operators with exact adjoints.

All operators act on the last two axes of an array, so the same operator
serves single images ``(C, H, W)`` and batches ``(N, C, H, W)``. Intensities
are in [0, 1].
"""

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .tensor import DimensionError, Tensor, correlate2d, linear_map
from .tensor.serialize import load_ptns

__all__ = [
    "BlurSpec", "SRSpec", "MaskSpec", "IdentitySpec", "DegradationPipeline",
    "LinearOperator", "IdentityOperator", "CircularBlur", "Decimation",
    "SuperResolution", "MaskOperator", "ComposedOperator",
    "make_gaussian_kernel", "anisotropic_gaussian_kernel", "make_bicubic_kernel",
    "cubic", "bicubic_upsample", "make_mask", "build_operator", "add_awgn",
    "initial_estimate", "load_anisotropic_kernel", "ANISOTROPIC_COVARIANCES",
]


# --------------------------------------------------------------------------
# kernels

def make_gaussian_kernel(size, sigma_b):
    """Normalized, centrosymmetric ``size x size`` isotropic Gaussian."""
    if int(size) != size or size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma_b <= 0:
        raise ValueError(f"sigma_b must be positive, got {sigma_b}")
    r = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(r ** 2) / (2.0 * sigma_b ** 2))
    k = np.outer(g, g)
    k /= k.sum()
    return BlurSpec(kernel=k)


def anisotropic_gaussian_kernel(size, cov):
    """Gaussian with 2x2 covariance ``cov`` (rows, cols), normalized to sum 1."""
    if size % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {size}")
    cov = np.asarray(cov, dtype=np.float64)
    inv = np.linalg.inv(cov)
    r = np.arange(size, dtype=np.float64) - size // 2
    yy, xx = np.meshgrid(r, r, indexing="ij")
    pts = np.stack([yy, xx], axis=-1)
    q = np.einsum("...i,ij,...j->...", pts, inv, pts)
    k = np.exp(-0.5 * q)
    return k / k.sum()


# Placeholder motion-like kernels shipped in kernels/; 25x25, covariance in
# (row, col) pixel units.
ANISOTROPIC_COVARIANCES = {
    "aniso1": [[6.0, 3.5], [3.5, 3.0]],
    "aniso2": [[2.0, -1.2], [-1.2, 9.0]],
}


def load_anisotropic_kernel(name):
    if name not in ANISOTROPIC_COVARIANCES:
        raise ValueError(f"unknown anisotropic kernel {name!r}")
    ref = resources.files("pnpreg") / "kernels" / f"{name}.ptns"
    with resources.as_file(ref) as path:
        return load_ptns(path)


def cubic(x, a=-0.5):
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    out = np.where(x <= 1, (a + 2) * x3 - (a + 3) * x2 + 1, 0.0)
    out = np.where((x > 1) & (x < 2), a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, out)
    return out


def make_bicubic_kernel(t):
    """Odd-sized (4t-1) separable bicubic anti-aliasing kernel for factor ``t``.

    Taps are ``cubic(d / t) / t`` at integer offsets ``d``, centred on the pixel
    kept by decimation at index 0.
    """
    if t not in (2, 3):
        raise ValueError(f"bicubic kernel supports factors 2 and 3, got {t}")
    d = np.arange(-(2 * t - 1), 2 * t, dtype=np.float64)
    k1 = cubic(d / t) / t
    k1 /= k1.sum()
    return np.outer(k1, k1)


def _upsample_axis(y, t, axis):
    n = y.shape[axis]
    p = np.arange(n * t)
    base = p // t
    frac = (p % t) / t
    out = 0.0
    for off in (-1, 0, 1, 2):
        w = cubic(frac - off)
        taken = np.take(y, (base + off) % n, axis=axis)
        shape = [1] * y.ndim
        shape[axis] = n * t
        out = out + taken * w.reshape(shape)
    return out


def bicubic_upsample(y, t):
    """Periodic bicubic interpolation by integer factor ``t`` on the last two axes.

    Sample ``p = t*i`` reproduces ``y[i]`` exactly (index-0 grid alignment).
    """
    y = np.asarray(y, dtype=np.float64)
    return _upsample_axis(_upsample_axis(y, t, y.ndim - 2), t, y.ndim - 1)


def make_mask(shape, keep_rate, seed):
    """Binary mask over an (H, W) grid keeping exactly round(p * H * W) pixels."""
    if not 0 < keep_rate <= 1:
        raise ValueError(f"keep rate must be in (0, 1], got {keep_rate}")
    h, w = shape
    n = h * w
    keep = int(round(keep_rate * n))
    rng = np.random.default_rng(seed)
    flat = np.zeros(n)
    flat[rng.permutation(n)[:keep]] = 1.0
    return MaskSpec(keep_rate=keep_rate, seed=seed, mask=flat.reshape(h, w))


# --------------------------------------------------------------------------
# specs

@dataclass
class BlurSpec:
    kernel: np.ndarray
    boundary: str = "circular"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        if self.boundary != "circular":
            raise ValueError("only circular boundaries are supported for deblurring")


@dataclass
class SRSpec:
    kernel: str = "bicubic"
    factor: int = 2
    kernel_size: int = None

    def __post_init__(self):
        if self.factor not in (2, 3):
            raise ValueError(f"super-resolution factor must be 2 or 3, got {self.factor}")
        if self.kernel not in ("bicubic", "gaussian"):
            raise ValueError(f"unknown SR kernel {self.kernel!r}")

    @property
    def sigma_b(self):
        return 0.5 * self.factor

    def make_kernel(self):
        if self.kernel == "bicubic":
            return make_bicubic_kernel(self.factor)
        size = self.kernel_size or 2 * int(np.ceil(4 * self.sigma_b)) + 1
        return make_gaussian_kernel(size, self.sigma_b).kernel


@dataclass
class MaskSpec:
    keep_rate: float
    seed: int
    mask: np.ndarray


@dataclass
class IdentitySpec:
    pass


# --------------------------------------------------------------------------
# operators

def _check_2d(x):
    if np.ndim(x) < 2:
        raise DimensionError("operators act on arrays with at least 2 dimensions")


class LinearOperator:
    """A linear map ``A`` and its adjoint, acting on the last two axes."""

    name = "linear"

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def input_shape(self, output_shape):
        return tuple(output_shape)

    def __call__(self, x):
        return self.apply(x)

    def normal(self, x):
        """``A^T A x``."""
        return self.adjoint(self.apply(x))

    def apply_tensor(self, x):
        """Differentiable application to a :class:`Tensor`."""
        return linear_map(x, self.apply, self.adjoint)

    def adjoint_tensor(self, y):
        return linear_map(y, self.adjoint, self.apply)

    def tensor(self, x):
        return self.apply_tensor(x) if isinstance(x, Tensor) else self.apply(x)


class IdentityOperator(LinearOperator):
    name = "identity"

    def apply(self, x):
        _check_2d(x)
        return np.array(x, copy=True)

    def adjoint(self, y):
        _check_2d(y)
        return np.array(y, copy=True)


class CircularBlur(LinearOperator):
    """Circular 2-D convolution with a centred kernel.

    ``method="fft"`` (default) diagonalizes the convolution; ``"direct"``
    evaluates the index-wrapped sum. The two agree to rounding error.
    """

    name = "blur"

    def __init__(self, kernel, method="fft"):
        k = np.asarray(kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ValueError(f"blur kernel must be 2-D with odd extents, got {k.shape}")
        if method not in ("fft", "direct"):
            raise ValueError(f"unknown method {method!r}")
        self.kernel = k
        self.method = method
        self._otf = {}

    def otf(self, hw, real=True):
        """Transfer function of the kernel on an ``hw`` grid."""
        key = (tuple(hw), real)
        if key not in self._otf:
            h, w = hw
            kh, kw = self.kernel.shape
            if kh > h or kw > w:
                raise DimensionError(f"kernel {kh}x{kw} larger than image {h}x{w}")
            pad = np.zeros((h, w))
            pad[:kh, :kw] = self.kernel
            pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
            self._otf[key] = np.fft.rfft2(pad) if real else np.fft.fft2(pad)
        return self._otf[key]

    def _direct(self, x, kern):
        x = np.asarray(x, dtype=np.float64)
        lead = x.shape[:-2]
        h, w = x.shape[-2:]
        kh, kw = kern.shape
        if kh > h or kw > w:
            raise DimensionError(f"kernel {kh}x{kw} larger than image {h}x{w}")
        flat = x.reshape((-1, 1, h, w))
        out = correlate2d(flat, kern[None, None], padding="circular")
        return out.reshape(lead + (h, w))

    def apply(self, x):
        _check_2d(x)
        if self.method == "direct":
            return self._direct(x, self.kernel[::-1, ::-1])
        hw = np.shape(x)[-2:]
        return np.fft.irfft2(np.fft.rfft2(x) * self.otf(hw), s=hw)

    def adjoint(self, y):
        _check_2d(y)
        if self.method == "direct":
            return self._direct(y, self.kernel)
        hw = np.shape(y)[-2:]
        return np.fft.irfft2(np.fft.rfft2(y) * np.conj(self.otf(hw)), s=hw)


class Decimation(LinearOperator):
    """Keep every ``t``-th pixel from index 0; adjoint is zero-filling."""

    name = "decimate"

    def __init__(self, factor):
        self.factor = int(factor)

    def output_shape(self, input_shape):
        h, w = input_shape[-2:]
        t = self.factor
        if h % t or w % t:
            raise DimensionError(f"extent {h}x{w} not divisible by {t}")
        return tuple(input_shape[:-2]) + (h // t, w // t)

    def input_shape(self, output_shape):
        h, w = output_shape[-2:]
        return tuple(output_shape[:-2]) + (h * self.factor, w * self.factor)

    def apply(self, x):
        _check_2d(x)
        self.output_shape(np.shape(x))
        t = self.factor
        return np.ascontiguousarray(np.asarray(x)[..., ::t, ::t])

    def adjoint(self, y):
        _check_2d(y)
        y = np.asarray(y)
        t = self.factor
        out = np.zeros(self.input_shape(y.shape), dtype=np.result_type(y, np.float64))
        out[..., ::t, ::t] = y
        return out


class ComposedOperator(LinearOperator):
    """``outer(inner(x))``."""

    name = "composed"

    def __init__(self, outer, inner):
        self.outer, self.inner = outer, inner

    def output_shape(self, input_shape):
        return self.outer.output_shape(self.inner.output_shape(input_shape))

    def input_shape(self, output_shape):
        return self.inner.input_shape(self.outer.input_shape(output_shape))

    def apply(self, x):
        return self.outer.apply(self.inner.apply(x))

    def adjoint(self, y):
        return self.inner.adjoint(self.outer.adjoint(y))


class SuperResolution(ComposedOperator):
    """Circular blur followed by decimation by ``factor``."""

    name = "sr"

    def __init__(self, kernel, factor, method="fft"):
        self.blur = CircularBlur(kernel, method=method)
        self.decimate = Decimation(factor)
        self.factor = int(factor)
        super().__init__(self.decimate, self.blur)

    @property
    def kernel(self):
        return self.blur.kernel


class MaskOperator(LinearOperator):
    """Pixel-wise binary mask, shared across channels; self-adjoint projection."""

    name = "mask"

    def __init__(self, mask):
        m = np.asarray(mask, dtype=np.float64)
        if m.ndim != 2 or not np.all((m == 0) | (m == 1)):
            raise ValueError("mask must be a 2-D array of zeros and ones")
        self.mask = m

    def _check(self, x):
        _check_2d(x)
        if np.shape(x)[-2:] != self.mask.shape:
            raise DimensionError(f"mask {self.mask.shape} does not match image {np.shape(x)[-2:]}")

    def apply(self, x):
        self._check(x)
        return np.asarray(x) * self.mask

    adjoint = apply


def build_operator(spec, method="fft"):
    """Construct the :class:`LinearOperator` described by ``spec``."""
    if spec is None or isinstance(spec, IdentitySpec):
        return IdentityOperator()
    if isinstance(spec, BlurSpec):
        return CircularBlur(spec.kernel, method=method)
    if isinstance(spec, SRSpec):
        return SuperResolution(spec.make_kernel(), spec.factor, method=method)
    if isinstance(spec, MaskSpec):
        return MaskOperator(spec.mask)
    raise ValueError(f"unsupported degradation spec {type(spec).__name__}")


# --------------------------------------------------------------------------
# noise and pipelines

def add_awgn(x, sigma_n, seed):
    """``x`` plus i.i.d. N(0, sigma_n^2) noise drawn from ``seed``."""
    if sigma_n < 0:
        raise ValueError(f"noise level must be non-negative, got {sigma_n}")
    x = np.asarray(x, dtype=np.float64)
    if sigma_n == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + sigma_n * rng.standard_normal(x.shape)


@dataclass
class DegradationPipeline:
    """One inverse-problem instance: ``y = A x + noise``."""

    operator: LinearOperator
    sigma_n: float = 0.0
    seed: int = 0
    spec: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.sigma_n < 0:
            raise ValueError(f"noise level must be non-negative, got {self.sigma_n}")

    def degrade(self, x, seed=None):
        return add_awgn(self.operator.apply(x), self.sigma_n, self.seed if seed is None else seed)

    def initial_estimate(self, y):
        return initial_estimate(self.operator, y)


def initial_estimate(operator, y):
    """Task-dependent starting point for the solvers.

    SR: bicubic upsampling of ``y``; inpainting: observed pixels with grey
    (0.5) elsewhere; blur and identity: ``y`` itself.
    """
    y = np.asarray(y, dtype=np.float64)
    if isinstance(operator, SuperResolution):
        return bicubic_upsample(y, operator.factor)
    if isinstance(operator, MaskOperator):
        return np.where(operator.mask > 0, y, 0.5)
    return y.copy()
