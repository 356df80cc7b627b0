"""Bias-free residual U-Nets for the denoiser and the regularizing-gradient net.

Without additive biases and with ReLU activations, every network here maps
zero to zero and is positively homogeneous: ``f(a*x) = a*f(x)`` for ``a > 0``.
"""

import math
import warnings

import numpy as np

from ..tensor import Tensor, concat, conv2d, no_grad, pad2d, relu, resample
from .analytic import Prior

__all__ = ["BiasFreeUNet", "DenoiserNet", "ReGNet", "DenoiserPrior", "ReGPrior",
           "SIGMA_MAX", "denoise", "reg_grad", "build_network"]

SIGMA_MAX = 50.0 / 255.0


class BiasFreeUNet:
    """Miniature DRUNet: residual blocks per scale, strided-conv down, zero-fill+conv up.

    Parameters
    ----------
    in_channels, out_channels : int
    base_channels : int
        Channels at full resolution; doubled at each coarser scale.
    scales : int
        Number of resolution levels (1 means no down-sampling).
    blocks : int
        Residual blocks per scale.
    """

    def __init__(self, in_channels, out_channels, base_channels=8, scales=2, blocks=2,
                 seed=0, dtype=np.float32):
        if scales < 1 or blocks < 0:
            raise ValueError("scales must be >= 1 and blocks >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.base_channels = base_channels
        self.scales = scales
        self.blocks = blocks
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params = {}

        def add(name, cout, cin, gain=1.0):
            fan_in = cin * 9
            std = gain * math.sqrt(2.0 / fan_in)
            w = rng.standard_normal((cout, cin, 3, 3)) * std
            self.params[name] = Tensor(w.astype(self.dtype), requires_grad=True, name=name)

        ch = [base_channels * 2 ** s for s in range(scales)]
        add("head", ch[0], in_channels)
        for s in range(scales - 1):
            for b in range(blocks):
                add(f"enc{s}.res{b}.conv1", ch[s], ch[s])
                add(f"enc{s}.res{b}.conv2", ch[s], ch[s])
            add(f"down{s}", ch[s + 1], ch[s])
        for b in range(blocks):
            add(f"body.res{b}.conv1", ch[-1], ch[-1])
            add(f"body.res{b}.conv2", ch[-1], ch[-1])
        for s in reversed(range(scales - 1)):
            # zero-filled input carries a quarter of the energy
            add(f"up{s}", ch[s], ch[s + 1], gain=2.0)
            for b in range(blocks):
                add(f"dec{s}.res{b}.conv1", ch[s], ch[s])
                add(f"dec{s}.res{b}.conv2", ch[s], ch[s])
        add("tail", out_channels, ch[0])

    @property
    def multiple(self):
        return 2 ** (self.scales - 1)

    def parameters(self):
        return list(self.params.values())

    def _resblocks(self, x, prefix):
        p = self.params
        for b in range(self.blocks):
            y = relu(conv2d(x, p[f"{prefix}.res{b}.conv1"]))
            x = x + conv2d(y, p[f"{prefix}.res{b}.conv2"])
        return x

    def __call__(self, x):
        p = self.params
        h, w = x.shape[-2:]
        m = self.multiple
        x = pad2d(x, (-h) % m, (-w) % m)
        x0 = conv2d(x, p["head"])
        cur = x0
        skips = []
        for s in range(self.scales - 1):
            cur = self._resblocks(cur, f"enc{s}")
            skips.append(cur)
            cur = conv2d(cur, p[f"down{s}"], stride=2)
        cur = self._resblocks(cur, "body")
        for s in reversed(range(self.scales - 1)):
            cur = conv2d(resample(cur, 2, "up"), p[f"up{s}"])
            cur = self._resblocks(cur + skips[s], f"dec{s}")
        out = conv2d(cur + x0, p["tail"])
        if out.shape[-2:] != (h, w):
            out = out[..., :h, :w]
        return out


class _Network:
    kind = "network"

    def __init__(self, net, channels):
        self.net = net
        self.channels = channels
        self.step = 0

    @property
    def dtype(self):
        return self.net.dtype

    @property
    def params(self):
        return self.net.params

    def parameters(self):
        return self.net.parameters()

    def architecture(self):
        n = self.net
        return {"kind": self.kind, "scales": n.scales, "base_channels": n.base_channels,
                "blocks": n.blocks, "in_channels": n.in_channels,
                "out_channels": n.out_channels}

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.net.params.items()}

    def load_state_dict(self, state):
        own = self.net.params
        if set(state) != set(own):
            raise ValueError("parameter names do not match the architecture")
        for k, v in state.items():
            if v.shape != own[k].shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {own[k].shape}")
            own[k].data = np.ascontiguousarray(v, dtype=self.dtype)

    def copy(self):
        twin = build_network(self.architecture(), dtype=self.dtype)
        twin.load_state_dict(self.state_dict())
        twin.step = self.step
        return twin

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def _as_batch(self, x):
        """Batch view of ``x``; single-channel nets fold extra channels into the batch."""
        x = np.asarray(x)
        shape = x.shape
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4:
            raise ValueError(f"expected (N, C, H, W) or (C, H, W), got {shape}")
        if x.shape[1] != self.channels:
            if self.channels != 1:
                raise ValueError(f"network expects {self.channels} channels, got {x.shape[1]}")
            x = x.reshape(-1, 1, *x.shape[2:])
        return Tensor(x.astype(self.dtype)), shape


class DenoiserNet(_Network):
    """Non-blind denoiser fed with the image and a constant noise-level map.

    Output is ``z - U([z, sigma_map])`` (residual learning), which keeps the
    network bias-free and jointly homogeneous in ``(z, sigma)``.
    """

    kind = "denoiser"

    def __init__(self, channels=1, base_channels=8, scales=2, blocks=2, seed=0,
                 dtype=np.float32):
        super().__init__(BiasFreeUNet(channels + 1, channels, base_channels, scales, blocks,
                                      seed=seed, dtype=dtype), channels)

    def __call__(self, z, sigma):
        """Differentiable forward on a (N, C, H, W) tensor."""
        n, _, h, w = z.shape
        sig = np.broadcast_to(np.asarray(sigma, dtype=self.dtype).reshape(-1, 1, 1, 1),
                              (n, 1, h, w))
        inp = concat([z, Tensor(np.ascontiguousarray(sig))], axis=1)
        return z - self.net(inp)


class ReGNet(_Network):
    """Regularizing-gradient network: image in, same-shape vector field out."""

    kind = "reg"

    def __init__(self, channels=1, base_channels=8, scales=2, blocks=2, seed=0,
                 dtype=np.float32):
        super().__init__(BiasFreeUNet(channels, channels, base_channels, scales, blocks,
                                      seed=seed, dtype=dtype), channels)

    def __call__(self, x):
        return self.net(x)


def build_network(arch, dtype=np.float32, seed=0):
    kind = arch["kind"]
    common = dict(base_channels=arch["base_channels"], scales=arch["scales"],
                  blocks=arch["blocks"], seed=seed, dtype=dtype)
    if kind == "denoiser":
        if arch["in_channels"] != arch["out_channels"] + 1:
            raise ValueError("denoiser needs in_channels = out_channels + 1")
        return DenoiserNet(channels=arch["out_channels"], **common)
    if kind == "reg":
        if arch["in_channels"] != arch["out_channels"]:
            raise ValueError("regularizing net needs in_channels = out_channels")
        return ReGNet(channels=arch["out_channels"], **common)
    raise ValueError(f"unknown network kind {kind!r}")


def denoise(net, z, sigma, sigma_max=SIGMA_MAX):
    """Inference-mode denoising of an array; out-of-range sigma is clamped."""
    if sigma < 0 or sigma > sigma_max:
        warnings.warn(f"denoiser sigma {sigma:.4g} outside [0, {sigma_max:.4g}]; clamped",
                      RuntimeWarning, stacklevel=2)
        sigma = min(max(sigma, 0.0), sigma_max)
    zt, shape = net._as_batch(z)
    with no_grad():
        out = net(zt, sigma).data.astype(np.float64)
    return out.reshape(shape)


def reg_grad(net, x):
    """Inference-mode evaluation of the regularizing-gradient network."""
    xt, shape = net._as_batch(x)
    with no_grad():
        out = net(xt).data.astype(np.float64)
    return out.reshape(shape)


class DenoiserPrior(Prior):
    """Prior whose proximal operator is a trained denoiser."""

    has_prox = True
    name = "denoiser"

    def __init__(self, net):
        self.net = net

    def prox(self, z, sigma):
        return denoise(self.net, z, sigma)


class ReGPrior(Prior):
    """Prior whose gradient is a trained regularizing-gradient network."""

    has_grad = True
    name = "reg"

    def __init__(self, net):
        self.net = net

    def grad(self, x):
        return reg_grad(self.net, x)
