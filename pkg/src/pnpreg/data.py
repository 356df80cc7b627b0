"""Procedural toy images and a seeded patch sampler."""

import numpy as np

__all__ = ["toy_image", "toy_images", "PatchDataset", "dihedral", "dihedral_inverse"]


def dihedral(x, k):
    """One of the 8 flips/rotations of the last two axes (k in 0..7)."""
    k = k % 8
    if k >= 4:
        x = np.flip(x, axis=-1)
    return np.rot90(x, k % 4, axes=(-2, -1))


def dihedral_inverse(x, k):
    k = k % 8
    x = np.rot90(x, -(k % 4), axes=(-2, -1))
    if k >= 4:
        x = np.flip(x, axis=-1)
    return x


def toy_image(size, channels, rng):
    """Smooth ramp plus shapes with sharp edges plus a patch of oriented texture."""
    h = w = size
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    img = np.empty((channels, h, w))
    base_dir = rng.uniform(-1, 1, 2)
    for c in range(channels):
        tint = rng.uniform(-0.1, 0.1)
        img[c] = 0.45 + tint + 0.25 * (base_dir[0] * (yy - 0.5) + base_dir[1] * (xx - 0.5))
    for _ in range(rng.integers(3, 7)):
        val = rng.uniform(0.0, 1.0) + rng.uniform(-0.08, 0.08, channels)
        if rng.random() < 0.5:
            y0, x0 = rng.uniform(0, 1, 2)
            hh, ww = rng.uniform(0.1, 0.5, 2)
            sel = (np.abs(yy - y0) < hh / 2) & (np.abs(xx - x0) < ww / 2)
        else:
            cy, cx = rng.uniform(0, 1, 2)
            r = rng.uniform(0.08, 0.3)
            sel = (yy - cy) ** 2 + (xx - cx) ** 2 < r ** 2
        img[:, sel] = val[:, None]
    if rng.random() < 0.7:
        freq = rng.uniform(6, 16)
        theta = rng.uniform(0, np.pi)
        wave = 0.12 * np.sin(2 * np.pi * freq * (np.cos(theta) * yy + np.sin(theta) * xx))
        cy, cx = rng.uniform(0.2, 0.8, 2)
        region = (np.abs(yy - cy) < 0.2) & (np.abs(xx - cx) < 0.2)
        img[:, region] += wave[region]
    return np.clip(img, 0.0, 1.0)


def toy_images(n, size=64, channels=1, seed=0):
    rng = np.random.default_rng(seed)
    return [toy_image(size, channels, rng) for _ in range(n)]


class PatchDataset:
    """Random square patches from a list of (C, H, W) images.

    Sampling is driven by the dataset's own generator, so a dataset built with
    the same seed yields the same sequence of batches.
    """

    def __init__(self, images, patch_size=32, augment=True, seed=0):
        if not images:
            raise ValueError("dataset needs at least one image")
        self.images = [np.asarray(im, dtype=np.float64) for im in images]
        ch = {im.shape[0] for im in self.images}
        if len(ch) != 1:
            raise ValueError("all images must have the same number of channels")
        self.channels = ch.pop()
        for im in self.images:
            if min(im.shape[1:]) < patch_size:
                raise ValueError(f"image {im.shape} smaller than patch size {patch_size}")
        self.patch_size = patch_size
        self.augment = augment
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.images)

    def reset(self):
        self.rng = np.random.default_rng(self.seed)

    def sample(self, batch_size, rng=None):
        rng = self.rng if rng is None else rng
        p = self.patch_size
        out = np.empty((batch_size, self.channels, p, p))
        for i in range(batch_size):
            im = self.images[rng.integers(len(self.images))]
            top = rng.integers(im.shape[1] - p + 1)
            left = rng.integers(im.shape[2] - p + 1)
            patch = im[:, top:top + p, left:left + p]
            if self.augment:
                patch = dihedral(patch, int(rng.integers(8)))
            out[i] = patch
        return out
