"""Image and tensor file I/O."""

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..priors.checkpoint import load_checkpoint, save_checkpoint
from ..tensor.serialize import FormatError, load_ptns, save_ptns

__all__ = ["load_image", "save_image", "list_images", "load_ptns", "save_ptns",
           "load_checkpoint", "save_checkpoint", "FormatError"]


def load_image(path, channels=None):
    """8-bit image file -> float64 array (C, H, W) in [0, 1].

    ``channels`` forces 1 (luma) or 3 (RGB); by default greyscale files give
    one channel and everything else three.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if channels is None:
                channels = 1 if im.mode in ("L", "1", "I;16", "I") else 3
            if channels not in (1, 3):
                raise ValueError(f"channels must be 1 or 3, got {channels}")
            arr = np.asarray(im.convert("L" if channels == 1 else "RGB"))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode image {path!r}: {exc}", 0) from None
    arr = arr.astype(np.float64) / 255.0
    return arr[None] if arr.ndim == 2 else np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(path, x):
    """Write a (C, H, W) or (H, W) array in [0, 1] as an 8-bit PNG (values clipped)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        if x.shape[0] == 1:
            x = x[0]
        elif x.shape[0] == 3:
            x = x.transpose(1, 2, 0)
        else:
            raise ValueError(f"cannot save an image with {x.shape[0]} channels")
    elif x.ndim != 2:
        raise ValueError(f"expected (C, H, W) or (H, W), got shape {x.shape}")
    q = np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q).save(path, format="PNG")


def list_images(spec):
    """Expand a whitespace-separated list of files and directories (PNG files, sorted)."""
    out = []
    for item in spec.split():
        if os.path.isdir(item):
            out.extend(sorted(os.path.join(item, f) for f in os.listdir(item)
                              if f.lower().endswith(".png")))
        elif os.path.isfile(item):
            out.append(item)
        else:
            raise FileNotFoundError(f"image path {item!r} does not exist")
    return out
