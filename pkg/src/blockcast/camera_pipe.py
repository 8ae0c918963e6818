"""Camera frame normalization and augmentation."""

import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureTensor, derive_rng
from .errors import MalformedImageError

DEFAULT_TARGET = (256, 256)


@dataclass(frozen=True)
class CameraAugmentParams:
    flip_prob: float = 0.5
    max_rotation_deg: float = 5.0
    blur_sigma: float = 0.0

    def __post_init__(self):
        if self.max_rotation_deg > 15.0:
            raise ValueError("rotation bound must be <= 15 degrees")
        if self.blur_sigma < 0:
            raise ValueError("blur sigma must be >= 0")


def bilinear_resize(img, out_h: int, out_w: int) -> np.ndarray:
    """Resample (H, W, C) with bilinear interpolation, half-pixel centers."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if h == out_h and w == out_w:
        return img.copy()

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(src).astype(np.int64)
        frac = src - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_normalize(img, target=DEFAULT_TARGET) -> FeatureTensor:
    """Resize an 8-bit (H, W, 3) image and scale to a [0, 1] (3, H, W) tensor."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or 0 in img.shape[:2]:
        raise MalformedImageError(f"expected (H, W, 3) image, got {img.shape}")
    resized = bilinear_resize(img.astype(np.float64), target[0], target[1])
    return FeatureTensor(
        dims=("channel", "y", "x"),
        data=np.ascontiguousarray(resized.transpose(2, 0, 1)) / 255.0,
    )


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps with radius ceil(3 sigma)."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(tensor, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a (C, H, W) tensor with edge replication."""
    if sigma == 0:
        return np.asarray(tensor, dtype=np.float64).copy()
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    out = np.asarray(tensor, dtype=np.float64)
    padded = np.pad(out, ((0, 0), (r, r), (0, 0)), mode="edge")
    out = sum(k[i] * padded[:, i : i + out.shape[1], :] for i in range(len(k)))
    padded = np.pad(out, ((0, 0), (0, 0), (r, r)), mode="edge")
    out = sum(k[i] * padded[:, :, i : i + out.shape[2]] for i in range(len(k)))
    return out


def rotate_image(tensor, theta_rad: float) -> np.ndarray:
    """Rotate a (C, H, W) tensor about its center, bilinear, edge replicated."""
    t = np.asarray(tensor, dtype=np.float64)
    _, h, w = t.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    c, s = math.cos(theta_rad), math.sin(theta_rad)
    # inverse mapping: sample the source at the un-rotated location
    sx = c * (xs - cx) + s * (ys - cy) + cx
    sy = -s * (xs - cx) + c * (ys - cy) + cy
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    top = t[:, y0, x0] * (1 - fx) + t[:, y0, x1] * fx
    bot = t[:, y1, x0] * (1 - fx) + t[:, y1, x1] * fx
    return top * (1 - fy) + bot * fy


def camera_augment(tensor, rng_seed: int,
                   params: CameraAugmentParams = CameraAugmentParams()) -> np.ndarray:
    """Random horizontal flip, small rotation, and Gaussian blur on (C, H, W).

    Deterministic per seed. With all parameters off this is an exact
    identity.
    """
    t = np.asarray(tensor, dtype=np.float64)
    rng = derive_rng(rng_seed, "camera-augment")
    flip = rng.random() < params.flip_prob
    theta = rng.uniform(
        -math.radians(params.max_rotation_deg), math.radians(params.max_rotation_deg)
    )
    if flip:
        t = t[:, :, ::-1]
    if theta != 0.0:
        t = rotate_image(t, theta)
    if params.blur_sigma > 0:
        t = gaussian_blur(t, params.blur_sigma)
    return np.ascontiguousarray(t)
