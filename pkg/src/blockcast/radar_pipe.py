"""Range-Doppler feature extraction: complex (4, 256, 250) cubes in,
8-channel (8, 256, 64) real feature tensors out."""

import numpy as np

from .core import FeatureTensor, derive_rng
from .errors import ShapeError

DOPPLER_TARGET = 64
CENTER_BIN = 125  # zero-frequency index after the shift, for 250 bins

FEATURE_CHANNELS = (
    "magnitude",
    "phase",
    "doppler_power",
    "channel_mean_magnitude",
    "channel_std_magnitude",
    "entropy",
    "mean_velocity",
    "spectral_width",
)


def doppler_fft(cube) -> np.ndarray:
    """Power spectrum along the slow-time (last) axis, zero frequency centered.

    For the native 250-bin axis the zero-frequency component lands at
    index 125.
    """
    cube = np.asarray(cube)
    spec = np.fft.fftshift(np.fft.fft(cube, axis=-1), axes=-1)
    return (spec.real ** 2 + spec.imag ** 2).astype(np.float64)


def resize_doppler(arr, target: int = DOPPLER_TARGET) -> np.ndarray:
    """Center-crop or symmetrically zero-pad the last axis to `target` bins."""
    arr = np.asarray(arr)
    length = arr.shape[-1]
    if length < 1:
        raise ShapeError("doppler axis must have at least one bin")
    if length == target:
        return arr
    if length > target:
        start = (length - target) // 2
        return arr[..., start : start + target]
    left = (target - length) // 2
    pad = [(0, 0)] * (arr.ndim - 1) + [(left, target - length - left)]
    return np.pad(arr, pad)


def assemble_radar_features(cube) -> FeatureTensor:
    """Build the stacked 8-channel (8, 256, 64) radar feature tensor.

    Channels: reference-antenna magnitude and phase (phase mapped to
    [0, 1]), log-scaled max-normalized Doppler power, cross-antenna mean
    and std of magnitude, per-cell antenna entropy in [0, 1], and
    power-weighted mean Doppler offset / spread per range bin broadcast
    across the Doppler axis.
    """
    cube = np.asarray(cube)
    if cube.ndim != 3 or cube.shape[0] != 4 or cube.shape[1] != 256:
        raise ShapeError(f"expected a (4, 256, L) cube, got {cube.shape}")
    n_ch = cube.shape[0]
    mag = np.abs(cube)

    ch_mag = mag[0]
    ch_phase = (np.angle(cube[0]) + np.pi) / (2.0 * np.pi)

    power = doppler_fft(cube).mean(axis=0)  # (256, L)
    logp = np.log1p(power)
    pmax = logp.max()
    ch_power = logp / pmax if pmax > 0 else np.zeros_like(logp)

    ch_mean = mag.mean(axis=0)
    ch_std = mag.std(axis=0)

    # Entropy of the per-cell antenna magnitude distribution. Scaling by
    # the cell max (instead of the sum) keeps the uniform case exact:
    # equal magnitudes give ratios of exactly 1.0 and H = log2(4)/log2(4).
    cell_max = mag.max(axis=0)
    safe_max = np.where(cell_max > 0, cell_max, 1.0)
    ratio = mag / safe_max
    with np.errstate(divide="ignore", invalid="ignore"):
        rlog = np.where(ratio > 0, ratio * np.log2(ratio), 0.0)
    s = ratio.sum(axis=0)
    ch_entropy = np.where(
        cell_max > 0,
        (np.log2(np.where(s > 0, s, 1.0)) - rlog.sum(axis=0) / np.where(s > 0, s, 1.0))
        / np.log2(n_ch),
        0.0,
    )
    ch_entropy = np.clip(ch_entropy, 0.0, 1.0)

    length = cube.shape[-1]
    center = length // 2
    idx = np.arange(length, dtype=np.float64)
    row_power = power.sum(axis=1)
    ok = row_power > 0
    mean_idx = np.zeros(256)
    mean_idx[ok] = (power[ok] @ idx) / row_power[ok]
    var_idx = np.zeros(256)
    var_idx[ok] = np.maximum(
        (power[ok] @ (idx ** 2)) / row_power[ok] - mean_idx[ok] ** 2, 0.0
    )
    ch_velocity = np.where(ok, (mean_idx - center) / center, 0.0)
    ch_width = np.where(ok, np.sqrt(var_idx) / center, 0.0)

    planes = [
        resize_doppler(ch_mag),
        resize_doppler(ch_phase),
        resize_doppler(ch_power),
        resize_doppler(ch_mean),
        resize_doppler(ch_std),
        resize_doppler(ch_entropy),
        np.repeat(ch_velocity[:, None], DOPPLER_TARGET, axis=1),
        np.repeat(ch_width[:, None], DOPPLER_TARGET, axis=1),
    ]
    return FeatureTensor(dims=("feature", "range", "doppler"),
                         data=np.stack(planes, axis=0))


def radar_augment(cube, rng_seed: int, sigma: float) -> np.ndarray:
    """Add i.i.d. complex Gaussian noise (sigma per component) to a cube."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    cube = np.asarray(cube, dtype=np.complex128)
    if sigma == 0:
        return cube.copy()
    rng = derive_rng(rng_seed, "radar-augment")
    noise = rng.standard_normal((2,) + cube.shape)
    return cube + sigma * (noise[0] + 1j * noise[1])
