"""Core raster type and filtering primitives.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``C`` in
``{1, 3}``, dtype float64, nominal value range ``[0, 1]``. Intermediate
results may leave the nominal range until :func:`clamp01` is applied.
Kernels are square, odd-sized 2-D float64 arrays.

All functions here are pure: no global state, no in-place mutation of
inputs, bit-identical outputs for identical inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidArgumentError

__all__ = [
    "ensure_image",
    "validate_kernel",
    "gaussian_kernel",
    "convolve2d",
    "resize_bicubic",
    "clamp01",
]


def ensure_image(img: np.ndarray) -> np.ndarray:
    """Coerce to a valid ``(H, W, C)`` float64 image.

    Accepts ``(H, W)`` input as shorthand for a single-channel image.
    Raises :class:`InvalidArgumentError` on bad shape, unsupported channel
    count, or non-finite values.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise InvalidArgumentError(f"image must be 2-D or 3-D, got ndim={arr.ndim}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise InvalidArgumentError(f"image dimensions must be positive, got {h}x{w}")
    if c not in (1, 3):
        raise InvalidArgumentError(f"image must have 1 or 3 channels, got {c}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("image contains NaN or Inf values")
    return arr


def validate_kernel(kernel: np.ndarray) -> np.ndarray:
    """Check that ``kernel`` is a finite, square, odd-sized 2-D array."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InvalidArgumentError(f"kernel must be a square 2-D array, got shape {k.shape}")
    if k.shape[0] % 2 == 0 or k.shape[0] < 1:
        raise InvalidArgumentError(f"kernel size must be odd and >= 1, got {k.shape[0]}")
    if not np.all(np.isfinite(k)):
        raise InvalidArgumentError("kernel contains NaN or Inf values")
    return k


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Isotropic Gaussian kernel of size ``(2*radius+1)``, normalized to sum 1.

    Weights are proportional to ``exp(-(x^2 + y^2) / (2 sigma^2))`` sampled
    at integer offsets from the center.
    """
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise InvalidArgumentError(f"sigma must be finite and positive, got {sigma}")
    radius = int(radius)
    if radius < 1:
        raise InvalidArgumentError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(offsets, offsets)
    weights = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def convolve2d(img: np.ndarray, kernel: np.ndarray, border: str = "replicate") -> np.ndarray:
    """Filter each channel with ``kernel`` using replicate border padding.

    The kernel is applied as a sliding dot product (no flip). Every kernel
    produced by this toolkit is point-symmetric, for which this is identical
    to true convolution. Output shape equals input shape.
    """
    if border != "replicate":
        raise InvalidArgumentError(f"unsupported border mode: {border!r}")
    arr = ensure_image(img)
    k = validate_kernel(kernel)
    r = k.shape[0] // 2
    if r == 0:
        return arr * k[0, 0]
    padded = np.pad(arr, ((r, r), (r, r), (0, 0)), mode="edge")
    windows = sliding_window_view(padded, (k.shape[0], k.shape[1]), axis=(0, 1))
    return np.tensordot(windows, k, axes=([3, 4], [0, 1]))


def _catmull_rom(x: np.ndarray) -> np.ndarray:
    """Cubic interpolation kernel with a = -0.5, support [-2, 2]."""
    ax = np.abs(x)
    near = (1.5 * ax - 2.5) * ax * ax + 1.0
    far = ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _resize_axis(arr: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = arr.shape[axis]
    scale = in_len / out_len
    centers = (np.arange(out_len, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(centers).astype(np.int64)
    frac = centers - base
    offsets = np.arange(-1, 3, dtype=np.int64)
    taps = np.clip(base[:, None] + offsets[None, :], 0, in_len - 1)
    weights = _catmull_rom(frac[:, None] - offsets[None, :].astype(np.float64))
    moved = np.moveaxis(arr, axis, 0)
    gathered = moved[taps]  # (out_len, 4, ...)
    shaped = weights.reshape(weights.shape + (1,) * (gathered.ndim - 2))
    return np.moveaxis((gathered * shaped).sum(axis=1), 0, axis)


def resize_bicubic(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize to ``(out_h, out_w)``.

    Uses the Catmull-Rom cubic (a = -0.5) with half-pixel-centered
    coordinate mapping: output pixel ``i`` samples the source at
    ``(i + 0.5) * in/out - 0.5``. Border taps replicate the edge pixel.
    No antialias prefilter is applied; callers wanting a pre-blur apply
    one explicitly.
    """
    arr = ensure_image(img)
    out_h, out_w = int(out_h), int(out_w)
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"output dimensions must be positive, got {out_h}x{out_w}")
    out = _resize_axis(arr, out_h, axis=0)
    return _resize_axis(out, out_w, axis=1)


def clamp01(img: np.ndarray) -> np.ndarray:
    """Clamp every element into ``[0, 1]``; in-range elements pass through."""
    return np.clip(ensure_image(img), 0.0, 1.0)
