"""Full-reference image quality metrics: PSNR and SSIM.

Both operate on ``[0, 1]``-valued images. SSIM follows the classic
reference formulation: an 11x11 Gaussian window (sigma 1.5) slid over
every fully-interior position (no padding), stabilizers
``C1 = (k1 L)^2`` and ``C2 = (k2 L)^2``, per-channel scores averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidArgumentError
from .imgcore import ensure_image, gaussian_kernel
from .losses import mse

__all__ = ["SsimParams", "psnr", "ssim"]


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise InvalidArgumentError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.window_sigma <= 0:
            raise InvalidArgumentError(f"window_sigma must be positive, got {self.window_sigma}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise InvalidArgumentError("k1 and k2 must be positive")
        if self.dynamic_range <= 0:
            raise InvalidArgumentError(f"dynamic_range must be positive, got {self.dynamic_range}")

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "window_sigma": self.window_sigma,
            "k1": self.k1,
            "k2": self.k2,
            "dynamic_range": self.dynamic_range,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SsimParams":
        return cls(
            window_size=int(d["window_size"]),
            window_sigma=float(d["window_sigma"]),
            k1=float(d["k1"]),
            k2=float(d["k2"]),
            dynamic_range=float(d["dynamic_range"]),
        )


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y = ensure_image(a), ensure_image(b)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    if peak <= 0:
        raise InvalidArgumentError(f"peak must be positive, got {peak}")
    m = mse(*_pair(a, b))
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: np.ndarray,
                  c1: float, c2: float) -> float:
    k = window.shape[0]

    def wmean(img):
        views = sliding_window_view(img, (k, k))
        return np.tensordot(views, window, axes=([2, 3], [0, 1]))

    mu1 = wmean(x)
    mu2 = wmean(y)
    var1 = wmean(x * x) - mu1 * mu1
    var2 = wmean(y * y) - mu2 * mu2
    cov = wmean(x * y) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams | None = None) -> float:
    """Mean structural similarity over all interior window positions."""
    p = params if params is not None else SsimParams()
    x, y = _pair(a, b)
    h, w, c = x.shape
    if h < p.window_size or w < p.window_size:
        raise InvalidArgumentError(
            f"images must be at least {p.window_size}x{p.window_size} for SSIM, got {h}x{w}")
    window = gaussian_kernel(p.window_sigma, p.window_size // 2)
    c1 = (p.k1 * p.dynamic_range) ** 2
    c2 = (p.k2 * p.dynamic_range) ** 2
    scores = [_ssim_channel(x[:, :, ch], y[:, :, ch], window, c1, c2) for ch in range(c)]
    return float(np.mean(scores))
