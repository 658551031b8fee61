"""Scale-aware heavy-rain degradation model.

The forward model blends a downsampled clean image with additive rain
streaks and a constant atmospheric veil:

    lrhr = T * (lr + S) + (1 - T) * A

where ``lr`` is the bicubic-downsampled clean image, ``S`` a rain-streak
layer built from rectified Gaussian noise shaped by a motion filter,
``T`` a (spatially constant) transmission map, and ``A`` a constant
bright atmospheric layer. Because every physical parameter is recorded,
the blend admits an exact algebraic inverse on the pre-clamp raster.

Everything is a pure function of its inputs; per-sample randomness is a
deterministic function of ``(master_seed, index)``, so samples can be
generated in any order or in parallel with bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import IllConditionedInversionError, InvalidArgumentError
from .imgcore import clamp01, convolve2d, ensure_image, gaussian_kernel, resize_bicubic

__all__ = [
    "DegradationConfig",
    "RainParams",
    "PhysicalParams",
    "ComposeResult",
    "DegradedSample",
    "sample_params",
    "motion_kernel",
    "synth_rain_layer",
    "make_transmission",
    "make_atmospheric",
    "degrade_lr",
    "compose_heavyrain",
    "recompose",
    "invert_heavyrain",
    "degrade_full",
]

# Sub-sample density used when rasterizing the motion-filter line segment.
_LINE_SAMPLES_PER_PIXEL = 256

# Floor below which the analytic inversion is considered ill-conditioned.
TRANSMISSION_FLOOR = 0.05


def _check_range(name: str, rng: tuple, lo_min: float, hi_max: float,
                 lo_open: bool = False, hi_open: bool = False) -> None:
    lo, hi = rng
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise InvalidArgumentError(f"{name}: need finite lo <= hi, got {rng}")
    if lo < lo_min or (lo_open and lo <= lo_min):
        raise InvalidArgumentError(f"{name}: lower bound {lo} outside domain")
    if hi > hi_max or (hi_open and hi >= hi_max):
        raise InvalidArgumentError(f"{name}: upper bound {hi} outside domain")


@dataclass(frozen=True)
class DegradationConfig:
    """Sampling ranges and fixed settings for the degradation pipeline.

    All per-sample physical parameters are drawn uniformly from the
    configured ranges. The defaults are toolkit choices tuned for
    plausible-looking streaks at the low-resolution scale; every one of
    them is configurable.
    """

    scale_s: int = 4
    num_streak_layers_m: int = 1
    noise_sigma_range: tuple[float, float] = (0.1, 0.3)
    motion_angle_range: tuple[float, float] = (60.0, 120.0)
    motion_length_range: tuple[int, int] = (3, 9)
    atmo_range: tuple[float, float] = (0.7, 1.0)
    transmission_range: tuple[float, float] = (0.4, 0.9)
    use_prefilter: bool = False
    prefilter_sigma: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        if int(self.scale_s) < 1:
            raise InvalidArgumentError(f"scale_s must be >= 1, got {self.scale_s}")
        if int(self.num_streak_layers_m) < 1:
            raise InvalidArgumentError(f"num_streak_layers_m must be >= 1, got {self.num_streak_layers_m}")
        _check_range("noise_sigma_range", self.noise_sigma_range, 0.0, 1.0, lo_open=True)
        _check_range("motion_angle_range", self.motion_angle_range, 0.0, 180.0, hi_open=True)
        lo, hi = self.motion_length_range
        if int(lo) != lo or int(hi) != hi or lo < 1 or lo > hi:
            raise InvalidArgumentError(f"motion_length_range must be integers with 1 <= lo <= hi, got {self.motion_length_range}")
        _check_range("atmo_range", self.atmo_range, 0.0, 1.0, lo_open=True)
        _check_range("transmission_range", self.transmission_range, 0.0, 1.0, lo_open=True)
        if self.transmission_range[0] < TRANSMISSION_FLOOR:
            raise InvalidArgumentError(
                f"transmission_range lower bound must be >= {TRANSMISSION_FLOOR} "
                f"to keep inversion well-conditioned, got {self.transmission_range[0]}")
        if not np.isfinite(self.prefilter_sigma) or self.prefilter_sigma <= 0:
            raise InvalidArgumentError(f"prefilter_sigma must be positive, got {self.prefilter_sigma}")
        if not (0 <= int(self.master_seed) < 2**64):
            raise InvalidArgumentError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")

    def to_dict(self) -> dict:
        return {
            "scale_s": self.scale_s,
            "num_streak_layers_m": self.num_streak_layers_m,
            "noise_sigma_range": list(self.noise_sigma_range),
            "motion_angle_range": list(self.motion_angle_range),
            "motion_length_range": list(self.motion_length_range),
            "atmo_range": list(self.atmo_range),
            "transmission_range": list(self.transmission_range),
            "use_prefilter": self.use_prefilter,
            "prefilter_sigma": self.prefilter_sigma,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationConfig":
        return cls(
            scale_s=int(d["scale_s"]),
            num_streak_layers_m=int(d["num_streak_layers_m"]),
            noise_sigma_range=tuple(d["noise_sigma_range"]),
            motion_angle_range=tuple(d["motion_angle_range"]),
            motion_length_range=tuple(int(v) for v in d["motion_length_range"]),
            atmo_range=tuple(d["atmo_range"]),
            transmission_range=tuple(d["transmission_range"]),
            use_prefilter=bool(d["use_prefilter"]),
            prefilter_sigma=float(d["prefilter_sigma"]),
            master_seed=int(d["master_seed"]),
        )


@dataclass(frozen=True)
class RainParams:
    """Realized per-sample draws of the physical degradation parameters."""

    noise_sigma: float
    motion_angle: float
    motion_length: int
    atmo_value: float
    transmission_value: float
    sample_seed: int

    def to_dict(self) -> dict:
        return {
            "noise_sigma": self.noise_sigma,
            "motion_angle": self.motion_angle,
            "motion_length": self.motion_length,
            "atmo_value": self.atmo_value,
            "transmission_value": self.transmission_value,
            "sample_seed": self.sample_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RainParams":
        return cls(
            noise_sigma=float(d["noise_sigma"]),
            motion_angle=float(d["motion_angle"]),
            motion_length=int(d["motion_length"]),
            atmo_value=float(d["atmo_value"]),
            transmission_value=float(d["transmission_value"]),
            sample_seed=int(d["sample_seed"]),
        )


@dataclass(frozen=True)
class PhysicalParams:
    """The (rain layer, transmission, atmospheric light) map triple.

    All three share the low-resolution spatial size. The rain layer and
    transmission are single-channel; the atmospheric layer carries the
    channel count of the image it will be blended with and holds a single
    distinct value. Transmission values live in ``[0, 1]``: a zero value
    is a legal (fully veiled) compositor input, but inversion requires
    values above its epsilon.
    """

    rain_layer_S: np.ndarray
    transmission_T: np.ndarray
    atmospheric_A: np.ndarray

    def __post_init__(self):
        s = ensure_image(self.rain_layer_S)
        t = ensure_image(self.transmission_T)
        a = ensure_image(self.atmospheric_A)
        if not (s.shape[:2] == t.shape[:2] == a.shape[:2]):
            raise InvalidArgumentError(
                f"parameter maps disagree spatially: S {s.shape}, T {t.shape}, A {a.shape}")
        if np.any(s < 0):
            raise InvalidArgumentError("rain layer must be nonnegative")
        if np.any(t < 0) or np.any(t > 1):
            raise InvalidArgumentError("transmission values must lie in [0, 1]")
        if np.unique(a).size != 1:
            raise InvalidArgumentError("atmospheric layer must be constant-valued")
        object.__setattr__(self, "rain_layer_S", s)
        object.__setattr__(self, "transmission_T", t)
        object.__setattr__(self, "atmospheric_A", a)


class ComposeResult(NamedTuple):
    clamped: np.ndarray
    preclamp: np.ndarray


@dataclass(frozen=True)
class DegradedSample:
    """Full output of one degradation: images plus the exact parameters."""

    lrhr: np.ndarray            # clamped composite (what a camera would record)
    lrhr_preclamp: np.ndarray   # pre-clamp composite (for exact inversion)
    lr: np.ndarray              # clean downsampled image
    phys: PhysicalParams
    params: RainParams


def sample_params(config: DegradationConfig, index: int) -> RainParams:
    """Draw the per-sample physical parameters for sample ``index``.

    Deterministic in ``(config.master_seed, index)`` and independent of
    call order. The draw order (sigma, angle, length, atmospheric value,
    transmission, layer seed) is part of the reproducibility contract and
    must not change.
    """
    index = int(index)
    if index < 0:
        raise InvalidArgumentError(f"sample index must be >= 0, got {index}")
    rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, index]))
    noise_sigma = float(rng.uniform(*config.noise_sigma_range))
    motion_angle = float(rng.uniform(*config.motion_angle_range))
    lo, hi = config.motion_length_range
    motion_length = int(rng.integers(lo, hi + 1))
    atmo_value = float(rng.uniform(*config.atmo_range))
    transmission_value = float(rng.uniform(*config.transmission_range))
    sample_seed = int(rng.integers(0, 2**63))
    return RainParams(
        noise_sigma=noise_sigma,
        motion_angle=motion_angle,
        motion_length=motion_length,
        atmo_value=atmo_value,
        transmission_value=transmission_value,
        sample_seed=sample_seed,
    )


def motion_kernel(angle: float, length: int) -> np.ndarray:
    """Linear motion filter: unit mass spread along a centered line segment.

    The segment spans ``length`` pixels through the kernel center at
    ``angle`` degrees (0 = horizontal, 90 = vertical) and is rasterized
    by bilinear splatting of densely spaced sub-samples, which
    anti-aliases oblique angles. ``length == 1`` degenerates to a delta.
    Kernel size is ``2*ceil(length/2) + 1`` and weights sum to 1.
    """
    length = int(length)
    if length < 1:
        raise InvalidArgumentError(f"motion length must be >= 1, got {length}")
    size = 2 * math.ceil(length / 2) + 1
    center = size // 2
    kernel = np.zeros((size, size))
    if length == 1:
        kernel[center, center] = 1.0
        return kernel
    theta = math.radians(angle)
    half = (length - 1) / 2.0
    n = int(round((length - 1) * _LINE_SAMPLES_PER_PIXEL)) + 1
    t = np.linspace(-half, half, n)
    xs = center + t * math.cos(theta)
    ys = center + t * math.sin(theta)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    np.add.at(kernel, (y0, x0), (1.0 - fx) * (1.0 - fy))
    np.add.at(kernel, (y0, x0 + 1), fx * (1.0 - fy))
    np.add.at(kernel, (y0 + 1, x0), (1.0 - fx) * fy)
    np.add.at(kernel, (y0 + 1, x0 + 1), fx * fy)
    return kernel / kernel.sum()


def synth_rain_layer(h: int, w: int, params: RainParams) -> np.ndarray:
    """Synthesize one single-channel rain-streak layer.

    Pipeline: i.i.d. Gaussian noise from ``params.sample_seed``, half-wave
    rectification (negatives zeroed), motion-filter blur, clamp to
    ``[0, 1]``. Rectifying before the blur keeps the streaks sparse and
    bright.
    """
    h, w = int(h), int(w)
    if h < 1 or w < 1:
        raise InvalidArgumentError(f"layer dimensions must be positive, got {h}x{w}")
    rng = np.random.default_rng(params.sample_seed)
    noise = rng.normal(0.0, params.noise_sigma, size=(h, w))
    rectified = np.maximum(noise, 0.0)[:, :, np.newaxis]
    blurred = convolve2d(rectified, motion_kernel(params.motion_angle, params.motion_length))
    return clamp01(blurred)


def make_transmission(h: int, w: int, t: float) -> np.ndarray:
    """Constant single-channel transmission map of value ``t`` in ``(0, 1]``.

    Depth across the target is treated as constant, so the exponential
    depth falloff collapses into the single sampled scalar.
    """
    if not np.isfinite(t) or not (0.0 < t <= 1.0):
        raise InvalidArgumentError(f"transmission must lie in (0, 1], got {t}")
    return np.full((int(h), int(w), 1), float(t))


def make_atmospheric(h: int, w: int, a: float, channels: int = 3) -> np.ndarray:
    """Constant atmospheric-light map of value ``a`` in ``(0, 1]``."""
    if not np.isfinite(a) or not (0.0 < a <= 1.0):
        raise InvalidArgumentError(f"atmospheric value must lie in (0, 1], got {a}")
    if channels not in (1, 3):
        raise InvalidArgumentError(f"channels must be 1 or 3, got {channels}")
    return np.full((int(h), int(w), channels), float(a))


def degrade_lr(H: np.ndarray, config: DegradationConfig) -> np.ndarray:
    """Resolution conversion: optional Gaussian pre-blur, then bicubic resize.

    With ``use_prefilter`` off (the default) the conversion is the bicubic
    resize alone. Dimensions must divide exactly by ``scale_s``.
    """
    arr = ensure_image(H)
    s = int(config.scale_s)
    h, w, _ = arr.shape
    if h % s != 0 or w % s != 0:
        raise InvalidArgumentError(f"image dimensions {h}x{w} not divisible by scale {s}")
    if config.use_prefilter:
        radius = max(1, math.ceil(3.0 * config.prefilter_sigma))
        arr = convolve2d(arr, gaussian_kernel(config.prefilter_sigma, radius))
    return resize_bicubic(arr, h // s, w // s)


def _blend(J: np.ndarray, S: np.ndarray, T: np.ndarray, A: np.ndarray) -> np.ndarray:
    # Shared arithmetic for compose and recompose so estimated parameters
    # reproduce the compositor bit-exactly.
    return T * (J + S) + (1.0 - T) * A


def _check_blend_shapes(J: np.ndarray, S: np.ndarray, T: np.ndarray, A: np.ndarray) -> None:
    hw = J.shape[:2]
    for name, m in (("rain layer", S), ("transmission", T), ("atmospheric light", A)):
        if m.shape[:2] != hw:
            raise InvalidArgumentError(f"{name} shape {m.shape} does not match image {J.shape}")
        if m.shape[2] not in (1, J.shape[2]):
            raise InvalidArgumentError(f"{name} has {m.shape[2]} channels; expected 1 or {J.shape[2]}")


def compose_heavyrain(J: np.ndarray, phys: PhysicalParams) -> ComposeResult:
    """Forward compositor: ``T * (J + S) + (1 - T) * A``.

    Returns both the display raster (clamped to ``[0, 1]``) and the
    pre-clamp raster; only the latter is exactly invertible.
    """
    arr = ensure_image(J)
    _check_blend_shapes(arr, phys.rain_layer_S, phys.transmission_T, phys.atmospheric_A)
    pre = _blend(arr, phys.rain_layer_S, phys.transmission_T, phys.atmospheric_A)
    return ComposeResult(clamped=np.clip(pre, 0.0, 1.0), preclamp=pre)


def recompose(J: np.ndarray, S_hat: np.ndarray, T_hat: np.ndarray,
              A_hat: np.ndarray) -> np.ndarray:
    """Re-blend estimated parameters around a known clean image.

    Identical arithmetic to :func:`compose_heavyrain` but taking free
    estimates and returning the unclamped raster, suitable for feeding a
    reconstruction loss.
    """
    arr = ensure_image(J)
    s, t, a = ensure_image(S_hat), ensure_image(T_hat), ensure_image(A_hat)
    _check_blend_shapes(arr, s, t, a)
    return _blend(arr, s, t, a)


def invert_heavyrain(I_preclamp: np.ndarray, phys: PhysicalParams,
                     eps: float = 1e-6) -> np.ndarray:
    """Exact algebraic inverse of the compositor on a pre-clamp raster.

    ``J = (I - (1 - T) * A) / T - S``. Raises
    :class:`IllConditionedInversionError` if any transmission value falls
    below ``eps``.
    """
    arr = ensure_image(I_preclamp)
    S, T, A = phys.rain_layer_S, phys.transmission_T, phys.atmospheric_A
    _check_blend_shapes(arr, S, T, A)
    if np.any(T < eps):
        raise IllConditionedInversionError(
            f"transmission has values below eps={eps}; inversion would be unstable")
    return (arr - (1.0 - T) * A) / T - S


def _layer_seed(sample_seed: int, layer: int) -> int:
    if layer == 0:
        return sample_seed
    return int(np.random.SeedSequence([sample_seed, layer]).generate_state(1, np.uint64)[0])


def degrade_full(H: np.ndarray, config: DegradationConfig, index: int) -> DegradedSample:
    """Run the whole pipeline on one clean image.

    Samples the physical parameters for ``index``, downsamples, builds the
    parameter maps at the low-resolution size, and composites. With
    multiple streak layers configured, every layer shares the sampled
    sigma/angle/length but draws its noise from a distinct sub-seed; the
    layers are summed into the stored rain layer.
    """
    params = sample_params(config, index)
    J = degrade_lr(H, config)
    h, w, c = J.shape
    total = np.zeros((h, w, 1))
    for layer in range(int(config.num_streak_layers_m)):
        layer_params = replace(params, sample_seed=_layer_seed(params.sample_seed, layer))
        total = total + synth_rain_layer(h, w, layer_params)
    phys = PhysicalParams(
        rain_layer_S=total,
        transmission_T=make_transmission(h, w, params.transmission_value),
        atmospheric_A=make_atmospheric(h, w, params.atmo_value, channels=c),
    )
    composed = compose_heavyrain(J, phys)
    return DegradedSample(
        lrhr=composed.clamped,
        lrhr_preclamp=composed.preclamp,
        lr=J,
        phys=phys,
        params=params,
    )
