"""Loss formulas as pure functions over images and discriminator scores.

Three families live here: plain reconstruction terms (MSE and the paired
reconstruction loss), a perceptual distance over a pluggable multi-level
feature extractor, and the adversarial algebra that turns four
discriminator scores into generator/discriminator objectives. None of
these functions differentiate anything; trainers own autodiff and can
recompute these exact values for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol, runtime_checkable

import numpy as np

from .errors import InvalidArgumentError
from .imgcore import convolve2d, ensure_image, gaussian_kernel

__all__ = [
    "LossWeights",
    "DiscriminatorScores",
    "DiscriminatorLosses",
    "FeatureExtractor",
    "GradientPyramidExtractor",
    "mse",
    "perceptual",
    "loss_recon",
    "loss_rt",
    "loss_generator",
    "loss_discriminators",
]


@dataclass(frozen=True)
class LossWeights:
    """Balance weights for the composite objectives (defaults as shipped)."""

    omega1: float = 0.1
    gamma_p: float = 1e-3
    gamma1: float = 1e-3
    gamma2: float = 1e-4
    gamma3: float = 1e-4
    gamma4: float = 1e-4

    def __post_init__(self):
        for name in ("omega1", "gamma_p", "gamma1", "gamma2", "gamma3", "gamma4"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgumentError(f"loss weight {name} must be >= 0, got {v}")

    def to_dict(self) -> dict:
        return {
            "omega1": self.omega1,
            "gamma_p": self.gamma_p,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "gamma3": self.gamma3,
            "gamma4": self.gamma4,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**{k: float(d[k]) for k in
                      ("omega1", "gamma_p", "gamma1", "gamma2", "gamma3", "gamma4")})


@dataclass(frozen=True)
class DiscriminatorScores:
    """Outputs of the global and three facial-component discriminators.

    Scores outside ``[0, 1]`` are rejected rather than clamped so that a
    misbehaving trainer surfaces immediately.
    """

    d_global: float
    d_eye: float
    d_nose: float
    d_lip: float

    def __post_init__(self):
        for name in ("d_global", "d_eye", "d_nose", "d_lip"):
            v = getattr(self, name)
            if not np.isfinite(v) or not (0.0 <= v <= 1.0):
                raise InvalidArgumentError(f"discriminator score {name} must lie in [0, 1], got {v}")


class DiscriminatorLosses(NamedTuple):
    d_global: float
    d_eye: float
    d_nose: float
    d_lip: float


@runtime_checkable
class FeatureExtractor(Protocol):
    """Deterministic multi-level feature extractor.

    ``extract`` maps an image of at least ``min_size`` on each side to
    ``layer_count`` feature rasters of decreasing resolution.
    """

    layer_count: int
    min_size: int

    def extract(self, img: np.ndarray) -> list[np.ndarray]: ...


class GradientPyramidExtractor:
    """Default extractor: gradient magnitudes over a 3-level blur pyramid.

    Level k of the pyramid is the input blurred with a Gaussian
    (sigma 1.0, radius 2, replicate border) and subsampled by taking every
    second pixel starting at the origin, applied k times. The feature at
    each level is the per-channel gradient magnitude
    ``sqrt(gx^2 + gy^2 + 1e-12)`` where gx/gy are central differences with
    replicate boundary handling. Dependency-free and deterministic, so
    perceptual losses are exactly reproducible.
    """

    layer_count = 3
    min_size = 8

    _EPS = 1e-12

    def __init__(self):
        self._blur = gaussian_kernel(1.0, 2)

    def extract(self, img: np.ndarray) -> list[np.ndarray]:
        arr = ensure_image(img)
        if min(arr.shape[0], arr.shape[1]) < self.min_size:
            raise InvalidArgumentError(
                f"extractor needs at least {self.min_size}x{self.min_size} input, got {arr.shape[:2]}")
        features = []
        level = arr
        for k in range(self.layer_count):
            features.append(self._gradient_magnitude(level))
            if k + 1 < self.layer_count:
                level = convolve2d(level, self._blur)[::2, ::2, :]
        return features

    @classmethod
    def _gradient_magnitude(cls, arr: np.ndarray) -> np.ndarray:
        padded = np.pad(arr, ((1, 1), (1, 1), (0, 0)), mode="edge")
        gx = (padded[1:-1, 2:, :] - padded[1:-1, :-2, :]) * 0.5
        gy = (padded[2:, 1:-1, :] - padded[:-2, 1:-1, :]) * 0.5
        return np.sqrt(gx * gx + gy * gy + cls._EPS)


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y = ensure_image(a), ensure_image(b)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared element-wise difference."""
    x, y = _pair(a, b)
    d = x - y
    return float(np.mean(d * d))


def perceptual(a: np.ndarray, b: np.ndarray, extractor: FeatureExtractor) -> float:
    """Sum over levels of the squared feature differences."""
    x, y = _pair(a, b)
    fa = extractor.extract(x)
    fb = extractor.extract(y)
    total = 0.0
    for ga, gb in zip(fa, fb):
        d = ga - gb
        total += float(np.sum(d * d))
    return total


def loss_recon(J_hat: np.ndarray, J: np.ndarray, I_hat: np.ndarray,
               I: np.ndarray) -> float:
    """Reconstruction loss: clean-image MSE plus re-blended composite MSE.

    ``I_hat`` is the composite rebuilt from the estimated physical
    parameters (see :func:`rainsynth.rainmodel.recompose`), so this term
    also supervises the parameter estimates.
    """
    return mse(J_hat, J) + mse(I_hat, I)


def loss_rt(J_hat: np.ndarray, J: np.ndarray, I_hat: np.ndarray, I: np.ndarray,
            w: LossWeights, extractor: FeatureExtractor) -> float:
    """Reconstruction loss plus weighted perceptual terms on both pairs."""
    return loss_recon(J_hat, J, I_hat, I) + w.omega1 * (
        perceptual(J_hat, J, extractor) + perceptual(I_hat, I, extractor))


def loss_generator(H: np.ndarray, H_hat: np.ndarray, scores: DiscriminatorScores,
                   w: LossWeights, extractor: FeatureExtractor) -> float:
    """Generator objective: fidelity + perceptual + adversarial terms.

    The adversarial part pays ``gamma_i * (1 - score_i)`` for each of the
    four discriminators, so it vanishes when every discriminator is fully
    fooled.
    """
    fidelity = mse(H, H_hat)
    percep = perceptual(H, H_hat, extractor)
    adversarial = (w.gamma1 * (1.0 - scores.d_global)
                   + w.gamma2 * (1.0 - scores.d_eye)
                   + w.gamma3 * (1.0 - scores.d_nose)
                   + w.gamma4 * (1.0 - scores.d_lip))
    return fidelity + w.gamma_p * percep + adversarial


def loss_discriminators(real_scores: DiscriminatorScores,
                        fake_scores: DiscriminatorScores) -> DiscriminatorLosses:
    """Per-discriminator objective ``1 - score(real) + score(fake)``."""
    return DiscriminatorLosses(
        d_global=1.0 - real_scores.d_global + fake_scores.d_global,
        d_eye=1.0 - real_scores.d_eye + fake_scores.d_eye,
        d_nose=1.0 - real_scores.d_nose + fake_scores.d_nose,
        d_lip=1.0 - real_scores.d_lip + fake_scores.d_lip,
    )
