"""Differentiable mirrors of the corpus toolkit's loss formulas.

These reproduce the toolkit's numerical definitions exactly (same pyramid
blur weights, same replicate-border central differences, same epsilon
inside the gradient magnitude), so loss values computed here can be
cross-checked against the toolkit on dumped tensors. All functions accept
(B, C, H, W) batches and follow the input dtype.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

GRAD_EPS = 1e-12


def _pyramid_blur_kernel(dtype: torch.dtype) -> torch.Tensor:
    """5x5 Gaussian (sigma 1), identical weights to the corpus toolkit."""
    offsets = torch.arange(-2, 3, dtype=torch.float64)
    yy, xx = torch.meshgrid(offsets, offsets, indexing="ij")
    k = torch.exp(-(xx * xx + yy * yy) / 2.0)
    return (k / k.sum()).to(dtype)


def _blur(x: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    kernel = _pyramid_blur_kernel(x.dtype).expand(c, 1, 5, 5)
    padded = F.pad(x, (2, 2, 2, 2), mode="replicate")
    return F.conv2d(padded, kernel, groups=c)


def _gradient_magnitude(x: torch.Tensor) -> torch.Tensor:
    padded = F.pad(x, (1, 1, 1, 1), mode="replicate")
    gx = (padded[:, :, 1:-1, 2:] - padded[:, :, 1:-1, :-2]) * 0.5
    gy = (padded[:, :, 2:, 1:-1] - padded[:, :, :-2, 1:-1]) * 0.5
    return torch.sqrt(gx * gx + gy * gy + GRAD_EPS)


def extract_pyramid(x: torch.Tensor, levels: int = 3) -> list[torch.Tensor]:
    """Gradient magnitudes over a blur pyramid; level k is blurred and
    2x-subsampled k times."""
    feats = []
    level = x
    for k in range(levels):
        feats.append(_gradient_magnitude(level))
        if k + 1 < levels:
            level = _blur(level)[:, :, ::2, ::2]
    return feats


def mse_t(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    d = a - b
    return (d * d).mean()


def perceptual_t(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Sum over pyramid levels of summed squared feature differences,
    averaged over the batch (matches the toolkit's per-image value)."""
    total = a.new_zeros(())
    for fa, fb in zip(extract_pyramid(a), extract_pyramid(b)):
        d = fa - fb
        total = total + (d * d).sum(dim=(1, 2, 3)).mean()
    return total


def recompose_t(J: torch.Tensor, S: torch.Tensor, T: torch.Tensor,
                A: torch.Tensor) -> torch.Tensor:
    """Same blend arithmetic as the forward compositor, unclamped."""
    return T * (J + S) + (1.0 - T) * A


def loss_recon_t(J_hat: torch.Tensor, J: torch.Tensor, I_hat: torch.Tensor,
                 I: torch.Tensor) -> torch.Tensor:
    return mse_t(J_hat, J) + mse_t(I_hat, I)


def loss_rt_t(J_hat: torch.Tensor, J: torch.Tensor, I_hat: torch.Tensor,
              I: torch.Tensor, omega1: float) -> torch.Tensor:
    out = loss_recon_t(J_hat, J, I_hat, I)
    if omega1 != 0.0:
        out = out + omega1 * (perceptual_t(J_hat, J) + perceptual_t(I_hat, I))
    return out


def loss_generator_t(H: torch.Tensor, H_hat: torch.Tensor,
                     scores: torch.Tensor, gamma_p: float,
                     gammas: tuple[float, float, float, float]) -> torch.Tensor:
    """Fidelity + perceptual + per-discriminator (1 - score) penalties.

    ``scores`` is a length-4 tensor: global, eye, nose, lip.
    """
    out = mse_t(H, H_hat) + gamma_p * perceptual_t(H, H_hat)
    for weight, score in zip(gammas, scores):
        out = out + weight * (1.0 - score)
    return out


def loss_discriminators_t(real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Per-discriminator ``1 - real + fake``; inputs are length-4 tensors."""
    return 1.0 - real + fake


def crop_box(x: torch.Tensor, box) -> torch.Tensor:
    """Crop a (B, C, H, W) batch with the toolkit's integer box mapping."""
    h, w = x.shape[-2], x.shape[-1]
    xs = math.floor(box.x0 * w)
    ys = math.floor(box.y0 * h)
    bw = math.floor((box.x1 - box.x0) * w)
    bh = math.floor((box.y1 - box.y0) * h)
    if bw < 1 or bh < 1:
        raise ValueError(f"crop box {box} is empty on a {h}x{w} image")
    return x[:, :, ys:ys + bh, xs:xs + bw]
