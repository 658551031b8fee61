"""Parity between the torch loss mirrors and the corpus toolkit's losses.

The toolkit is the reference: its loss functions define the numbers, and
the trainer's differentiable versions must reproduce them on identical
tensors.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from rainsynth.facecrop import NormRect, crop_region
from rainsynth.losses import (
    DiscriminatorScores,
    GradientPyramidExtractor,
    LossWeights,
    loss_discriminators,
    loss_generator,
    loss_recon,
    loss_rt,
    mse,
    perceptual,
)
from rainsynth.rainmodel import recompose

from reftrainer.config import CropBox
from reftrainer.torchlosses import (
    crop_box,
    extract_pyramid,
    loss_discriminators_t,
    loss_generator_t,
    loss_recon_t,
    loss_rt_t,
    mse_t,
    perceptual_t,
    recompose_t,
)


def hwc(rng, h, w, c=3):
    return rng.random((h, w, c))


def to_bchw(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(arr.transpose(2, 0, 1)).double().unsqueeze(0)


class TestElementwiseParity:
    def test_mse(self):
        rng = np.random.default_rng(0)
        a, b = hwc(rng, 12, 9), hwc(rng, 12, 9)
        assert mse_t(to_bchw(a), to_bchw(b)).item() == pytest.approx(mse(a, b), abs=1e-12)

    def test_pyramid_features(self):
        rng = np.random.default_rng(1)
        a = hwc(rng, 16, 16)
        ours = extract_pyramid(to_bchw(a))
        reference = GradientPyramidExtractor().extract(a)
        assert len(ours) == len(reference)
        for mine, ref in zip(ours, reference):
            got = mine[0].permute(1, 2, 0).numpy()
            assert got.shape == ref.shape
            assert np.max(np.abs(got - ref)) <= 1e-12

    def test_perceptual(self):
        rng = np.random.default_rng(2)
        a, b = hwc(rng, 16, 16), hwc(rng, 16, 16)
        got = perceptual_t(to_bchw(a), to_bchw(b)).item()
        want = perceptual(a, b, GradientPyramidExtractor())
        assert got == pytest.approx(want, abs=1e-10)

    def test_recompose(self):
        rng = np.random.default_rng(3)
        J, S = hwc(rng, 8, 8), hwc(rng, 8, 8, 1)
        T = rng.uniform(0.05, 1.0, (8, 8, 1))
        A = np.full((8, 8, 3), 0.77)
        got = recompose_t(to_bchw(J), to_bchw(S), to_bchw(T), to_bchw(A))
        want = recompose(J, S, T, A)
        assert np.max(np.abs(got[0].permute(1, 2, 0).numpy() - want)) <= 1e-12


class TestCompositeParity:
    def test_loss_recon_and_rt(self):
        rng = np.random.default_rng(4)
        J_hat, J = hwc(rng, 16, 16), hwc(rng, 16, 16)
        I_hat, I = hwc(rng, 16, 16), hwc(rng, 16, 16)
        got = loss_recon_t(to_bchw(J_hat), to_bchw(J), to_bchw(I_hat), to_bchw(I)).item()
        assert got == pytest.approx(loss_recon(J_hat, J, I_hat, I), abs=1e-12)
        got_rt = loss_rt_t(to_bchw(J_hat), to_bchw(J), to_bchw(I_hat), to_bchw(I),
                           omega1=0.1).item()
        want_rt = loss_rt(J_hat, J, I_hat, I, LossWeights(omega1=0.1),
                          GradientPyramidExtractor())
        assert got_rt == pytest.approx(want_rt, abs=1e-10)

    def test_loss_generator(self):
        rng = np.random.default_rng(5)
        H, H_hat = hwc(rng, 16, 16), hwc(rng, 16, 16)
        scores = (0.3, 0.8, 0.5, 0.9)
        w = LossWeights()
        got = loss_generator_t(to_bchw(H), to_bchw(H_hat),
                               torch.tensor(scores, dtype=torch.double),
                               gamma_p=w.gamma_p,
                               gammas=(w.gamma1, w.gamma2, w.gamma3, w.gamma4)).item()
        want = loss_generator(H, H_hat, DiscriminatorScores(*scores), w,
                              GradientPyramidExtractor())
        assert got == pytest.approx(want, abs=1e-10)

    def test_loss_discriminators(self):
        real = (0.9, 0.7, 0.8, 0.95)
        fake = (0.2, 0.4, 0.1, 0.3)
        got = loss_discriminators_t(torch.tensor(real, dtype=torch.double),
                                    torch.tensor(fake, dtype=torch.double))
        want = loss_discriminators(DiscriminatorScores(*real), DiscriminatorScores(*fake))
        for g, w_ in zip(got, want):
            assert float(g) == pytest.approx(w_, abs=1e-15)


class TestCropParity:
    def test_crop_box_matches_toolkit(self):
        rng = np.random.default_rng(6)
        img = hwc(rng, 32, 32)
        for vals in [(0.15, 0.30, 0.85, 0.50), (0.35, 0.45, 0.65, 0.70),
                     (0.30, 0.68, 0.70, 0.85), (0.0, 0.0, 1.0, 1.0)]:
            mine = crop_box(to_bchw(img), CropBox(*vals))[0].permute(1, 2, 0).numpy()
            ref = crop_region(img, NormRect(*vals))
            assert mine.shape == ref.shape
            assert np.array_equal(mine, ref)
