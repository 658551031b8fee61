"""Toy-scale networks for the three-module restoration pipeline.

The widths are deliberately small; what is preserved from the full-scale
design is the topology: a densely connected encoder feeding four decoder
heads (rain layer, transmission, atmospheric light, clean image), a
skip-connected encoder-decoder parser over the stacked degraded/restored
pair, and an upsampling generator that fuses the parsed map by
concatenation just before its first pixel-shuffle stage, judged by one
global and three facial-component discriminators.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


def _conv(cin: int, cout: int, k: int = 3) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, kernel_size=k, padding=k // 2)


class DenseBlock(nn.Module):
    """Each layer sees the concatenation of all previous feature maps."""

    def __init__(self, cin: int, growth: int, layers: int):
        super().__init__()
        self.layers = nn.ModuleList()
        width = cin
        for _ in range(layers):
            self.layers.append(nn.Sequential(_conv(width, growth), nn.LeakyReLU(0.2)))
            width += growth
        self.out_channels = width

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        for layer in self.layers:
            feats.append(layer(torch.cat(feats, dim=1)))
        return torch.cat(feats, dim=1)


class HrrmNet(nn.Module):
    """One shared encoder, four decoder heads over the degraded input.

    Heads: rain layer (nonnegative via softplus), transmission (sigmoid),
    atmospheric light (sigmoid), clean image (sigmoid). All outputs share
    the input's spatial size.
    """

    def __init__(self, width: int = 16, growth: int = 8, dense_layers: int = 3):
        super().__init__()
        self.stem = nn.Sequential(_conv(3, width), nn.LeakyReLU(0.2))
        self.encoder = DenseBlock(width, growth, dense_layers)
        enc_out = self.encoder.out_channels

        def head(cout):
            return nn.Sequential(_conv(enc_out, width), nn.LeakyReLU(0.2), _conv(width, cout))

        self.head_rain = head(1)
        self.head_trans = head(1)
        self.head_atmo = head(3)
        self.head_clean = head(3)

    def forward(self, x: torch.Tensor):
        feats = self.encoder(self.stem(x))
        S = torch.nn.functional.softplus(self.head_rain(feats))
        T = torch.sigmoid(self.head_trans(feats))
        A = torch.sigmoid(self.head_atmo(feats))
        J = torch.sigmoid(self.head_clean(feats))
        return S, T, A, J


class FpmNet(nn.Module):
    """Skip-connected encoder-decoder parser.

    Takes the degraded image stacked with the restored clean estimate
    (6 channels) and emits per-class logits at the same resolution.
    """

    def __init__(self, width: int = 16, num_classes: int = 6):
        super().__init__()
        self.enc1 = nn.Sequential(_conv(6, width), nn.LeakyReLU(0.2))
        self.down1 = nn.Sequential(nn.Conv2d(width, width * 2, 3, stride=2, padding=1),
                                   nn.LeakyReLU(0.2))
        self.mid = nn.Sequential(_conv(width * 2, width * 2), nn.LeakyReLU(0.2))
        self.up1 = nn.Upsample(scale_factor=2, mode="nearest")
        self.dec1 = nn.Sequential(_conv(width * 3, width), nn.LeakyReLU(0.2))
        self.out = _conv(width, num_classes)

    def forward(self, lrhr: torch.Tensor, clean_estimate: torch.Tensor) -> torch.Tensor:
        x = torch.cat([lrhr, clean_estimate], dim=1)
        e1 = self.enc1(x)
        m = self.mid(self.down1(e1))
        u = self.up1(m)
        return self.out(self.dec1(torch.cat([u, e1], dim=1)))


class Generator(nn.Module):
    """Upsampling generator with parsed-map fusion.

    Consumes the restored clean estimate, the parsed-map probabilities,
    and the raw degraded input; the parsed map is concatenated onto the
    trunk features immediately before the first pixel-shuffle stage. Two
    x2 pixel shuffles give a x4 output.
    """

    def __init__(self, width: int = 16, num_classes: int = 6):
        super().__init__()
        self.trunk = nn.Sequential(_conv(6, width), nn.LeakyReLU(0.2),
                                   _conv(width, width), nn.LeakyReLU(0.2))
        self.fuse = nn.Sequential(_conv(width + num_classes, width * 4), nn.LeakyReLU(0.2))
        self.shuffle1 = nn.PixelShuffle(2)
        self.mid = nn.Sequential(_conv(width, width * 4), nn.LeakyReLU(0.2))
        self.shuffle2 = nn.PixelShuffle(2)
        self.out = _conv(width, 3)

    def forward(self, clean_estimate: torch.Tensor, parsed_probs: torch.Tensor,
                lrhr: torch.Tensor) -> torch.Tensor:
        x = self.trunk(torch.cat([clean_estimate, lrhr], dim=1))
        x = self.fuse(torch.cat([x, parsed_probs], dim=1))
        x = self.shuffle1(x)
        x = self.mid(x)
        x = self.shuffle2(x)
        return torch.sigmoid(self.out(x))


class Discriminator(nn.Module):
    """Patch critic pooled to a single score in (0, 1); size-agnostic."""

    def __init__(self, width: int = 16):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
        )
        self.score = nn.Linear(width * 2, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.features(x).mean(dim=(2, 3))
        return torch.sigmoid(self.score(feats)).squeeze(1)


@dataclass
class NetworkBundle:
    hrrm: HrrmNet
    fpm: FpmNet
    generator: Generator
    d_global: Discriminator
    d_eye: Discriminator
    d_nose: Discriminator
    d_lip: Discriminator

    def discriminators(self) -> dict[str, Discriminator]:
        return {"global": self.d_global, "eye": self.d_eye,
                "nose": self.d_nose, "lip": self.d_lip}

    def generator_side_parameters(self, include_pretrained: bool = True):
        params = list(self.generator.parameters())
        if include_pretrained:
            params += list(self.hrrm.parameters()) + list(self.fpm.parameters())
        return params

    def discriminator_parameters(self):
        out = []
        for d in self.discriminators().values():
            out += list(d.parameters())
        return out


def build_bundle(width: int = 16, growth: int = 8, dense_layers: int = 3,
                 num_classes: int = 6) -> NetworkBundle:
    return NetworkBundle(
        hrrm=HrrmNet(width, growth, dense_layers),
        fpm=FpmNet(width, num_classes),
        generator=Generator(width, num_classes),
        d_global=Discriminator(width),
        d_eye=Discriminator(width),
        d_nose=Discriminator(width),
        d_lip=Discriminator(width),
    )
