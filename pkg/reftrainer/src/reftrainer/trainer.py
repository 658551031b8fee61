"""Training loops for the three-module restoration network.

Stages: the rain-removal module and the parser are pretrained separately,
then the generator and the four discriminators are trained in alternation
while the pretrained modules continue with MSE-only objectives (or stay
frozen). All loops are deterministic for a fixed config seed on a single
worker.
"""

from __future__ import annotations

import importlib.util
import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import ModelConfig
from .corpus import Corpus, CorpusSample, downsample_labels, one_hot_labels, stack_batch
from .networks import FpmNet, HrrmNet, NetworkBundle, build_bundle
from .torchlosses import (
    crop_box,
    loss_discriminators_t,
    loss_recon_t,
    mse_t,
    perceptual_t,
    recompose_t,
)


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; a diagnostic checkpoint was written."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def _batches(n: int, batch_size: int, steps: int):
    """Deterministic round-robin minibatch index slices."""
    if n <= batch_size:
        for _ in range(steps):
            yield list(range(n))
        return
    start = 0
    for _ in range(steps):
        idx = [(start + i) % n for i in range(batch_size)]
        start = (start + batch_size) % n
        yield idx


def _parse_targets(samples: list[CorpusSample], scale: int, num_classes: int) -> torch.Tensor:
    return torch.stack([
        one_hot_labels(downsample_labels(s.parsed_hr, scale), num_classes)
        for s in samples
    ])


def _as_hwc(x: torch.Tensor) -> np.ndarray:
    return x.detach().double().permute(0, 2, 3, 1).numpy()


# ---------------------------------------------------------------------------
# Stage 1: rain-removal module


def pretrain_hrrm(corpus: Corpus, config: ModelConfig, steps: int,
                  batch_size: int | None = None,
                  omega1: float | None = None) -> tuple[HrrmNet, list[dict]]:
    """Minimize the reconstruction+perceptual objective of the four-head net.

    The re-blended composite inside the loss uses the ground-truth clean
    image with the predicted rain/transmission/atmospheric maps, exactly
    as the corpus compositor does.
    """
    _require(corpus.has_preclamp,
             "corpus lacks pre-clamp dumps; regenerate with dumps enabled")
    _require(len(corpus.samples) > 0, "corpus is empty")
    _require(corpus.scale == config.upsample_factor,
             f"corpus scale {corpus.scale} != configured upsample factor "
             f"{config.upsample_factor}")
    torch.manual_seed(config.seed)
    hrrm = HrrmNet(config.base_width, config.growth, config.dense_layers)
    opt = torch.optim.Adam(hrrm.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)
    w1 = config.omega1 if omega1 is None else omega1
    batch_size = batch_size or config.pretrain_batch_size
    I_all = stack_batch(corpus.samples, "lrhr")
    J_all = stack_batch(corpus.samples, "lr")

    trace = []
    for step, idx in enumerate(_batches(len(corpus.samples), batch_size, steps)):
        I, J = I_all[idx], J_all[idx]
        S, T, A, J_hat = hrrm(I)
        I_hat = recompose_t(J, S, T, A)
        recon = loss_recon_t(J_hat, J, I_hat, I)
        loss = recon
        if w1 != 0.0:
            loss = loss + w1 * (perceptual_t(J_hat, J) + perceptual_t(I_hat, I))
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite pretraining loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append({"step": step, "loss_rt": float(loss.item()),
                      "loss_recon": float(recon.item())})
    return hrrm, trace


def hrrm_loss_report(hrrm: HrrmNet, corpus: Corpus,
                     omega1: float) -> tuple[dict, dict[str, np.ndarray]]:
    """One full-corpus forward pass: loss values plus every tensor the loss
    touched, dumped as (B, H, W, C) float64 arrays for cross-checking."""
    I = stack_batch(corpus.samples, "lrhr")
    J = stack_batch(corpus.samples, "lr")
    with torch.no_grad():
        S, T, A, J_hat = hrrm(I)
        I_hat = recompose_t(J, S, T, A)
        recon = loss_recon_t(J_hat, J, I_hat, I)
        loss = recon
        if omega1 != 0.0:
            loss = loss + omega1 * (perceptual_t(J_hat, J) + perceptual_t(I_hat, I))
    values = {"loss_rt": float(loss.item()), "loss_recon": float(recon.item())}
    dumps = {"I": _as_hwc(I), "J": _as_hwc(J), "S": _as_hwc(S), "T": _as_hwc(T),
             "A": _as_hwc(A), "J_hat": _as_hwc(J_hat), "I_hat": _as_hwc(I_hat)}
    return values, dumps


# ---------------------------------------------------------------------------
# Stage 2: parsing module


def pretrain_fpm(corpus: Corpus, hrrm: HrrmNet, config: ModelConfig,
                 steps: int, batch_size: int | None = None
                 ) -> tuple[FpmNet, list[dict]]:
    """Minimize MSE between softmax class maps and one-hot targets."""
    _require(corpus.has_parsing, "corpus lacks parsing maps")
    torch.manual_seed(config.seed + 1)
    fpm = FpmNet(config.base_width, config.num_parse_classes)
    opt = torch.optim.Adam(fpm.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)
    batch_size = batch_size or config.pretrain_batch_size
    I_all = stack_batch(corpus.samples, "lrhr")
    targets = _parse_targets(corpus.samples, corpus.scale, config.num_parse_classes)
    with torch.no_grad():
        _, _, _, J_hat_all = hrrm(I_all)

    trace = []
    for step, idx in enumerate(_batches(len(corpus.samples), batch_size, steps)):
        I, target = I_all[idx], targets[idx]
        logits = fpm(I, J_hat_all[idx])
        probs = torch.softmax(logits, dim=1)
        loss = mse_t(probs, target)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite parsing loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        accuracy = float((logits.argmax(dim=1) == target.argmax(dim=1)).float().mean())
        trace.append({"step": step, "loss_parse": float(loss.item()),
                      "pixel_accuracy": accuracy})
    return fpm, trace


# ---------------------------------------------------------------------------
# Stage 3: adversarial joint training


@dataclass
class JointStepLosses:
    step: int
    loss_gt: float
    l_fidelity: float
    l_perceptual: float
    l_adversarial: float
    scores_fake: tuple
    d_losses: tuple


class JointTrainer:
    """Alternating optimization of the generator side and the critics.

    ``generator_step`` updates the generator (plus the pretrained modules
    with MSE-only maintenance terms, unless frozen) and never touches
    discriminator parameters; ``discriminator_step`` is the exact
    complement, judging a detached fake.
    """

    def __init__(self, corpus: Corpus, hrrm: HrrmNet, fpm: FpmNet,
                 config: ModelConfig, checkpoint_dir: Path | None = None):
        _require(corpus.has_parsing and corpus.has_preclamp,
                 "joint training needs parsing maps and pre-clamp dumps")
        _require(corpus.scale == config.upsample_factor,
                 f"corpus scale {corpus.scale} != configured upsample factor "
                 f"{config.upsample_factor}")
        torch.manual_seed(config.seed + 2)
        self.config = config
        self.checkpoint_dir = checkpoint_dir
        self.bundle = build_bundle(config.base_width, config.growth,
                                   config.dense_layers, config.num_parse_classes)
        self.bundle.hrrm = hrrm
        self.bundle.fpm = fpm
        if config.freeze_pretrained:
            for p in list(hrrm.parameters()) + list(fpm.parameters()):
                p.requires_grad_(False)
        self.opt_gen = torch.optim.Adam(
            self.bundle.generator_side_parameters(
                include_pretrained=not config.freeze_pretrained),
            lr=config.learning_rate, weight_decay=config.weight_decay)
        self.opt_disc = torch.optim.Adam(
            self.bundle.discriminator_parameters(),
            lr=config.learning_rate, weight_decay=config.weight_decay)
        self.gammas = (config.gamma1, config.gamma2, config.gamma3, config.gamma4)
        self.boxes = config.crop_boxes
        self.I = stack_batch(corpus.samples, "lrhr")
        self.J = stack_batch(corpus.samples, "lr")
        self.H = stack_batch(corpus.samples, "hr")
        self.targets = _parse_targets(corpus.samples, corpus.scale,
                                      config.num_parse_classes)
        self.n = len(corpus.samples)
        self._last_fake: torch.Tensor | None = None

    def _scores(self, image: torch.Tensor) -> torch.Tensor:
        b = self.bundle
        return torch.stack([
            b.d_global(image).mean(),
            b.d_eye(crop_box(image, self.boxes["eye"])).mean(),
            b.d_nose(crop_box(image, self.boxes["nose"])).mean(),
            b.d_lip(crop_box(image, self.boxes["lip"])).mean(),
        ])

    def _guard(self, value: torch.Tensor, step: int) -> None:
        if torch.isfinite(value):
            return
        path = None
        if self.checkpoint_dir is not None:
            self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
            path = self.checkpoint_dir / f"diverged_step{step}.pt"
            torch.save({name: net.state_dict()
                        for name, net in vars(self.bundle).items()
                        if isinstance(net, torch.nn.Module)}, path)
        raise TrainingDiverged(f"non-finite loss at step {step}"
                               + (f"; checkpoint: {path}" if path else ""))

    def generator_step(self, idx: list[int], step: int = 0) -> dict:
        cfg = self.config
        I, J, H, target = self.I[idx], self.J[idx], self.H[idx], self.targets[idx]
        S, T, A, J_hat = self.bundle.hrrm(I)
        probs = torch.softmax(self.bundle.fpm(I, J_hat), dim=1)
        H_hat = self.bundle.generator(J_hat, probs, I)
        scores = self._scores(H_hat)
        l_fid = mse_t(H, H_hat)
        l_per = perceptual_t(H, H_hat)
        l_adv = sum(g * (1.0 - s) for g, s in zip(self.gammas, scores))
        loss_gt = l_fid + cfg.gamma_p * l_per + l_adv
        total = loss_gt
        if not cfg.freeze_pretrained:
            I_hat = recompose_t(J, S, T, A)
            total = total + loss_recon_t(J_hat, J, I_hat, I) + mse_t(probs, target)
        self._guard(total, step)
        self.opt_gen.zero_grad()
        self.opt_disc.zero_grad()  # adversarial term backprops into critics; discard
        total.backward()
        self.opt_gen.step()
        self._last_fake = H_hat.detach()
        return {
            "loss_gt": float(loss_gt.item()),
            "l_fidelity": float(l_fid.item()),
            "l_perceptual": float(l_per.item()),
            "l_adversarial": float(l_adv.item()),
            "scores_fake": tuple(float(v) for v in scores.detach()),
        }

    def discriminator_step(self, idx: list[int], step: int = 0) -> tuple:
        H = self.H[idx]
        fake = self._last_fake
        if fake is None or fake.shape[0] != len(idx):
            with torch.no_grad():
                _, _, _, J_hat = self.bundle.hrrm(self.I[idx])
                probs = torch.softmax(self.bundle.fpm(self.I[idx], J_hat), dim=1)
                fake = self.bundle.generator(J_hat, probs, self.I[idx])
        d_losses = loss_discriminators_t(self._scores(H), self._scores(fake))
        d_total = d_losses.sum()
        self._guard(d_total, step)
        self.opt_disc.zero_grad()
        d_total.backward()
        self.opt_disc.step()
        self._last_fake = None
        return tuple(float(v) for v in d_losses.detach())

    def run(self, steps: int, batch_size: int) -> list[JointStepLosses]:
        trace = []
        for step, idx in enumerate(_batches(self.n, batch_size, steps)):
            gen = self.generator_step(idx, step)
            d_losses = self.discriminator_step(idx, step)
            trace.append(JointStepLosses(step=step, d_losses=d_losses, **gen))
        return trace


def train_joint(corpus: Corpus, hrrm: HrrmNet, fpm: FpmNet, config: ModelConfig,
                steps: int, batch_size: int | None = None,
                checkpoint_dir: Path | None = None
                ) -> tuple[NetworkBundle, list[JointStepLosses]]:
    """Alternate generator-side and discriminator-side updates for ``steps``."""
    trainer = JointTrainer(corpus, hrrm, fpm, config, checkpoint_dir)
    trace = trainer.run(steps, batch_size or config.joint_batch_size)
    return trainer.bundle, trace


def joint_loss_report(bundle: NetworkBundle, corpus: Corpus, config: ModelConfig,
                      sample_index: int = 0) -> dict:
    """Forward one sample through the full pipeline and report every loss
    with the tensors behind it (float64 HWC arrays), for cross-checking."""
    s = corpus.samples[sample_index]
    I = s.lrhr.unsqueeze(0)
    H = s.hr.unsqueeze(0)
    boxes = config.crop_boxes
    gammas = (config.gamma1, config.gamma2, config.gamma3, config.gamma4)
    with torch.no_grad():
        _, _, _, J_hat = bundle.hrrm(I)
        probs = torch.softmax(bundle.fpm(I, J_hat), dim=1)
        H_hat = bundle.generator(J_hat, probs, I)
        fake_scores = torch.stack([
            bundle.d_global(H_hat).mean(),
            bundle.d_eye(crop_box(H_hat, boxes["eye"])).mean(),
            bundle.d_nose(crop_box(H_hat, boxes["nose"])).mean(),
            bundle.d_lip(crop_box(H_hat, boxes["lip"])).mean(),
        ])
        real_scores = torch.stack([
            bundle.d_global(H).mean(),
            bundle.d_eye(crop_box(H, boxes["eye"])).mean(),
            bundle.d_nose(crop_box(H, boxes["nose"])).mean(),
            bundle.d_lip(crop_box(H, boxes["lip"])).mean(),
        ])
        l_fid = mse_t(H, H_hat)
        l_per = perceptual_t(H, H_hat)
        l_adv = sum(g * (1.0 - s_) for g, s_ in zip(gammas, fake_scores))
        loss_gt = l_fid + config.gamma_p * l_per + l_adv
        d_losses = loss_discriminators_t(real_scores, fake_scores)
    return {
        "loss_gt": float(loss_gt.item()),
        "l_fidelity": float(l_fid.item()),
        "l_perceptual": float(l_per.item()),
        "d_losses": tuple(float(v) for v in d_losses),
        "scores_fake": tuple(float(v) for v in fake_scores),
        "scores_real": tuple(float(v) for v in real_scores),
        "H": _as_hwc(H)[0],
        "H_hat": _as_hwc(H_hat)[0],
    }


# ---------------------------------------------------------------------------
# Inference and evaluation


@dataclass
class RestoreResult:
    sr: torch.Tensor
    clean_lr: torch.Tensor
    parsed_probs: torch.Tensor


def restore(bundle: NetworkBundle, lrhr: torch.Tensor) -> RestoreResult:
    """Map one degraded low-resolution image to its restored full-size image."""
    single = lrhr.dim() == 3
    x = lrhr.unsqueeze(0) if single else lrhr
    with torch.no_grad():
        _, _, _, J_hat = bundle.hrrm(x)
        probs = torch.softmax(bundle.fpm(x, J_hat), dim=1)
        H_hat = bundle.generator(J_hat, probs, x).clamp(0.0, 1.0)
    if single:
        return RestoreResult(H_hat[0], J_hat[0], probs[0])
    return RestoreResult(H_hat, J_hat, probs)


def save_png(path: Path, tensor: torch.Tensor) -> None:
    arr = tensor.detach().clamp(0, 1).permute(1, 2, 0).numpy()
    data = np.round(arr * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path)


def _scorer_command() -> list[str]:
    if importlib.util.find_spec("rainsynth") is None:
        raise RuntimeError(
            "scoring requires the rainsynth package; expected "
            f"`{sys.executable} -m rainsynth` to be runnable")
    return [sys.executable, "-m", "rainsynth"]


def score_dirs(ref_dir: Path, test_dir: Path) -> dict:
    """Shell out to the corpus toolkit's scorer; return its aggregate row."""
    cmd = _scorer_command() + ["score", str(ref_dir), str(test_dir), "--metric", "both"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"scorer failed ({proc.returncode}): {proc.stderr.strip()}")
    rows = [json.loads(line) for line in proc.stdout.strip().splitlines()]
    return rows[-1]


def evaluate(bundle: NetworkBundle, corpus: Corpus, split: str | None,
             out_dir: Path, scale: int) -> list[dict]:
    """Write restored and baseline images, score both via the toolkit CLI.

    Returns one row per variant with the aggregate PSNR/SSIM, plus the
    non-reproducible full-scale reference targets for context.
    """
    out_dir = Path(out_dir)
    samples = corpus.split(split) if split else corpus.samples
    _require(len(samples) > 0, f"no samples in split {split!r}")
    ref, restored_dir, bicubic_dir = out_dir / "ref", out_dir / "restored", out_dir / "bicubic"
    for d in (ref, restored_dir, bicubic_dir):
        d.mkdir(parents=True, exist_ok=True)
    for s in samples:
        save_png(ref / f"{s.id}.png", s.hr)
        save_png(restored_dir / f"{s.id}.png", restore(bundle, s.lrhr).sr)
        upsampled = torch.nn.functional.interpolate(
            s.lrhr.unsqueeze(0), scale_factor=scale, mode="bicubic",
            align_corners=False).clamp(0, 1)[0]
        save_png(bicubic_dir / f"{s.id}.png", upsampled)

    rows = []
    for variant, d in (("restored", restored_dir), ("bicubic_upsampled_input", bicubic_dir)):
        agg = score_dirs(ref, d)
        rows.append({"variant": variant, "count": agg["count"],
                     "psnr": agg["psnr_mean"], "ssim": agg["ssim_mean"]})
    # Full-scale training reference (not attainable at toy scale).
    rows.append({"variant": "full_scale_reference_target", "count": None,
                 "psnr": 23.2075, "ssim": 0.7120})
    return rows
