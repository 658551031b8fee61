"""Tests for the training loops: alternation, guards, determinism."""

from __future__ import annotations

import math

import pytest
import torch

from reftrainer import (
    JointTrainer,
    ModelConfig,
    TrainingDiverged,
    load_corpus,
    pretrain_fpm,
    pretrain_hrrm,
    restore,
    train_joint,
)
from reftrainer.corpus import Corpus


def snapshot(modules) -> list[torch.Tensor]:
    out = []
    for m in modules:
        out += [p.detach().clone() for p in m.parameters()]
    return out


def identical(before: list[torch.Tensor], modules) -> bool:
    after = []
    for m in modules:
        after += list(m.parameters())
    return all(torch.equal(b, a) for b, a in zip(before, after))


@pytest.fixture(scope="module")
def pretrained(corpus, toy_config):
    hrrm, _ = pretrain_hrrm(corpus, toy_config, steps=30, batch_size=8)
    fpm, _ = pretrain_fpm(corpus, hrrm, toy_config, steps=30, batch_size=8)
    return hrrm, fpm


class TestPretrainHrrm:
    def test_deterministic_given_seed(self, corpus, toy_config):
        _, t1 = pretrain_hrrm(corpus, toy_config, steps=10, batch_size=8)
        _, t2 = pretrain_hrrm(corpus, toy_config, steps=10, batch_size=8)
        assert t1 == t2

    def test_requires_preclamp_dumps(self, corpus, toy_config):
        stripped = Corpus(root=corpus.root, scale=corpus.scale,
                          master_seed=corpus.master_seed,
                          samples=[type(s)(id=s.id, split=s.split, lrhr=s.lrhr,
                                           lr=s.lr, hr=s.hr, parsed_hr=s.parsed_hr,
                                           lrhr_preclamp=None)
                                   for s in corpus.samples])
        with pytest.raises(ValueError):
            pretrain_hrrm(stripped, toy_config, steps=1)

    def test_omega1_zero_trace_is_pure_recon(self, corpus, toy_config):
        _, trace = pretrain_hrrm(corpus, toy_config, steps=5, batch_size=8, omega1=0.0)
        for row in trace:
            assert row["loss_rt"] == row["loss_recon"]


class TestPretrainFpm:
    def test_requires_parsing(self, corpus, toy_config, pretrained):
        hrrm, _ = pretrained
        stripped = Corpus(root=corpus.root, scale=corpus.scale,
                          master_seed=corpus.master_seed,
                          samples=[type(s)(id=s.id, split=s.split, lrhr=s.lrhr,
                                           lr=s.lr, hr=s.hr, parsed_hr=None,
                                           lrhr_preclamp=s.lrhr_preclamp)
                                   for s in corpus.samples])
        with pytest.raises(ValueError):
            pretrain_fpm(stripped, hrrm, toy_config, steps=1)

    def test_six_class_output(self, corpus, toy_config, pretrained):
        hrrm, fpm = pretrained
        x = corpus.samples[0].lrhr.unsqueeze(0)
        with torch.no_grad():
            _, _, _, J_hat = hrrm(x)
            logits = fpm(x, J_hat)
        assert logits.shape[1] == 6


class TestAlternation:
    def test_generator_step_leaves_discriminators_unchanged(self, corpus, toy_config,
                                                            pretrained):
        hrrm, fpm = pretrained
        trainer = JointTrainer(corpus, hrrm, fpm, toy_config)
        discs = list(trainer.bundle.discriminators().values())
        before = snapshot(discs)
        trainer.generator_step(list(range(8)))
        assert identical(before, discs)

    def test_discriminator_step_leaves_generator_side_unchanged(self, corpus, toy_config,
                                                                pretrained):
        hrrm, fpm = pretrained
        trainer = JointTrainer(corpus, hrrm, fpm, toy_config)
        gen_side = [trainer.bundle.generator, trainer.bundle.hrrm, trainer.bundle.fpm]
        trainer.generator_step(list(range(8)))
        before = snapshot(gen_side)
        trainer.discriminator_step(list(range(8)))
        assert identical(before, gen_side)

    def test_freeze_flag_pins_pretrained_modules(self, corpus, pretrained):
        hrrm, fpm = pretrained
        import copy
        hrrm, fpm = copy.deepcopy(hrrm), copy.deepcopy(fpm)
        cfg = ModelConfig(seed=0, learning_rate=3e-3, freeze_pretrained=True)
        before = snapshot([hrrm, fpm])
        bundle, _ = train_joint(corpus, hrrm, fpm, cfg, steps=5, batch_size=8)
        assert identical(before, [bundle.hrrm, bundle.fpm])

    def test_unfrozen_modules_do_move(self, corpus, toy_config, pretrained):
        hrrm, fpm = pretrained
        import copy
        hrrm, fpm = copy.deepcopy(hrrm), copy.deepcopy(fpm)
        before = snapshot([hrrm])
        bundle, _ = train_joint(corpus, hrrm, fpm, toy_config, steps=5, batch_size=8)
        assert not identical(before, [bundle.hrrm])


class TestDivergenceGuard:
    def test_nan_weight_aborts_with_checkpoint(self, corpus, toy_config, pretrained,
                                               tmp_path):
        hrrm, fpm = pretrained
        import copy
        trainer = JointTrainer(corpus, copy.deepcopy(hrrm), copy.deepcopy(fpm),
                               toy_config, checkpoint_dir=tmp_path / "ckpt")
        with torch.no_grad():
            next(trainer.bundle.generator.parameters()).fill_(float("nan"))
        with pytest.raises(TrainingDiverged):
            trainer.generator_step(list(range(8)))
        assert any((tmp_path / "ckpt").iterdir())


class TestRestore:
    def test_shapes_and_range(self, corpus, trained_pipeline):
        bundle = trained_pipeline["bundle"]
        s = corpus.samples[0]
        result = restore(bundle, s.lrhr)
        assert result.sr.shape == (3, 32, 32)
        assert result.clean_lr.shape == (3, 8, 8)
        assert result.parsed_probs.shape == (6, 8, 8)
        assert float(result.sr.min()) >= 0.0 and float(result.sr.max()) <= 1.0

    def test_batched_restore(self, corpus, trained_pipeline):
        bundle = trained_pipeline["bundle"]
        batch = torch.stack([s.lrhr for s in corpus.samples[:3]])
        result = restore(bundle, batch)
        assert result.sr.shape == (3, 3, 32, 32)

    def test_wrong_size_rejected_by_network_contract(self, corpus, trained_pipeline):
        bundle = trained_pipeline["bundle"]
        result = restore(bundle, torch.rand(3, 16, 16))
        assert result.sr.shape == (3, 64, 64)


class TestJointTraceFinite:
    def test_all_losses_finite(self, trained_pipeline):
        for row in trained_pipeline["joint_trace"]:
            assert math.isfinite(row.loss_gt)
            assert math.isfinite(row.l_fidelity)
            assert math.isfinite(row.l_perceptual)
            assert math.isfinite(row.l_adversarial)
            assert all(math.isfinite(v) for v in row.d_losses)
            assert all(0.0 <= v <= 1.0 for v in row.scores_fake)
