"""Tests for the degradation model: sampling, synthesis, compose/invert."""

from __future__ import annotations

import numpy as np
import pytest

from rainsynth.errors import IllConditionedInversionError, InvalidArgumentError
from rainsynth.rainmodel import (
    DegradationConfig,
    PhysicalParams,
    RainParams,
    compose_heavyrain,
    degrade_full,
    degrade_lr,
    invert_heavyrain,
    make_atmospheric,
    make_transmission,
    motion_kernel,
    recompose,
    sample_params,
    synth_rain_layer,
)


def const_phys(h, w, s=0.0, t=1.0, a=0.85, channels=3):
    """Build constant parameter maps without range checks on t."""
    return PhysicalParams(
        rain_layer_S=np.full((h, w, 1), s),
        transmission_T=np.full((h, w, 1), t),
        atmospheric_A=np.full((h, w, channels), a),
    )


class TestSampleParams:
    def test_collapsed_ranges_return_constants(self):
        cfg = DegradationConfig(
            noise_sigma_range=(0.2, 0.2),
            motion_angle_range=(45.0, 45.0),
            motion_length_range=(4, 4),
            atmo_range=(0.9, 0.9),
            transmission_range=(0.5, 0.5),
        )
        for index in (0, 3, 999):
            p = sample_params(cfg, index)
            assert p.noise_sigma == 0.2
            assert p.motion_angle == 45.0
            assert p.motion_length == 4
            assert p.atmo_value == 0.9
            assert p.transmission_value == 0.5

    def test_deterministic_in_seed_and_index(self):
        cfg = DegradationConfig(master_seed=1234)
        assert sample_params(cfg, 7) == sample_params(cfg, 7)
        assert sample_params(cfg, 7) != sample_params(cfg, 8)
        assert sample_params(cfg, 7) != sample_params(DegradationConfig(master_seed=1235), 7)

    def test_order_independence(self):
        cfg = DegradationConfig(master_seed=55)
        forward = [sample_params(cfg, i) for i in range(20)]
        backward = [sample_params(cfg, i) for i in reversed(range(20))]
        assert forward == list(reversed(backward))

    def test_atmo_mean_is_uniform(self):
        # Monte-Carlo check: U[0.7, 1.0] has mean 0.85.
        cfg = DegradationConfig(master_seed=99, atmo_range=(0.7, 1.0))
        draws = [sample_params(cfg, i).atmo_value for i in range(10_000)]
        assert abs(np.mean(draws) - 0.85) < 0.01

    def test_fields_within_ranges(self):
        cfg = DegradationConfig(master_seed=3)
        for i in range(200):
            p = sample_params(cfg, i)
            assert cfg.noise_sigma_range[0] <= p.noise_sigma <= cfg.noise_sigma_range[1]
            assert cfg.motion_angle_range[0] <= p.motion_angle <= cfg.motion_angle_range[1]
            assert cfg.motion_length_range[0] <= p.motion_length <= cfg.motion_length_range[1]
            assert cfg.atmo_range[0] <= p.atmo_value <= cfg.atmo_range[1]
            assert cfg.transmission_range[0] <= p.transmission_value <= cfg.transmission_range[1]

    def test_rejects_negative_index(self):
        with pytest.raises(InvalidArgumentError):
            sample_params(DegradationConfig(), -1)


class TestConfigValidation:
    def test_transmission_floor_enforced(self):
        with pytest.raises(InvalidArgumentError):
            DegradationConfig(transmission_range=(0.01, 0.9))

    def test_angle_domain(self):
        with pytest.raises(InvalidArgumentError):
            DegradationConfig(motion_angle_range=(-5.0, 20.0))
        with pytest.raises(InvalidArgumentError):
            DegradationConfig(motion_angle_range=(0.0, 180.0))

    def test_roundtrips_through_dict(self):
        cfg = DegradationConfig(scale_s=2, master_seed=77, use_prefilter=True)
        assert DegradationConfig.from_dict(cfg.to_dict()) == cfg


class TestMotionKernel:
    def test_length_one_is_delta(self):
        for angle in (0.0, 37.0, 90.0, 145.5):
            k = motion_kernel(angle, 1)
            assert k.shape == (3, 3)
            expected = np.zeros((3, 3))
            expected[1, 1] = 1.0
            assert np.array_equal(k, expected)

    def test_horizontal_mass_on_central_row(self):
        k = motion_kernel(0.0, 5)
        center = k.shape[0] // 2
        off_row = np.delete(k, center, axis=0)
        assert np.all(off_row == 0.0)
        assert np.max(np.abs(k - k[:, ::-1])) <= 1e-12

    def test_vertical_is_transpose_of_horizontal(self):
        for length in (2, 5, 8):
            k0 = motion_kernel(0.0, length)
            k90 = motion_kernel(90.0, length)
            assert np.max(np.abs(k90 - k0.T)) <= 1e-12

    def test_normalized_nonnegative(self):
        for angle, length in [(0, 3), (30, 7), (60, 4), (120, 9), (179, 6)]:
            k = motion_kernel(angle, length)
            assert abs(k.sum() - 1.0) <= 1e-12
            assert np.all(k >= 0.0)
            assert k.shape[0] == 2 * -(-length // 2) + 1

    def test_rejects_zero_length(self):
        with pytest.raises(InvalidArgumentError):
            motion_kernel(45.0, 0)


class TestSynthRainLayer:
    def test_vanishing_noise_gives_zeros(self):
        # Layer magnitude is bounded by the largest rectified noise draw,
        # a few sigma, so sigma well below the tolerance forces zeros.
        p = RainParams(1e-12, 80.0, 5, 0.9, 0.5, sample_seed=42)
        layer = synth_rain_layer(16, 16, p)
        assert np.max(np.abs(layer)) <= 1e-9

    def test_deterministic(self):
        p = RainParams(0.25, 100.0, 7, 0.9, 0.5, sample_seed=314)
        a = synth_rain_layer(24, 20, p)
        b = synth_rain_layer(24, 20, p)
        assert np.array_equal(a, b)

    def test_delta_kernel_equals_rectified_noise(self):
        # Oracle: with length 1 the motion filter is the identity, so the
        # layer must equal the rectified, clamped raw noise field.
        p = RainParams(0.3, 45.0, 1, 0.9, 0.5, sample_seed=2718)
        layer = synth_rain_layer(12, 9, p)
        noise = np.random.default_rng(2718).normal(0.0, 0.3, size=(12, 9))
        expected = np.clip(np.maximum(noise, 0.0), 0.0, 1.0)[:, :, None]
        assert np.array_equal(layer, expected)

    def test_bounded(self):
        p = RainParams(0.8, 70.0, 6, 0.9, 0.5, sample_seed=5)
        layer = synth_rain_layer(32, 32, p)
        assert np.all(layer >= 0.0) and np.all(layer <= 1.0)


class TestParameterMaps:
    def test_transmission_identity(self):
        assert np.array_equal(make_transmission(4, 6, 1.0), np.ones((4, 6, 1)))

    def test_transmission_value(self):
        assert np.all(make_transmission(5, 5, 0.5) == 0.5)

    def test_transmission_domain(self):
        with pytest.raises(InvalidArgumentError):
            make_transmission(4, 4, 0.0)
        with pytest.raises(InvalidArgumentError):
            make_transmission(4, 4, 1.5)

    def test_atmospheric_values(self):
        assert np.all(make_atmospheric(4, 4, 1.0) == 1.0)
        a = make_atmospheric(4, 4, 0.85, channels=3)
        assert a.shape == (4, 4, 3)
        assert np.unique(a).size == 1

    def test_atmospheric_domain(self):
        with pytest.raises(InvalidArgumentError):
            make_atmospheric(4, 4, 0.0)


class TestDegradeLr:
    def test_identity_scale(self):
        rng = np.random.default_rng(8)
        H = rng.random((12, 12, 3))
        J = degrade_lr(H, DegradationConfig(scale_s=1))
        assert np.array_equal(J, H)

    def test_scale4_reference_shape(self):
        H = np.zeros((128, 128, 3))
        assert degrade_lr(H, DegradationConfig(scale_s=4)).shape == (32, 32, 3)

    def test_constant_preserved(self):
        H = np.full((16, 16, 3), 0.42)
        for use_prefilter in (False, True):
            cfg = DegradationConfig(scale_s=4, use_prefilter=use_prefilter)
            assert np.max(np.abs(degrade_lr(H, cfg) - 0.42)) <= 1e-12

    def test_rejects_nondivisible(self):
        with pytest.raises(InvalidArgumentError):
            degrade_lr(np.zeros((10, 12, 1)), DegradationConfig(scale_s=4))


class TestComposeInvert:
    def test_no_rain_no_veil_is_identity(self):
        rng = np.random.default_rng(17)
        J = rng.random((8, 8, 3))
        out = compose_heavyrain(J, const_phys(8, 8, s=0.0, t=1.0))
        assert np.array_equal(out.preclamp, J)
        assert np.array_equal(out.clamped, J)

    def test_full_veil_is_atmospheric(self):
        rng = np.random.default_rng(18)
        J = rng.random((6, 6, 3))
        phys = const_phys(6, 6, s=0.3, t=0.0, a=0.77)
        out = compose_heavyrain(J, phys)
        assert np.array_equal(out.preclamp, phys.atmospheric_A)

    def test_scalar_hand_value(self):
        J = np.full((1, 1, 1), 0.5)
        phys = const_phys(1, 1, s=0.2, t=0.8, a=1.0, channels=1)
        out = compose_heavyrain(J, phys)
        assert out.preclamp[0, 0, 0] == pytest.approx(0.76, abs=1e-15)

    def test_scalar_inversion_hand_value(self):
        phys = const_phys(1, 1, s=0.2, t=0.8, a=1.0, channels=1)
        I = np.full((1, 1, 1), 0.76)
        J = invert_heavyrain(I, phys)
        assert J[0, 0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_degenerate_inversion(self):
        rng = np.random.default_rng(19)
        I = rng.random((5, 5, 3))
        assert np.array_equal(invert_heavyrain(I, const_phys(5, 5, s=0.0, t=1.0)), I)

    def test_roundtrip_100_random_draws(self):
        rng = np.random.default_rng(20)
        worst = 0.0
        for _ in range(100):
            h, w = int(rng.integers(4, 24)), int(rng.integers(4, 24))
            J = rng.random((h, w, 3))
            phys = PhysicalParams(
                rain_layer_S=rng.random((h, w, 1)),
                transmission_T=np.full((h, w, 1), rng.uniform(0.05, 1.0)),
                atmospheric_A=np.full((h, w, 3), rng.uniform(0.1, 1.0)),
            )
            back = invert_heavyrain(compose_heavyrain(J, phys).preclamp, phys)
            worst = max(worst, float(np.max(np.abs(back - J))))
        assert worst <= 1e-10

    def test_inversion_guards_low_transmission(self):
        phys = const_phys(4, 4, t=0.0)
        with pytest.raises(IllConditionedInversionError):
            invert_heavyrain(np.zeros((4, 4, 3)), phys)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            compose_heavyrain(np.zeros((4, 4, 3)), const_phys(5, 5))


class TestRecompose:
    def test_ground_truth_estimates_match_compositor(self):
        rng = np.random.default_rng(23)
        J = rng.random((7, 7, 3))
        phys = const_phys(7, 7, s=0.1, t=0.6, a=0.9)
        out = compose_heavyrain(J, phys)
        re = recompose(J, phys.rain_layer_S, phys.transmission_T, phys.atmospheric_A)
        assert np.array_equal(re, out.preclamp)

    def test_identity_estimates(self):
        rng = np.random.default_rng(24)
        J = rng.random((5, 5, 3))
        re = recompose(J, np.zeros((5, 5, 1)), np.ones((5, 5, 1)), np.full((5, 5, 3), 0.8))
        assert np.array_equal(re, J)

    def test_matches_per_pixel_formula(self):
        rng = np.random.default_rng(25)
        J = rng.random((4, 4, 1))
        S = rng.random((4, 4, 1))
        T = rng.uniform(0.05, 1.0, (4, 4, 1))
        A = np.full((4, 4, 1), 0.66)
        re = recompose(J, S, T, A)
        for y in range(4):
            for x in range(4):
                expected = T[y, x, 0] * (J[y, x, 0] + S[y, x, 0]) + (1 - T[y, x, 0]) * A[y, x, 0]
                assert abs(re[y, x, 0] - expected) <= 1e-12


class TestDegradeFull:
    def test_collapsed_ranges_reduce_to_downsampling(self):
        cfg = DegradationConfig(
            scale_s=2,
            noise_sigma_range=(1e-12, 1e-12),
            transmission_range=(1.0, 1.0),
        )
        rng = np.random.default_rng(26)
        H = rng.random((16, 16, 3))
        sample = degrade_full(H, cfg, 0)
        assert np.max(np.abs(sample.lrhr - sample.lr)) <= 1e-9

    def test_deterministic(self):
        cfg = DegradationConfig(master_seed=4242)
        rng = np.random.default_rng(27)
        H = rng.random((32, 32, 3))
        a = degrade_full(H, cfg, 3)
        b = degrade_full(H, cfg, 3)
        assert np.array_equal(a.lrhr, b.lrhr)
        assert np.array_equal(a.lrhr_preclamp, b.lrhr_preclamp)
        assert np.array_equal(a.lr, b.lr)
        assert a.params == b.params

    def test_roundtrip_through_preclamp(self):
        cfg = DegradationConfig(master_seed=11)
        rng = np.random.default_rng(28)
        for index in range(5):
            H = rng.random((32, 32, 3))
            s = degrade_full(H, cfg, index)
            back = invert_heavyrain(s.lrhr_preclamp, s.phys)
            assert np.max(np.abs(back - s.lr)) <= 1e-10

    def test_multi_layer_sum(self):
        cfg1 = DegradationConfig(master_seed=5, num_streak_layers_m=1)
        cfg3 = DegradationConfig(master_seed=5, num_streak_layers_m=3)
        H = np.full((16, 16, 3), 0.5)
        s1 = degrade_full(H, cfg1, 0)
        s3 = degrade_full(H, cfg3, 0)
        # More layers add more rain mass; first layer is shared.
        assert s3.phys.rain_layer_S.sum() > s1.phys.rain_layer_S.sum()
        assert np.all(s3.phys.rain_layer_S >= 0.0)


class TestModelProperties:
    def test_veiling_monotone_toward_atmospheric(self):
        # With S = 0, |I - a| = t * |J - a|: shrinking t pulls pixels toward a.
        rng = np.random.default_rng(29)
        J = rng.random((6, 6, 3))
        a = 0.8
        prev = None
        for t in (0.9, 0.7, 0.5, 0.3, 0.1):
            out = compose_heavyrain(J, const_phys(6, 6, s=0.0, t=t, a=a)).preclamp
            dist = np.abs(out - a)
            if prev is not None:
                assert np.all(dist <= prev + 1e-12)
            prev = dist

    def test_affine_closed_form(self):
        rng = np.random.default_rng(30)
        J = rng.random((5, 5, 3))
        t, a = 0.35, 0.95
        out = compose_heavyrain(J, const_phys(5, 5, s=0.0, t=t, a=a)).preclamp
        assert np.max(np.abs(out - (t * J + (1 - t) * a))) <= 1e-12
