"""Closed-form coding: sphere identities, class-conditional thresholds,
and the rescaling bridge to the least-squares solution."""

import numpy as np
import pytest

from ebssc import tensor
from ebssc.coder import ClassBiasParams, class_thresholds, \
    code_from_correlation, ebssc_encode, ssc_encode, unit_scale_to_lsq
from ebssc.shrinkage import ThresholdPair, shrink


def _random_instance(rng, c=2, hw=7, k=3, ksz=3):
    x = rng.standard_normal((c, hw, hw))
    bank = rng.standard_normal((k, c, ksz, ksz))
    return x, bank


class TestSphereIdentities:
    """Properties of the closed-form unit-sphere code."""

    def test_code_norm_is_zero_or_one(self):
        """||z*|| is exactly 0 (dead input) or 1 (anything else)."""
        rng = np.random.default_rng(42)
        for _ in range(50):
            x, bank = _random_instance(rng)
            res = ssc_encode(x, bank, rng.uniform(0.05, 0.5))
            n = tensor.l2_norm(res.code)
            assert n == 0.0 or abs(n - 1.0) <= 1e-8

    def test_lambda_is_half_preprojection_norm(self):
        """The sphere multiplier equals half the shrunken norm."""
        rng = np.random.default_rng(42)
        for _ in range(50):
            x, bank = _random_instance(rng)
            res = ssc_encode(x, bank, 0.2)
            np.testing.assert_allclose(
                res.lambda_star, 0.5 * tensor.l2_norm(res.pre_projection),
                atol=1e-12)

    def test_signs_survive_projection(self):
        """Projection rescales but never flips a coefficient."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng)
        res = ssc_encode(x, bank, 0.1)
        np.testing.assert_array_equal(np.sign(res.code),
                                      np.sign(res.pre_projection))

    def test_zero_input_gives_zero_code(self):
        """All-dead shrinkage yields the zero code, not NaN."""
        bank = np.random.default_rng(42).standard_normal((3, 2, 3, 3))
        res = ssc_encode(np.zeros((2, 6, 6)), bank, 0.5)
        assert (res.code == 0).all()
        assert res.lambda_star == 0.0

    def test_optimal_energy_is_shrunken_norm(self):
        """The attained objective value is ||z_tilde||_2 = 2 lambda*."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng)
        res = ssc_encode(x, bank, 0.3)
        np.testing.assert_allclose(res.optimal_energy,
                                   tensor.l2_norm(res.pre_projection),
                                   rtol=1e-12)

    def test_encode_is_shrink_then_normalize(self):
        """ssc_encode composes correlate, shrink, and projection."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng)
        pair = ThresholdPair.symmetric(0.25)
        v = tensor.cross_correlate(x, bank, 0)
        zt = shrink(v, pair)
        res = ssc_encode(x, bank, pair)
        np.testing.assert_array_equal(res.pre_projection, zt)
        np.testing.assert_allclose(res.code, zt / tensor.l2_norm(zt),
                                   rtol=1e-12)


class TestClassBiasParams:
    """Validation and classwise threshold assembly."""

    def test_shapes_must_agree(self):
        """Mismatched arm shapes are rejected."""
        with pytest.raises(ValueError):
            ClassBiasParams(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros(3))

    def test_offset_length_must_match_channels(self):
        """The shared offset is per-channel."""
        with pytest.raises(ValueError):
            ClassBiasParams(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros(4))

    def test_tied_and_map_ranks(self):
        """(Y, K) arms are tied; (Y, K, H, W) arms are spatial maps."""
        tied = ClassBiasParams(np.zeros((2, 3)), np.zeros((2, 3)),
                               np.zeros(3))
        maps = ClassBiasParams(np.zeros((2, 3, 4, 4)),
                               np.zeros((2, 3, 4, 4)), np.zeros(3))
        assert tied.tied and not maps.tied
        assert tied.num_classes == maps.num_classes == 2

    def test_class_thresholds_formula(self):
        """beta+ = w+[y] + b and beta- = w-[y] - b, channelwise."""
        rng = np.random.default_rng(42)
        params = ClassBiasParams(rng.uniform(0, 0.3, (4, 3)),
                                 rng.uniform(0, 0.3, (4, 3)),
                                 rng.uniform(-0.1, 0.1, 3))
        pair = class_thresholds(params, 2)
        np.testing.assert_allclose(
            pair.beta_plus[:, 0, 0],
            np.asarray(params.w_hat_plus)[2] + params.offset)
        np.testing.assert_allclose(
            pair.beta_minus[:, 0, 0],
            np.asarray(params.w_hat_minus)[2] - params.offset)

    def test_spatial_maps_keep_their_grid(self):
        """Map-shaped arms produce full (K, H, W) thresholds."""
        rng = np.random.default_rng(42)
        params = ClassBiasParams(rng.uniform(0, 0.3, (2, 3, 5, 5)),
                                 rng.uniform(0, 0.3, (2, 3, 5, 5)),
                                 rng.uniform(-0.1, 0.1, 3))
        pair = class_thresholds(params, 1)
        assert pair.beta_plus.shape == (3, 5, 5)
        np.testing.assert_allclose(
            pair.beta_plus,
            np.asarray(params.w_hat_plus)[1]
            + np.asarray(params.offset)[:, None, None])

    def test_nonneg_arms_always_yield_proper_pairs(self):
        """Any offset keeps -beta_minus <= beta_plus when arms are >= 0."""
        rng = np.random.default_rng(42)
        for _ in range(100):
            params = ClassBiasParams(rng.uniform(0, 1, (3, 4)),
                                     rng.uniform(0, 1, (3, 4)),
                                     rng.uniform(-5, 5, 4))
            for y in range(3):
                assert class_thresholds(params, y).is_proper()


class TestEbsscEncode:
    """Class-conditional coding against its manual composition."""

    def test_matches_manual_thresholds(self):
        """ebssc_encode == ssc_encode with that label's pair."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng)
        params = ClassBiasParams(rng.uniform(0, 0.3, (4, 3)),
                                 rng.uniform(0, 0.3, (4, 3)),
                                 rng.uniform(-0.1, 0.1, 3))
        for y in range(4):
            direct = ebssc_encode(x, bank, params, y)
            manual = ssc_encode(x, bank, class_thresholds(params, y))
            np.testing.assert_array_equal(direct.code, manual.code)

    def test_label_changes_the_code(self):
        """Distinct class hypotheses give distinct codes generically."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng)
        params = ClassBiasParams(rng.uniform(0, 0.4, (2, 3)),
                                 rng.uniform(0, 0.4, (2, 3)),
                                 rng.uniform(-0.1, 0.1, 3))
        a = ebssc_encode(x, bank, params, 0).code
        b = ebssc_encode(x, bank, params, 1).code
        assert not np.array_equal(a, b)


class TestFeedbackDrive:
    """The optional additive drive terms used by unrolled inference."""

    def test_zero_drive_is_plain_coding(self):
        """c+ = c- = 0 reproduces the drive-free solution."""
        rng = np.random.default_rng(42)
        v = rng.standard_normal((3, 5, 5))
        pair = ThresholdPair.symmetric(0.2)
        plain = code_from_correlation(v, pair)
        driven = code_from_correlation(v, pair, c_plus=np.zeros_like(v),
                                       c_minus=np.zeros_like(v))
        np.testing.assert_allclose(driven.code, plain.code, atol=1e-15)

    def test_positive_drive_widens_positive_support(self):
        """A positive c+ can only grow the positive active set."""
        rng = np.random.default_rng(42)
        v = rng.standard_normal((3, 5, 5))
        pair = ThresholdPair.symmetric(0.3)
        plain = code_from_correlation(v, pair)
        driven = code_from_correlation(v, pair,
                                       c_plus=np.full_like(v, 0.1),
                                       c_minus=np.zeros_like(v))
        before = plain.pre_projection > 0
        after = driven.pre_projection > 0
        assert (after | ~before).all()


class TestUnitScaleToLsq:
    """Rescaling sphere solutions onto the least-squares optimum."""

    def test_reconstruction_is_scale_times_decode(self):
        """reconstruction == scale * reconstruct(code)."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng, c=1, hw=5, k=2)
        res = ssc_encode(x, bank, 0.025)
        out = unit_scale_to_lsq(res.code, x, bank, 0.05)
        np.testing.assert_allclose(
            out.reconstruction,
            out.scale * tensor.reconstruct(
                np.asarray(res.code, dtype=np.float64), bank, 0),
            rtol=1e-12)

    def test_degenerate_when_correlation_is_weak(self):
        """If <x, u> cannot beat the l1 cost, the optimum is z = 0."""
        rng = np.random.default_rng(42)
        x, bank = _random_instance(rng, c=1, hw=5, k=2)
        code = rng.standard_normal((2, 3, 3))
        code /= tensor.l2_norm(code)
        out = unit_scale_to_lsq(code, 1e-6 * x, bank, beta=10.0)
        assert out.degenerate
        assert out.scale == 0.0
        assert (out.reconstruction == 0).all()
