"""Wavelet transform properties: exact Haar values, halving, perfect
reconstruction, energy conservation, constant-kill, causality, channel
independence, and detail selection."""

import numpy as np
import pytest

import waverl.autodiff as ad
import waverl.wavelets as wv
from waverl.autodiff import Tensor, backward
from waverl.errors import DecompositionError, DimensionError, ParameterError, ReconstructionError

INV_SQRT2 = 1.0 / np.sqrt(2.0)


class TestFilterBank:
    def test_haar_exact_values(self):
        bank = wv.FilterBank.haar()
        np.testing.assert_array_equal(bank.y0.data, [INV_SQRT2, INV_SQRT2])
        np.testing.assert_array_equal(bank.y1.data, [INV_SQRT2, -INV_SQRT2])

    def test_fixed_bank_orthonormality_enforced(self):
        with pytest.raises(ParameterError):
            wv.FilterBank(y0=Tensor([1.0, 1.0]), y1=Tensor([1.0, -1.0]), trainable=False)

    def test_odd_length_rejected(self):
        with pytest.raises(ParameterError):
            wv.FilterBank.haar(length=3)

    def test_trainable_padded_haar(self):
        bank = wv.FilterBank.haar(trainable=True, length=4)
        np.testing.assert_array_equal(bank.y0.data, [INV_SQRT2, INV_SQRT2, 0.0, 0.0])
        assert bank.y0.requires_grad and bank.y1.requires_grad

    def test_fixed_bank_has_no_params(self):
        assert wv.FilterBank.haar().params() == {}


class TestDwtLevel:
    def test_ones_signal(self):
        u, g = wv.dwt_level(Tensor(np.ones((4, 1))), wv.FilterBank.haar())
        np.testing.assert_allclose(u.data.ravel(), [np.sqrt(2.0), np.sqrt(2.0)])
        np.testing.assert_allclose(g.data.ravel(), [0.0, 0.0], atol=1e-15)

    def test_constant_kills_interior_details(self):
        for t in (6, 7, 16):
            _, g = wv.dwt_level(Tensor(np.full((t, 2), 3.25)), wv.FilterBank.haar())
            interior = g.data[1:] if t % 2 else g.data
            np.testing.assert_array_equal(interior, np.zeros_like(interior))

    def test_matches_naive_pair_convolution(self):
        # oracle: explicit pair sums, trailing-aligned
        rng = np.random.default_rng(0)
        for t in (6, 9):
            x = rng.normal(size=(t, 1))
            pad = np.vstack([np.zeros((t % 2, 1)), x])
            u, g = wv.dwt_level(Tensor(x), wv.FilterBank.haar())
            for n in range(pad.shape[0] // 2):
                old, new = pad[2 * n, 0], pad[2 * n + 1, 0]
                assert u.data[n, 0] == pytest.approx((old + new) * INV_SQRT2)
                assert g.data[n, 0] == pytest.approx((new - old) * INV_SQRT2)

    def test_too_short(self):
        with pytest.raises(DecompositionError, match="too short"):
            wv.dwt_level(Tensor(np.ones((1, 1))), wv.FilterBank.haar())

    def test_smooths_noisy_trend(self):
        # low-pass output tracks the pairwise moving average of its input
        rng = np.random.default_rng(1)
        t = np.arange(256)
        slow = np.sin(2 * np.pi * t / 128.0)
        noisy = slow + rng.normal(0, 0.8, size=256)
        u, _ = wv.dwt_level(Tensor(noisy.reshape(-1, 1)), wv.FilterBank.haar())
        ma = noisy.reshape(-1, 2).mean(axis=1)  # independent moving-average oracle
        c = np.corrcoef(u.data.ravel(), ma)[0, 1]
        assert c > 0.95


class TestDwtFull:
    def test_halving_lengths(self):
        stack = wv.dwt_full(Tensor(np.ones((8, 1))), wv.FilterBank.haar(), 3)
        assert [g.shape[0] for g in stack.details] == [4, 2, 1]
        assert stack.approximation.shape[0] == 1

    def test_halving_odd_lengths(self):
        stack = wv.dwt_full(Tensor(np.ones((13, 2))), wv.FilterBank.haar(), 3)
        assert [g.shape[0] for g in stack.details] == [7, 4, 2]

    def test_level_zero_rejected(self):
        with pytest.raises(ParameterError):
            wv.dwt_full(Tensor(np.ones((8, 1))), wv.FilterBank.haar(), 0)

    def test_too_short_for_levels(self):
        with pytest.raises(DecompositionError):
            wv.dwt_full(Tensor(np.ones((7, 1))), wv.FilterBank.haar(), 3)

    def test_channel_independence(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(32, 4))
        joint = wv.dwt_full(Tensor(z), wv.FilterBank.haar(), 2)
        for c in range(4):
            solo = wv.dwt_full(Tensor(z[:, c : c + 1]), wv.FilterBank.haar(), 2)
            np.testing.assert_array_equal(joint.approximation.data[:, c],
                                          solo.approximation.data[:, 0])
            for gj, gs in zip(joint.details, solo.details):
                np.testing.assert_array_equal(gj.data[:, c], gs.data[:, 0])

    def test_causality_within_coefficient_support(self):
        # coefficient n at level m reads inputs up to its support end only
        rng = np.random.default_rng(3)
        z = rng.normal(size=(32, 1))
        base = wv.dwt_full(Tensor(z), wv.FilterBank.haar(), 2)
        supports = wv.coefficient_supports(32, 2)
        flat_base = wv.flatten_stack(base).data
        for c, (start, end) in enumerate(supports):
            if end + 1 >= 32:
                continue
            bumped = z.copy()
            bumped[end + 1 :] += rng.normal(size=(32 - end - 1, 1)) * 5.0
            flat = wv.flatten_stack(wv.dwt_full(Tensor(bumped), wv.FilterBank.haar(), 2)).data
            np.testing.assert_array_equal(flat[c], flat_base[c])

    def test_gradient_flows_to_trainable_bank(self):
        bank = wv.FilterBank.haar(trainable=True)
        z = Tensor(np.random.default_rng(4).normal(size=(16, 2)))
        stack = wv.dwt_full(z, bank, 2)
        backward(ad.tsum(ad.square(wv.flatten_stack(stack))))
        assert bank.y0.grad is not None and np.any(bank.y0.grad != 0.0)
        assert bank.y1.grad is not None and np.any(bank.y1.grad != 0.0)


class TestIdwt:
    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_round_trip(self, levels):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(64, 3))
        bank = wv.FilterBank.haar()
        rec = wv.idwt_full(wv.dwt_full(Tensor(z), bank, levels), bank)
        assert np.abs(rec.data - z).max() < 1e-10

    def test_round_trip_odd_lengths(self):
        rng = np.random.default_rng(6)
        for t in (5, 11, 21, 37):
            z = rng.normal(size=(t, 2))
            bank = wv.FilterBank.haar()
            rec = wv.idwt_full(wv.dwt_full(Tensor(z), bank, 2), bank)
            assert np.abs(rec.data - z).max() < 1e-10

    def test_zero_signal(self):
        bank = wv.FilterBank.haar()
        rec = wv.idwt_full(wv.dwt_full(Tensor(np.zeros((16, 1))), bank, 2), bank)
        np.testing.assert_array_equal(rec.data, np.zeros((16, 1)))

    def test_energy_conservation(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(64, 2))
        stack = wv.dwt_full(Tensor(z), wv.FilterBank.haar(), 3)
        e_in = float((z * z).sum())
        e_out = float((stack.approximation.data ** 2).sum()
                      + sum((g.data ** 2).sum() for g in stack.details))
        assert abs(e_in - e_out) / e_in < 1e-9

    def test_trainable_bank_rejected(self):
        bank = wv.FilterBank.haar(trainable=True)
        stack = wv.dwt_full(Tensor(np.ones((8, 1))), bank, 1)
        with pytest.raises(ReconstructionError):
            wv.idwt_full(stack, bank)

    def test_level_mismatch_rejected(self):
        bank = wv.FilterBank.haar()
        stack = wv.dwt_full(Tensor(np.ones((8, 1))), bank, 2)
        stack.details.pop()
        with pytest.raises(ReconstructionError):
            wv.idwt_full(stack, bank)


class TestSelectDetails:
    def test_identity_at_full_fraction(self):
        stack = wv.dwt_full(Tensor(np.random.default_rng(8).normal(size=(16, 1))),
                            wv.FilterBank.haar(), 2)
        same = wv.select_details(stack, 1.0)
        assert same.details[0] is stack.details[0]

    def test_keeps_trailing_half(self):
        stack = wv.dwt_full(Tensor(np.arange(8.0).reshape(-1, 1)), wv.FilterBank.haar(), 1)
        g = stack.details[0].data.copy()
        out = wv.select_details(stack, 0.5)
        np.testing.assert_array_equal(out.details[0].data[:2], np.zeros((2, 1)))
        np.testing.assert_array_equal(out.details[0].data[2:], g[2:])

    def test_fraction_bounds(self):
        stack = wv.dwt_full(Tensor(np.ones((8, 1))), wv.FilterBank.haar(), 1)
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ParameterError):
                wv.select_details(stack, bad)

    def test_approximation_untouched(self):
        stack = wv.dwt_full(Tensor(np.random.default_rng(9).normal(size=(16, 2))),
                            wv.FilterBank.haar(), 2)
        out = wv.select_details(stack, 0.25)
        assert out.approximation is stack.approximation

    def test_denoising_improves_trend_correlation(self):
        # dropping early/noisy details must not damage the recent trend; with a
        # noisy slow signal, the reconstruction from kept-recent details tracks
        # the clean signal at the trailing end at least as well
        rng = np.random.default_rng(10)
        t = np.arange(128)
        clean = np.sin(2 * np.pi * t / 64.0)
        noisy = clean + rng.normal(0, 1.0, size=128)
        bank = wv.FilterBank.haar()
        stack = wv.dwt_full(Tensor(noisy.reshape(-1, 1)), bank, 2)
        kept = wv.select_details(stack, 0.5)
        # zero-filled details act as hard denoising on the early half
        rec = wv.idwt_full(
            wv.WaveletStack(approximation=kept.approximation,
                            details=[Tensor(g.data) for g in kept.details],
                            levels=2, original_length=128), bank)
        c_denoised = np.corrcoef(rec.data[:64, 0], clean[:64])[0, 1]
        c_raw = np.corrcoef(noisy[:64], clean[:64])[0, 1]
        assert c_denoised > c_raw


class TestWaveletStack:
    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            wv.WaveletStack(approximation=Tensor(np.zeros((3, 1))),
                            details=[Tensor(np.zeros((4, 1)))],
                            levels=1, original_length=8)

    def test_analysis_matrix_is_orthonormal(self):
        a = wv.analysis_matrix(32, 3)
        np.testing.assert_allclose(a @ a.T, np.eye(32), atol=1e-12)

    def test_coefficient_supports_cover_inputs(self):
        supports = wv.coefficient_supports(16, 2)
        assert len(supports) == 16
        level1 = supports[:8]
        assert level1[0] == (0, 1) and level1[-1] == (14, 15)
        with pytest.raises(ParameterError):
            wv.coefficient_supports(12, 2)
