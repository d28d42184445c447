import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mclp_dereverb.stft import MultichannelSpectrogram, StftConfig, analyze, synthesize

CFG = StftConfig()


def interior_rel_rms(x, y, block=CFG.block_size):
    sl = slice(block, x.shape[-1] - block)
    return np.sqrt(np.mean((x[..., sl] - y[..., sl]) ** 2)) / np.sqrt(np.mean(x[..., sl] ** 2))


def direct_dft(frame, k):
    n = np.arange(len(frame))
    return np.sum(frame * np.exp(-2j * np.pi * k * n / len(frame)))


class TestConfig:
    def test_bins(self):
        assert CFG.n_bins == 257

    @pytest.mark.parametrize("block, hop", [(512, 512), (512, 100), (512, 0)])
    def test_invalid(self, block, hop):
        with pytest.raises(ValueError):
            StftConfig(block_size=block, hop=hop)


class TestAnalyze:
    def test_zeros(self):
        spec = analyze(np.zeros(1024))
        assert spec.frame_count == 5
        assert spec.channel_count == 1
        assert np.all(spec.data == 0)

    def test_impulse_is_flat(self):
        x = np.zeros(1024)
        x[0] = 1.0
        spec = analyze(x)
        np.testing.assert_allclose(np.abs(spec.data[0, :, 0]), CFG.analysis_window()[0], atol=1e-15)

    def test_impulse_inside_frame_is_flat(self):
        x = np.zeros(1024)
        x[100] = 1.0
        spec = analyze(x)
        np.testing.assert_allclose(np.abs(spec.data[0, :, 0]), CFG.analysis_window()[100], rtol=1e-12)

    def test_sine_energy_concentration(self):
        fs = CFG.sample_rate
        x = np.sin(2 * np.pi * 1000 * np.arange(fs) / fs)
        spec = analyze(x)
        win = CFG.analysis_window()
        for n in (0, 17, spec.frame_count - 1):
            frame = x[n * CFG.hop : n * CFG.hop + CFG.block_size] * win
            # oracle: evaluate the DFT sum directly
            oracle = np.array([direct_dft(frame, k) for k in range(CFG.n_bins)])
            np.testing.assert_allclose(spec.data[n, :, 0], oracle, atol=1e-9)
            energy = np.abs(oracle) ** 2
            assert energy[30:35].sum() / energy.sum() >= 0.99

    def test_real_input_edge_bins_are_real(self, rng):
        spec = analyze(rng.standard_normal((2, 4000)))
        peak = np.abs(spec.data).max()
        assert np.abs(spec.data[:, 0, :].imag).max() <= 1e-9 * peak
        assert np.abs(spec.data[:, -1, :].imag).max() <= 1e-9 * peak

    def test_frame_covers_expected_samples(self, rng):
        x = rng.standard_normal(3000)
        spec = analyze(x)
        n = 7
        frame = x[n * 128 : n * 128 + 512] * CFG.analysis_window()
        np.testing.assert_allclose(spec.data[n, :, 0], np.fft.rfft(frame), atol=1e-12)

    def test_trailing_partial_frame_padded(self, rng):
        spec = analyze(rng.standard_normal(1100))
        assert spec.frame_count == 6

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            analyze([np.zeros(1024), np.zeros(1000)])

    @pytest.mark.parametrize("signal", [[], np.zeros(0), np.zeros(100)])
    def test_too_short(self, signal):
        with pytest.raises(ValueError):
            analyze(signal)


class TestSynthesize:
    def test_zeros(self):
        out = synthesize(MultichannelSpectrogram(np.zeros((10, 257, 2), complex)))
        assert out.shape == (2, 9 * 128 + 512)
        assert np.all(out == 0)

    def test_round_trip_noise(self, rng):
        x = rng.uniform(-1, 1, 2 * CFG.sample_rate)
        y = synthesize(analyze(x))[0]
        assert y.shape == x.shape
        assert interior_rel_rms(x, y) <= 1e-10

    def test_round_trip_three_channels(self, rng):
        x = rng.standard_normal((3, 20000)) * np.array([[1.0], [1e-3], [50.0]])
        y = synthesize(analyze(x))
        for m in range(3):
            assert interior_rel_rms(x[m], y[m]) <= 1e-10

    def test_bin_mismatch(self):
        with pytest.raises(ValueError):
            synthesize(np.zeros((4, 100), complex))

    def test_single_channel_array(self, rng):
        x = rng.standard_normal(5000)
        y = synthesize(analyze(x).data[:, :, 0], length=5000)
        assert y.shape == (5000,)
        assert interior_rel_rms(x, y) <= 1e-10


class TestInvariants:
    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(1100, 6000), seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
    def test_perfect_reconstruction(self, n, seed, scale):
        x = scale * np.random.default_rng(seed).standard_normal(n)
        assert interior_rel_rms(x, synthesize(analyze(x))[0]) <= 1e-10

    def test_parseval(self, rng):
        x = rng.standard_normal(4000)
        spec = analyze(x).data[:, :, 0]
        win = CFG.analysis_window()
        for n in range(spec.shape[0] - 1):
            seg = x[n * 128 : n * 128 + 512] * win
            X = spec[n]
            spectral = (abs(X[0]) ** 2 + 2 * np.sum(abs(X[1:-1]) ** 2) + abs(X[-1]) ** 2) / 512
            assert spectral == pytest.approx(np.sum(seg**2), rel=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 2**31))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((2, 2048))
        lhs = analyze(a * x + b * y).data
        rhs = a * analyze(x).data + b * analyze(y).data
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300)
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale
