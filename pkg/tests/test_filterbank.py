"""Filter-bank geometry, application, and file-format tests."""

import math

import numpy as np
import pytest

from asdkit.dsp import FrameParams, PowerSpectrogram
from asdkit.filterbank import (BankConstructionError, DegenerateFilterError,
                               DimensionError, FeatureFormatError,
                               LogMelSpectrogram, apply_log_fbank, build_bank,
                               build_gammatone_bank, build_triangular_bank,
                               erb_bandwidth, erb_rate, mel_edges, read_feature,
                               uniform_edges, write_feature)


# scalar oracles ------------------------------------------------------------

def mel_oracle(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def mel_inv_oracle(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def triangle_weight_oracle(f, left, center, right):
    """Piecewise-linear interpolation, open support (left, right)."""
    if f <= left or f >= right:
        return 0.0
    if f <= center:
        return (f - left) / (center - left)
    return (right - f) / (right - center)


def spectrogram(values, sr=16000):
    # params are provenance only; apply_log_fbank checks the values shape
    values = np.asarray(values, dtype=np.float64)
    params = FrameParams(frame_len=64, hop=64, n_fft=64,
                         pre_emphasis=0.0, window="rectangular")
    return PowerSpectrogram(values=values, params=params, sample_rate=sr)


class TestEdges:
    def test_mel_midpoint_matches_inverse_oracle(self):
        edges = mel_edges(1, 0.0, 8000.0)
        expected = mel_inv_oracle((mel_oracle(0.0) + mel_oracle(8000.0)) / 2.0)
        assert edges[0] == 0.0 and edges[2] == 8000.0
        assert edges[1] == pytest.approx(expected, rel=1e-12)
        assert edges[1] == pytest.approx(1767.7925358506134, rel=1e-12)

    def test_mel_spacing_constant_in_mel(self):
        edges = mel_edges(128, 0.0, 8000.0)
        mels = np.array([mel_oracle(f) for f in edges])
        diffs = np.diff(mels)
        assert np.max(np.abs(diffs - diffs[0])) <= 1e-9 * diffs[0]

    def test_mel_hz_spacing_strictly_increasing(self):
        edges = mel_edges(40, 0.0, 8000.0)
        hz_diffs = np.diff(edges)
        assert np.all(np.diff(hz_diffs) > 0)

    def test_uniform_trivial(self):
        np.testing.assert_allclose(uniform_edges(3, 0.0, 8000.0),
                                   [0.0, 2000.0, 4000.0, 6000.0, 8000.0])

    def test_uniform_spacing_closed_form(self):
        edges = uniform_edges(128, 0.0, 8000.0)
        diffs = np.diff(edges)
        assert np.max(np.abs(diffs - diffs[0])) <= 1e-9 * diffs[0]
        assert diffs[0] == pytest.approx(8000.0 / 129.0, rel=1e-12)

    @pytest.mark.parametrize("builder", [mel_edges, uniform_edges])
    def test_bad_ranges(self, builder):
        with pytest.raises(BankConstructionError):
            builder(0, 0.0, 8000.0)
        with pytest.raises(BankConstructionError):
            builder(4, 4000.0, 4000.0)
        with pytest.raises(BankConstructionError):
            builder(4, -1.0, 8000.0)


class TestTriangularBank:
    def test_peak_one_at_center_bin(self):
        # uniform edges at multiples of the bin width: centers land on bins
        bank = build_triangular_bank(uniform_edges(3, 0.0, 8000.0), 512, 16000,
                                     kind="mfb")
        bin_freqs = np.arange(257) * 16000 / 512
        for j, center in enumerate(bank.center_freqs):
            k = int(np.where(bin_freqs == center)[0][0])
            assert bank.weights[j, k] == 1.0

    def test_zero_outside_support(self):
        edges = uniform_edges(3, 0.0, 8000.0)
        bank = build_triangular_bank(edges, 512, 16000, kind="mfb")
        bin_freqs = np.arange(257) * 16000 / 512
        for j in range(3):
            outside = (bin_freqs <= edges[j]) | (bin_freqs >= edges[j + 2])
            assert np.all(bank.weights[j][outside] == 0.0)

    def test_rows_match_interpolation_oracle(self):
        rng = np.random.default_rng(9)
        edges = np.sort(rng.uniform(0.0, 8000.0, size=8))
        edges[0], edges[-1] = 0.0, 8000.0
        bank = build_triangular_bank(edges, 1024, 16000, kind="ofb")
        bin_freqs = np.arange(513) * 16000 / 1024
        for j in range(6):
            expected = [triangle_weight_oracle(f, edges[j], edges[j + 1], edges[j + 2])
                        for f in bin_freqs]
            np.testing.assert_allclose(bank.weights[j], expected, atol=1e-12)

    def test_at_most_two_overlap_and_sum_bounded(self):
        bank = build_bank("mfb", 16, 0.0, 8000.0, 1024, 16000)
        bin_freqs = np.arange(513) * 16000 / 1024
        inside = (bin_freqs > 0.0) & (bin_freqs < 8000.0)
        nonzero = (bank.weights > 0.0).sum(axis=0)
        assert np.all(nonzero[inside] <= 2)
        sums = bank.weights.sum(axis=0)
        assert np.all(sums[inside] > 0.0)
        assert np.all(sums <= 2.0 + 1e-12)

    def test_non_increasing_edges_rejected(self):
        with pytest.raises(BankConstructionError):
            build_triangular_bank([0.0, 100.0, 100.0, 300.0], 512, 16000)

    def test_above_nyquist_rejected(self):
        with pytest.raises(BankConstructionError):
            build_triangular_bank([0.0, 4000.0, 9000.0], 512, 16000)

    def test_degenerate_filter_named(self):
        # support (100, 102) Hz contains no bin on a 31.25 Hz grid
        with pytest.raises(DegenerateFilterError, match="filter 0"):
            build_triangular_bank([100.0, 101.0, 102.0], 512, 16000)

    def test_area_normalization_flag(self):
        edges = uniform_edges(4, 0.0, 8000.0)
        plain = build_triangular_bank(edges, 1024, 16000, kind="mfb")
        normed = build_triangular_bank(edges, 1024, 16000, kind="mfb",
                                       area_normalize=True)
        for j in range(4):
            scale = 2.0 / (edges[j + 2] - edges[j])
            np.testing.assert_allclose(normed.weights[j], plain.weights[j] * scale,
                                       atol=1e-15)

    def test_mfb_centers_arithmetic(self):
        bank = build_bank("mfb", 128, 0.0, 8000.0, 4096, 16000)
        diffs = np.diff(bank.center_freqs)
        assert np.max(np.abs(diffs - diffs[0])) <= 1e-9 * diffs[0]


class TestGammatoneBank:
    def test_rows_peak_normalized(self):
        bank = build_gammatone_bank(32, 50.0, 8000.0, 1024, 16000)
        np.testing.assert_array_equal(bank.weights.max(axis=1), np.ones(32))

    def test_centers_equally_spaced_in_erb_rate(self):
        bank = build_gammatone_bank(32, 50.0, 8000.0, 1024, 16000)
        rates = erb_rate(bank.center_freqs)
        diffs = np.diff(rates)
        assert np.max(np.abs(diffs - diffs[0])) <= 1e-9 * diffs[0]
        assert np.all(np.diff(bank.center_freqs) > 0)

    def test_attenuation_at_three_erb(self):
        # closed-form oracle: power response (1 + (df/b)^2)^-4
        fc = 1000.0
        b = 1.019 * erb_bandwidth(fc)
        ratio = (1.0 + (3.0 * erb_bandwidth(fc) / b) ** 2) ** -4
        assert 10 * math.log10(1.0 / ratio) >= 20.0

        # and the sampled rows respect it on a dense grid
        bank = build_gammatone_bank(16, 100.0, 7000.0, 8192, 16000)
        bin_freqs = np.arange(4097) * 16000 / 8192
        for j, center in enumerate(bank.center_freqs):
            spread = 3.0 * erb_bandwidth(center)
            far = np.abs(bin_freqs - center) >= spread
            assert np.all(bank.weights[j][far] <= 10 ** (-20 / 10))

    def test_range_validation(self):
        with pytest.raises(BankConstructionError):
            build_gammatone_bank(8, 0.0, 9000.0, 512, 16000)


class TestApplyLogFbank:
    def test_zero_spectrogram_hits_floor(self):
        bank = build_bank("mfb", 4, 0.0, 8000.0, 64, 16000)
        out = apply_log_fbank(spectrogram(np.zeros((33, 5))), bank)
        np.testing.assert_allclose(out.values, math.log(1e-10), atol=1e-12)
        assert out.kind == "mfb"
        assert out.enhancement == "none"

    def test_impulse_spectrum_hand_product(self):
        bank = build_bank("mfb", 4, 0.0, 8000.0, 64, 16000)
        spec = np.zeros((33, 1))
        k0, energy = 7, 3.5
        spec[k0, 0] = energy
        out = apply_log_fbank(spectrogram(spec), bank)
        for j in range(4):
            expected = math.log(max(bank.weights[j, k0] * energy, 1e-10))
            assert out.values[j, 0] == pytest.approx(expected, abs=1e-12)

    def test_matches_matmul_oracle(self):
        rng = np.random.default_rng(10)
        spec = rng.uniform(0.0, 5.0, size=(8, 4))
        weights = rng.uniform(0.0, 1.0, size=(3, 8))
        bank = build_bank("mfb", 3, 0.0, 8000.0, 14, 16000)
        bank.weights[:] = weights
        out = apply_log_fbank(spectrogram(spec), bank)
        expected = np.log(np.maximum(weights @ spec, 1e-10))
        np.testing.assert_allclose(out.values, expected, atol=1e-12)

    def test_monotone_in_energy(self):
        rng = np.random.default_rng(11)
        spec = rng.uniform(0.0, 2.0, size=(33, 6))
        bank = build_bank("mfb", 4, 0.0, 8000.0, 64, 16000)
        low = apply_log_fbank(spectrogram(spec), bank)
        high = apply_log_fbank(spectrogram(spec * 3.0), bank)
        assert np.all(high.values >= low.values)

    def test_shape_mismatch(self):
        bank = build_bank("mfb", 4, 0.0, 8000.0, 64, 16000)
        with pytest.raises(DimensionError):
            apply_log_fbank(spectrogram(np.zeros((16, 5))), bank)


class TestFeatureFile:
    def _feature(self):
        rng = np.random.default_rng(12)
        values = rng.standard_normal((6, 9)).astype(np.float32).astype(np.float64)
        return LogMelSpectrogram(values=values, kind="gfb", enhancement="local")

    def test_round_trip(self, tmp_path):
        feature = self._feature()
        path = tmp_path / "f.asdf"
        write_feature(feature, path)
        back = read_feature(path)
        assert back.kind == "gfb"
        assert back.enhancement == "local"
        np.testing.assert_array_equal(back.values, feature.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.asdf"
        write_feature(self._feature(), path)
        data = bytearray(path.read_bytes())
        data[:4] = b"WOOF"
        path.write_bytes(bytes(data))
        with pytest.raises(FeatureFormatError, match="magic"):
            read_feature(path)

    def test_truncated_payload_names_offset(self, tmp_path):
        path = tmp_path / "f.asdf"
        write_feature(self._feature(), path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(FeatureFormatError, match="offset"):
            read_feature(path)

    def test_unknown_kind_code(self, tmp_path):
        path = tmp_path / "f.asdf"
        write_feature(self._feature(), path)
        data = bytearray(path.read_bytes())
        data[6] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(FeatureFormatError, match="kind"):
            read_feature(path)
