import numpy as np
import pytest
from scipy.signal import get_window

from doapose.audio_io import SampleRateMismatch, read_wav, write_wav
from doapose.dsp import (
    MultiChannelClip,
    Spectrogram,
    StftConfig,
    channel_diff_spectrogram,
    istft,
    l1_spec_distance,
    mono_downmix,
    stft,
)
from doapose.errors import ClipTooShort, NonInvertibleConfig, NotBinaural, ShapeMismatch

PLAIN = StftConfig(n_fft=1024, hop=256, min_frames=None)


def noise_clip(rng, c=2, n=48000, sr=48000):
    return MultiChannelClip(0.1 * rng.standard_normal((c, n)), sr)


class TestStft:
    def test_default_shape_is_512_by_96(self, rng):
        spec = stft(noise_clip(rng, 1))
        assert spec.shape == (1, 512, 96)
        assert spec.config.hop == 500
        assert spec.pad_samples == 95 * 500 + 1024 - 48000

    def test_frame_count_without_padding(self, rng):
        cfg = StftConfig(n_fft=1024, hop=500, min_frames=None)
        assert stft(noise_clip(rng, 1), cfg).n_frames == (48000 - 1024) // 500 + 1 == 94

    def test_sine_peak_bin(self):
        sr, n_fft = 48000, 1024
        t = np.arange(sr) / sr
        spec = stft(MultiChannelClip(0.5 * np.sin(2 * np.pi * 1000 * t), sr))
        # analytic: nearest FFT bin to 1000 Hz at 46.875 Hz spacing
        expected_fft_bin = round(1000 / (sr / n_fft))
        assert expected_fft_bin == 21
        peaks = np.argmax(spec.magnitude[0], axis=0)
        assert np.all(spec.freqs[peaks] == expected_fft_bin * sr / n_fft)

    def test_zero_clip(self):
        spec = stft(MultiChannelClip(np.zeros((2, 4096))), PLAIN)
        assert not np.any(spec.bins)

    def test_parseval_window_compensated(self, rng):
        clip = noise_clip(rng, 1, 16384)
        spec = stft(clip, PLAIN)
        # time-domain oracle: energy of every windowed frame
        w = get_window("hann", 1024)
        x = clip.samples[0]
        frames = [x[i * 256 : i * 256 + 1024] * w for i in range(spec.n_frames)]
        energy_time = sum(np.sum(f**2) for f in frames)
        # one-sided spectrum: interior bins count twice, Nyquist once
        b = np.abs(spec.bins[0]) ** 2
        energy_freq = (2 * b[:-1].sum() + b[-1].sum()) / 1024
        assert energy_freq == pytest.approx(energy_time, rel=0.01)
        energy_exact = energy_freq + np.sum(spec.dc**2) / 1024
        assert energy_exact == pytest.approx(energy_time, rel=1e-10)

    def test_linearity(self, rng):
        x, y = noise_clip(rng), noise_clip(rng)
        a, b = 0.7, -1.3
        lhs = stft(MultiChannelClip(a * x.samples + b * y.samples), PLAIN).bins
        rhs = a * stft(x, PLAIN).bins + b * stft(y, PLAIN).bins
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_too_short(self):
        with pytest.raises(ClipTooShort):
            stft(MultiChannelClip(np.zeros(1000)), PLAIN)

    @pytest.mark.parametrize("kwargs", [{"n_fft": 1000}, {"hop": 0}, {"hop": 2048}, {"window": "hamming"}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            StftConfig(**kwargs)


class TestIstft:
    @pytest.mark.parametrize("cfg", [PLAIN, StftConfig(), StftConfig(n_fft=512, hop=128, min_frames=None)])
    def test_round_trip_interior(self, rng, cfg):
        clip = noise_clip(rng, 3, 20000)
        back = istft(stft(clip, cfg))
        assert back.samples.shape == clip.samples.shape
        sl = slice(cfg.n_fft, clip.n_samples - cfg.n_fft)
        rms = np.sqrt(np.mean((back.samples[:, sl] - clip.samples[:, sl]) ** 2))
        assert rms < 1e-6

    def test_zero(self):
        cfg = PLAIN
        spec = Spectrogram(np.zeros((2, 512, 10), complex), cfg, 48000)
        assert not np.any(istft(spec).samples)

    def test_single_frame(self, rng):
        cfg = StftConfig(n_fft=1024, hop=256, min_frames=None)
        x = rng.standard_normal(1024)
        spec = stft(MultiChannelClip(x), cfg)
        assert spec.n_frames == 1
        y = istft(spec).samples[0]
        # direct oracle: the overlap-add of one windowed frame is w * (w * x); dividing by w^2 returns x
        w = get_window("hann", 1024)
        ok = w > 1e-3
        np.testing.assert_allclose(y[ok] * w[ok] ** 2, (w * (w * x))[ok], atol=1e-12)

    def test_non_invertible(self, rng):
        spec = stft(noise_clip(rng, 1, 8192), StftConfig(n_fft=1024, hop=768, min_frames=None))
        with pytest.raises(NonInvertibleConfig):
            istft(spec)


class TestDownmix:
    def test_identical_channels(self, rng):
        x = rng.standard_normal(100)
        np.testing.assert_allclose(mono_downmix(MultiChannelClip(np.stack([x, x, x]))).samples[0], x, rtol=1e-15, atol=1e-15)

    def test_cancellation(self, rng):
        x = rng.standard_normal(100)
        assert not np.any(mono_downmix(MultiChannelClip(np.stack([x, -x]))).samples)

    def test_mean_oracle(self, rng):
        x = rng.standard_normal((4, 500))
        out = mono_downmix(MultiChannelClip(x))
        assert out.n_channels == 1
        expected = [(x[0, i] + x[1, i] + x[2, i] + x[3, i]) / 4 for i in range(500)]
        np.testing.assert_allclose(out.samples[0], expected, atol=1e-15)


class TestChannelDiff:
    def test_identical_channels_give_zero(self, rng):
        x = rng.standard_normal(48000)
        spec = channel_diff_spectrogram(MultiChannelClip(np.stack([x, x])))
        assert spec.n_channels == 1
        assert not np.any(spec.bins)

    def test_silent_right(self, rng):
        x = rng.standard_normal(48000)
        a = channel_diff_spectrogram(MultiChannelClip(np.stack([x, np.zeros_like(x)])))
        np.testing.assert_array_equal(a.bins, stft(MultiChannelClip(x)).bins)

    def test_compositional_oracle(self, rng):
        clip = noise_clip(rng)
        explicit = stft(MultiChannelClip(clip.samples[0] - clip.samples[1]))
        np.testing.assert_array_equal(channel_diff_spectrogram(clip).bins, explicit.bins)

    def test_swap_antisymmetry_bit_exact(self, rng):
        clip = noise_clip(rng)
        a = channel_diff_spectrogram(clip)
        b = channel_diff_spectrogram(MultiChannelClip(clip.samples[::-1]))
        np.testing.assert_array_equal(b.bins, -a.bins)

    def test_not_binaural(self, rng):
        with pytest.raises(NotBinaural):
            channel_diff_spectrogram(noise_clip(rng, 3))


class TestL1:
    def test_self(self, rng):
        s = stft(noise_clip(rng))
        assert l1_spec_distance(s, s) == 0.0

    def test_constant_offset(self, rng):
        mag = rng.uniform(1, 2, (1, 512, 4))
        phase = rng.uniform(-np.pi, np.pi, mag.shape)
        a = Spectrogram(mag * np.exp(1j * phase), PLAIN, 48000)
        b = Spectrogram((mag + 0.5) * np.exp(1j * rng.uniform(-np.pi, np.pi, mag.shape)), PLAIN, 48000)
        assert l1_spec_distance(a, b) == pytest.approx(0.5)

    def test_brute_force(self, rng):
        a, b = stft(noise_clip(rng), PLAIN), stft(noise_clip(rng), PLAIN)
        total, count = 0.0, 0
        for c in range(a.shape[0]):
            for f in range(a.shape[1]):
                for w in range(a.shape[2]):
                    total += abs(abs(a.bins[c, f, w]) - abs(b.bins[c, f, w]))
                    count += 1
        assert l1_spec_distance(a, b) == pytest.approx(total / count, rel=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            l1_spec_distance(stft(noise_clip(rng, 1)), stft(noise_clip(rng, 2)))


class TestClip:
    def test_invalid(self):
        with pytest.raises(ValueError):
            MultiChannelClip(np.zeros((2, 10)), 0)
        with pytest.raises(ValueError):
            MultiChannelClip(np.array([[np.nan]]))

    def test_immutable(self, rng):
        clip = noise_clip(rng)
        with pytest.raises(ValueError):
            clip.samples[0, 0] = 1.0


class TestWav:
    def test_float32_round_trip(self, tmp_path, rng):
        x = rng.uniform(-1, 1, (6, 1000)).astype(np.float32).astype(float)
        write_wav(tmp_path / "a.wav", MultiChannelClip(x, 44100))
        back = read_wav(tmp_path / "a.wav", 44100)
        assert back.sample_rate == 44100
        np.testing.assert_array_equal(back.samples, x)

    def test_int16_round_trip(self, tmp_path, rng):
        x = np.round(rng.uniform(-1, 0.99, (2, 1000)) * 32768) / 32768
        write_wav(tmp_path / "b.wav", MultiChannelClip(x), fmt="int16")
        np.testing.assert_array_equal(read_wav(tmp_path / "b.wav").samples, x)

    def test_int16_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            write_wav(tmp_path / "c.wav", MultiChannelClip(np.full((1, 10), 1.5)), fmt="int16")

    def test_mono(self, tmp_path):
        write_wav(tmp_path / "m.wav", MultiChannelClip(np.zeros(100)))
        assert read_wav(tmp_path / "m.wav").n_channels == 1

    def test_rate_mismatch_is_error(self, tmp_path):
        write_wav(tmp_path / "d.wav", MultiChannelClip(np.zeros((2, 100)), 16000))
        with pytest.raises(SampleRateMismatch):
            read_wav(tmp_path / "d.wav", 48000)

    def test_sixteen_channel_limit(self, tmp_path):
        write_wav(tmp_path / "e.wav", MultiChannelClip(np.zeros((16, 10))))
        with pytest.raises(ValueError):
            write_wav(tmp_path / "f.wav", MultiChannelClip(np.zeros((17, 10))))
