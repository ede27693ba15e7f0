import numpy as np
import pytest

from nas_asr.audio import (
    AudioError,
    FeatureMatrix,
    FrontendConfig,
    Waveform,
    add_gaussian_noise,
    extract_mfcc,
    frame_count,
    load_features,
    mel_filterbank,
    mel_to_hz,
    read_wav,
    save_features,
    time_warp,
    write_wav,
)


def tone(freq, duration_s=1.0, rate=16000, amp=0.5):
    t = np.arange(int(duration_s * rate)) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


class TestWaveform:
    def test_rejects_empty(self):
        with pytest.raises(AudioError):
            Waveform(np.array([]), 16000)

    def test_rejects_nan(self):
        with pytest.raises(AudioError):
            Waveform(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(AudioError):
            Waveform(np.zeros(10), 0)


class TestExtractMfcc:
    def test_frame_count_16k_defaults(self):
        # floor((16000 - 320) / 160) + 1 = 99
        wav = tone(440, duration_s=1.0, rate=16000)
        feat = extract_mfcc(wav)
        assert feat.frames.shape == (99, 16)

    def test_frame_count_formula_random_lengths(self):
        rng = np.random.default_rng(0)
        cfg = FrontendConfig()
        for _ in range(50):
            n = int(rng.integers(320, 50000))
            wav = Waveform(rng.uniform(-0.5, 0.5, n), 16000)
            feat = extract_mfcc(wav, cfg)
            assert feat.n_frames == (n - 320) // 160 + 1

    def test_too_short_rejected(self):
        with pytest.raises(AudioError, match="too short"):
            extract_mfcc(Waveform(np.zeros(100), 16000))

    def test_all_zero_waveform_gives_zero_features(self):
        feat = extract_mfcc(Waveform(np.zeros(16000), 16000))
        assert np.allclose(feat.frames, 0.0)

    def test_sine_at_filter_center_peaks_that_filter(self):
        rate = 16000
        cfg = FrontendConfig()
        n_fft = 512
        fb = mel_filterbank(cfg.n_filters, n_fft, rate)
        # Center frequency of filter k is the (k+1)-th mel breakpoint.
        mel_points = np.linspace(0.0, 2595.0 * np.log10(1 + rate / 2 / 700.0), cfg.n_filters + 2)
        for k in (5, 12, 20):
            center_hz = float(mel_to_hz(mel_points[k + 1]))
            wav = tone(center_hz, duration_s=0.5, rate=rate)
            win = cfg.window_samples(rate)
            frame = wav.samples[:win] * np.hamming(win)
            power = np.abs(np.fft.rfft(frame, n=n_fft)) ** 2 / n_fft
            energies = fb @ power
            assert int(np.argmax(energies)) == k

    def test_deterministic(self):
        wav = tone(300)
        a = extract_mfcc(wav)
        b = extract_mfcc(wav)
        assert np.array_equal(a.frames, b.frames)

    def test_normalization_moments(self):
        rng = np.random.default_rng(7)
        wav = Waveform(rng.uniform(-0.9, 0.9, 8000), 16000)
        feat = extract_mfcc(wav)
        assert np.all(np.abs(feat.frames.mean(axis=0)) < 1e-6)
        assert np.all(np.abs(feat.frames.var(axis=0) - 1.0) < 1e-6)


class TestGaussianNoise:
    def test_measured_snr_matches(self):
        wav = tone(500, duration_s=0.5)
        noisy = add_gaussian_noise(wav, snr_db=20.0, seed=3)
        noise = noisy.samples - wav.samples
        snr = 10 * np.log10(np.mean(wav.samples**2) / np.mean(noise**2))
        assert abs(snr - 20.0) < 0.5

    def test_huge_snr_is_nearly_identity(self):
        wav = tone(500, duration_s=0.5)
        noisy = add_gaussian_noise(wav, snr_db=120.0, seed=3)
        assert np.max(np.abs(noisy.samples - wav.samples)) < 1e-5

    def test_deterministic(self):
        wav = tone(500)
        a = add_gaussian_noise(wav, 10.0, seed=42)
        b = add_gaussian_noise(wav, 10.0, seed=42)
        assert np.array_equal(a.samples, b.samples)

    def test_zero_signal_rejected(self):
        with pytest.raises(AudioError, match="SNR"):
            add_gaussian_noise(Waveform(np.zeros(100), 8000), 20.0, seed=0)

    def test_snr_sweep_within_half_db(self):
        rng = np.random.default_rng(11)
        wav = Waveform(rng.uniform(-0.4, 0.4, 1600), 16000)
        for snr_db in (0.0, 10.0, 30.0):
            noisy = add_gaussian_noise(wav, snr_db, seed=5)
            noise = noisy.samples - wav.samples
            got = 10 * np.log10(np.mean(wav.samples**2) / np.mean(noise**2))
            assert abs(got - snr_db) < 0.5


class TestTimeWarp:
    def _feat(self, t=40, f=16, seed=0):
        rng = np.random.default_rng(seed)
        return FeatureMatrix(rng.standard_normal((t, f)), 10.0)

    def test_zero_warp_is_identity(self):
        feat = self._feat()
        out = time_warp(feat, 0, seed=9)
        assert np.array_equal(out.frames, feat.frames)

    def test_shape_preserved_and_finite(self):
        feat = self._feat()
        out = time_warp(feat, 5, seed=1)
        assert out.frames.shape == feat.frames.shape
        assert np.all(np.isfinite(out.frames))

    def test_deterministic(self):
        feat = self._feat()
        a = time_warp(feat, 4, seed=77)
        b = time_warp(feat, 4, seed=77)
        assert np.array_equal(a.frames, b.frames)

    def test_excessive_warp_rejected(self):
        feat = self._feat(t=10)
        with pytest.raises(AudioError):
            time_warp(feat, 5, seed=0)

    def test_actually_moves_frames(self):
        feat = self._feat()
        out = time_warp(feat, 8, seed=2)
        assert not np.array_equal(out.frames, feat.frames)


class TestWavIo:
    def test_round_trip(self, tmp_path):
        wav = tone(440, duration_s=0.1)
        p = tmp_path / "a.wav"
        write_wav(p, wav)
        back = read_wav(p)
        assert back.sample_rate == wav.sample_rate
        assert np.max(np.abs(back.samples - wav.samples)) < 1e-4

    def test_rejects_stereo(self, tmp_path):
        import wave as wave_mod

        p = tmp_path / "stereo.wav"
        with wave_mod.open(str(p), "wb") as w:
            w.setnchannels(2)
            w.setsampwidth(2)
            w.setframerate(8000)
            w.writeframes(b"\x00\x00" * 200)
        with pytest.raises(AudioError, match="mono"):
            read_wav(p)

    def test_rejects_garbage(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"not a wav file at all")
        with pytest.raises(AudioError):
            read_wav(p)


class TestFeatureCache:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        feat = FeatureMatrix(rng.standard_normal((33, 16)), 10.0)
        p = tmp_path / "x.nasf"
        save_features(p, feat)
        back = load_features(p)
        assert back.frames.shape == feat.frames.shape
        assert np.max(np.abs(back.frames - feat.frames)) < 1e-6

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.nasf"
        p.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(AudioError, match="magic"):
            load_features(p)

    def test_truncated(self, tmp_path):
        feat = FeatureMatrix(np.zeros((4, 4)), 10.0)
        p = tmp_path / "x.nasf"
        save_features(p, feat)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(AudioError, match="truncated"):
            load_features(p)
