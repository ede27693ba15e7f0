"""Acoustic front end: WAV ingestion, MFCC extraction, and waveform/feature
augmentation (additive Gaussian noise, time warping)."""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

FEATURE_MAGIC = b"NASF"
FEATURE_VERSION = 1


class AudioError(ValueError):
    """Raised for unusable audio inputs or malformed feature files."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio: normalized float samples in [-1, 1] plus sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise AudioError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(s)):
            raise AudioError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FrontendConfig:
    """MFCC analysis configuration.

    Defaults: 20 ms window, 10 ms hop, 32 mel filters, 16 cepstral
    coefficients. The log floor keeps silent frames out of log(0).
    """

    window_ms: float = 20.0
    hop_ms: float = 10.0
    n_filters: int = 32
    n_ceps: int = 16
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.hop_ms <= 0 or self.window_ms <= 0:
            raise AudioError("window_ms and hop_ms must be positive")
        if self.hop_ms > self.window_ms:
            raise AudioError(
                f"hop_ms ({self.hop_ms}) must not exceed window_ms ({self.window_ms})"
            )
        if not (0 < self.n_ceps <= self.n_filters):
            raise AudioError(
                f"need 0 < n_ceps <= n_filters, got n_ceps={self.n_ceps} "
                f"n_filters={self.n_filters}"
            )
        if self.log_floor <= 0:
            raise AudioError("log_floor must be positive")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))


@dataclass(frozen=True)
class FeatureMatrix:
    """T x F matrix of per-frame features, time along rows."""

    frames: np.ndarray
    frame_hop_ms: float

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise AudioError("feature matrix must be 2-D with at least one frame")
        if not np.all(np.isfinite(f)):
            raise AudioError("feature matrix contains non-finite values")
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_coeffs(self) -> int:
        return self.frames.shape[1]


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file. Only PCM16 mono is accepted."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise AudioError(f"{path}: compressed WAV ({w.getcomptype()}) not supported")
            if w.getnchannels() != 1:
                raise AudioError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise AudioError(
                    f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit"
                )
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as e:
        raise AudioError(f"{path}: not a readable WAV file ({e})") from e
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise AudioError(f"{path}: empty audio stream")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, wav: Waveform):
    """Write a Waveform as PCM16 mono."""
    pcm = np.clip(np.round(wav.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(wav.sample_rate)
        w.writeframes(pcm.tobytes())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank spanning 0 Hz to Nyquist.

    Returns an (n_filters, n_fft//2 + 1) weight matrix. Filter centers are
    equally spaced on the mel scale; triangles are built on the continuous
    frequency grid of the FFT bins so narrow filters never collapse to zero.
    """
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    fb = np.zeros((n_filters, n_fft // 2 + 1))
    for k in range(n_filters):
        left, center, right = hz_points[k], hz_points[k + 1], hz_points[k + 2]
        up = (bin_freqs - left) / max(center - left, 1e-12)
        down = (right - bin_freqs) / max(right - center, 1e-12)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
    return fb


def frame_count(n_samples: int, window: int, hop: int) -> int:
    """Number of full analysis windows: floor((len - win) / hop) + 1."""
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def extract_mfcc(wav: Waveform, cfg: FrontendConfig = FrontendConfig()) -> FeatureMatrix:
    """Convert a waveform into mean/variance-normalized MFCC features.

    Pipeline per frame: Hamming window -> power spectrum -> mel filterbank
    energies -> log (floored) -> DCT-II (orthonormal), truncated to
    cfg.n_ceps coefficients. Each coefficient is then normalized to zero
    mean and unit variance over the utterance.
    """
    win = cfg.window_samples(wav.sample_rate)
    hop = cfg.hop_samples(wav.sample_rate)
    n = len(wav)
    n_frames = frame_count(n, win, hop)
    if n_frames < 1:
        raise AudioError(
            f"utterance too short: {n} samples < one {win}-sample window"
        )

    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = wav.samples[idx] * np.hamming(win)[None, :]

    n_fft = _next_pow2(win)
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2 / n_fft
    fb = mel_filterbank(cfg.n_filters, n_fft, wav.sample_rate)
    energies = power @ fb.T
    log_e = np.log(np.maximum(energies, cfg.log_floor))
    ceps = dct(log_e, type=2, axis=1, norm="ortho")[:, : cfg.n_ceps]

    mean = ceps.mean(axis=0)
    std = ceps.std(axis=0)
    # Constant coefficients (e.g. silence) normalize to zero instead of 0/0.
    normalized = np.where(std > 1e-12, (ceps - mean) / np.where(std > 1e-12, std, 1.0), 0.0)
    return FeatureMatrix(normalized, cfg.hop_ms)


def add_gaussian_noise(wav: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add zero-mean Gaussian noise scaled to a target signal-to-noise ratio.

    The drawn noise is rescaled by its own sample power, so the measured SNR
    equals snr_db exactly up to [-1, 1] clipping of the mixture.
    """
    if not np.isfinite(snr_db):
        raise AudioError("snr_db must be finite")
    signal_power = float(np.mean(wav.samples**2))
    if signal_power == 0.0:
        raise AudioError("all-zero waveform: SNR is undefined")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(wav))
    target_power = signal_power / (10.0 ** (snr_db / 10.0))
    noise *= np.sqrt(target_power / np.mean(noise**2))
    mixed = np.clip(wav.samples + noise, -1.0, 1.0)
    return Waveform(mixed, wav.sample_rate)


def time_warp(feat: FeatureMatrix, warp_param: int, seed: int) -> FeatureMatrix:
    """Warp the time axis around one random anchor frame.

    An interior anchor is displaced by a uniform offset in
    [-warp_param, +warp_param] and the frame sequence is re-sampled with a
    piecewise-linear time map. Frame and coefficient counts are unchanged;
    warp_param = 0 returns the input untouched.
    """
    if warp_param < 0:
        raise AudioError("warp_param must be non-negative")
    t = feat.n_frames
    if warp_param == 0:
        return FeatureMatrix(feat.frames.copy(), feat.frame_hop_ms)
    if warp_param >= t / 2:
        raise AudioError(
            f"warp_param {warp_param} too large for {t} frames (needs warp_param < T/2)"
        )

    rng = np.random.default_rng(seed)
    anchor = int(rng.integers(1, t - 1))
    lo = max(-float(warp_param), -anchor + 1e-6)
    hi = min(float(warp_param), (t - 1) - anchor - 1e-6)
    offset = rng.uniform(lo, hi)

    # Output position anchor+offset reads from input position anchor; the
    # map is linear on each side and monotonic by construction.
    out_pos = np.arange(t, dtype=np.float64)
    src_pos = np.interp(out_pos, [0.0, anchor + offset, t - 1.0], [0.0, anchor, t - 1.0])
    low = np.floor(src_pos).astype(int)
    high = np.minimum(low + 1, t - 1)
    frac = (src_pos - low)[:, None]
    warped = (1.0 - frac) * feat.frames[low] + frac * feat.frames[high]
    return FeatureMatrix(warped, feat.frame_hop_ms)


def save_features(path, feat: FeatureMatrix):
    """Write the binary feature cache: magic, version, T, F, then float32 rows."""
    t, f = feat.frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<B", FEATURE_VERSION))
        fh.write(struct.pack("<II", t, f))
        fh.write(feat.frames.astype("<f4").tobytes())


def load_features(path, frame_hop_ms: float = 10.0) -> FeatureMatrix:
    """Read a feature cache file written by save_features."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise AudioError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != FEATURE_VERSION:
            raise AudioError(f"{path}: unsupported feature-cache version {version}")
        t, f = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(4 * t * f), dtype="<f4")
        if data.size != t * f:
            raise AudioError(f"{path}: truncated feature data")
    return FeatureMatrix(data.reshape(t, f).astype(np.float64), frame_hop_ms)
