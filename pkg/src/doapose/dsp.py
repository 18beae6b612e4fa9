"""STFT / ISTFT, mono downmix and the channel-difference spectrogram."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

from .errors import ClipTooShort, NonInvertibleConfig, NotBinaural, ShapeMismatch

DEFAULT_SAMPLE_RATE = 48000
DEFAULT_CLIP_SAMPLES = 48000


@dataclass(frozen=True, eq=False)
class MultiChannelClip:
    """A ``(C, N)`` block of time-aligned samples.

    Amplitudes are nominally within [-1, 1]; this is not enforced because
    simulated scenes can legitimately exceed it before any gain staging.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError(f"samples must be (C, N) with C >= 1, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """STFT parameters.

    The defaults give a 512 x 96 spectrogram for a one second clip at 48 kHz:
    1024-point Hann frames with a 500 sample hop yield 94 frames, and the
    clip tail is zero padded until ``min_frames`` frames fit.
    """

    n_fft: int = 1024
    hop: int = 500
    window: str = "hann"
    min_frames: int | None = 96

    def __post_init__(self):
        if self.n_fft <= 0 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ValueError(f"hop must be in (0, n_fft], got {self.hop}")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.min_frames is not None and self.min_frames < 1:
            raise ValueError("min_frames must be positive")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2

    def to_dict(self) -> dict:
        return {"n_fft": self.n_fft, "hop": self.hop, "window": self.window, "min_frames": self.min_frames}


@lru_cache(maxsize=16)
def _window(kind: str, n: int) -> np.ndarray:
    w = get_window(kind, n, fftbins=True)
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex one-sided STFT.

    ``bins`` has shape ``(C, F, W)`` with ``F = n_fft / 2``: FFT bins
    ``1 .. n_fft/2`` (DC removed, Nyquist kept).  The DC row is kept
    separately in ``dc`` so that :func:`istft` stays exact.
    ``pad_samples`` records the zero padding appended to the clip tail.
    """

    bins: np.ndarray
    config: StftConfig
    sample_rate: int
    dc: np.ndarray | None = None
    n_samples: int | None = None
    pad_samples: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=complex)
        if b.ndim != 3 or b.shape[1] != self.config.n_bins:
            raise ValueError(f"bins must be (C, {self.config.n_bins}, W), got {b.shape}")
        dc = np.zeros((b.shape[0], b.shape[2])) if self.dc is None else np.asarray(self.dc)
        if dc.shape != (b.shape[0], b.shape[2]):
            raise ValueError(f"dc must have shape {(b.shape[0], b.shape[2])}, got {dc.shape}")
        object.__setattr__(self, "bins", b)
        object.__setattr__(self, "dc", dc)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.bins.shape

    @property
    def n_channels(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[2]

    @property
    def freqs(self) -> np.ndarray:
        """Center frequency in Hz of each retained bin."""
        return np.arange(1, self.config.n_bins + 1) * self.sample_rate / self.config.n_fft

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)


def n_frames_for(n_samples: int, cfg: StftConfig) -> tuple[int, int]:
    """Number of frames and tail padding the STFT uses for a clip length."""
    if n_samples < cfg.n_fft:
        raise ClipTooShort(f"clip has {n_samples} samples, n_fft is {cfg.n_fft}")
    frames = (n_samples - cfg.n_fft) // cfg.hop + 1
    pad = 0
    if cfg.min_frames is not None and frames < cfg.min_frames:
        pad = (cfg.min_frames - 1) * cfg.hop + cfg.n_fft - n_samples
        frames = cfg.min_frames
    return frames, pad


def stft(clip: MultiChannelClip, cfg: StftConfig | None = None) -> Spectrogram:
    cfg = cfg or StftConfig()
    x = clip.samples
    n_frames, pad = n_frames_for(x.shape[1], cfg)
    if pad:
        x = np.pad(x, ((0, 0), (0, pad)))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_fft, axis=1)[:, :: cfg.hop][:, :n_frames]
    spec = np.fft.rfft(frames * _window(cfg.window, cfg.n_fft), axis=-1)  # (C, W, n_fft/2+1)
    spec = spec.transpose(0, 2, 1)
    return Spectrogram(
        bins=spec[:, 1:],
        dc=spec[:, 0].real,
        config=cfg,
        sample_rate=clip.sample_rate,
        n_samples=clip.n_samples,
        pad_samples=pad,
        meta={"window": cfg.window, "tail_padding_samples": pad, "dc_bin": "separate"},
    )


def istft(spec: Spectrogram) -> MultiChannelClip:
    """Weighted overlap-add inverse of :func:`stft`.

    Samples whose summed squared window is essentially zero (the very first
    sample of a periodic Hann frame) are returned as 0.
    """
    cfg = spec.config
    if cfg.hop > cfg.n_fft // 2:
        raise NonInvertibleConfig(f"hop {cfg.hop} > n_fft/2 = {cfg.n_fft // 2}; overlap-add is not invertible")
    c, _, w_frames = spec.shape
    full = np.concatenate([spec.dc[:, None, :], spec.bins], axis=1)
    frames = np.fft.irfft(full.transpose(0, 2, 1), n=cfg.n_fft, axis=-1)
    win = _window(cfg.window, cfg.n_fft)
    length = (w_frames - 1) * cfg.hop + cfg.n_fft
    out = np.zeros((c, length))
    norm = np.zeros(length)
    for i in range(w_frames):
        sl = slice(i * cfg.hop, i * cfg.hop + cfg.n_fft)
        out[:, sl] += frames[:, i] * win
        norm[sl] += win**2
    ok = norm > 1e-10 * norm.max()
    out[:, ok] /= norm[ok]
    out[:, ~ok] = 0.0
    n = spec.n_samples if spec.n_samples is not None else length - spec.pad_samples
    if n > length:
        out = np.pad(out, ((0, 0), (0, n - length)))
    return MultiChannelClip(out[:, :n], spec.sample_rate)


def mono_downmix(clip: MultiChannelClip) -> MultiChannelClip:
    return MultiChannelClip(clip.samples.mean(axis=0, keepdims=True), clip.sample_rate)


def channel_diff_spectrogram(binaural: MultiChannelClip, cfg: StftConfig | None = None) -> Spectrogram:
    """STFT of ``left - right``, the regression target of the binaural pretext task."""
    if binaural.n_channels != 2:
        raise NotBinaural(f"expected 2 channels, got {binaural.n_channels}")
    left, right = binaural.samples
    return stft(MultiChannelClip(left - right, binaural.sample_rate), cfg)


def l1_spec_distance(a: Spectrogram, b: Spectrogram) -> float:
    """Mean absolute difference between the magnitudes of two spectrograms."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} != {b.shape}")
    return float(np.mean(np.abs(np.abs(a.bins) - np.abs(b.bins))))
