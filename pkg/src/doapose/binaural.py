"""Analytic binaural rendering and binaural cue extraction.

Rendering uses a spherical-head approximation: an interaural time
difference ``(ear_spacing / c) * sin(azimuth)`` split evenly between the
ears, and a first-order high-shelf attenuation on the ear facing away from
the source.  Positive azimuths are on the listener's left, so they produce
a positive TDOA (right ear lags) and a positive ILD (left ear louder).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .doa import SPEED_OF_SOUND, DoaSpectrum
from .dsp import MultiChannelClip, StftConfig, stft
from .errors import NotBinaural, NotMono, SchemaError
from .formats import FORMAT_VERSION, check_version

ILD_EPS = 1e-12
_PAD = 256


@dataclass(frozen=True)
class HeadModel:
    ear_spacing: float = 0.18
    head_shadow_strength: float = 0.5
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if not self.ear_spacing > 0:
            raise ValueError("ear_spacing must be positive")
        if not 0.0 <= self.head_shadow_strength <= 1.0:
            raise ValueError("head_shadow_strength must be in [0, 1]")

    def itd_s(self, azimuth_deg: float) -> float:
        return self.ear_spacing / self.speed_of_sound * math.sin(math.radians(azimuth_deg))

    @property
    def shadow_corner_hz(self) -> float:
        return self.speed_of_sound / (math.pi * self.ear_spacing)


class Binauralizer(Protocol):
    """Anything that turns a mono clip plus a source azimuth into two ears."""

    def render(self, mono: MultiChannelClip, source_azimuth: float) -> MultiChannelClip: ...


def _ear_filter(freqs: np.ndarray, delay_s: float, shadow: float, corner_hz: float) -> np.ndarray:
    gain = 1.0 - shadow * freqs / (freqs + corner_hz)
    return gain * np.exp(-2j * np.pi * freqs * delay_s)


@dataclass(frozen=True)
class SphericalHeadBinauralizer:
    head: HeadModel = HeadModel()

    def render(self, mono: MultiChannelClip, source_azimuth: float) -> MultiChannelClip:
        if mono.n_channels != 1:
            raise NotMono(f"expected a mono clip, got {mono.n_channels} channels")
        head = self.head
        sr = mono.sample_rate
        n = mono.n_samples
        s = math.sin(math.radians(source_azimuth))
        half_itd = 0.5 * head.ear_spacing / head.speed_of_sound * s
        # the ear facing away from the source is shadowed
        shadow_left = head.head_shadow_strength * max(0.0, -s)
        shadow_right = head.head_shadow_strength * max(0.0, s)

        length = n + 2 * _PAD
        x = np.fft.rfft(np.pad(mono.samples[0], _PAD))
        f = np.fft.rfftfreq(length, 1.0 / sr)
        left = np.fft.irfft(x * _ear_filter(f, -half_itd, shadow_left, head.shadow_corner_hz), n=length)
        right = np.fft.irfft(x * _ear_filter(f, half_itd, shadow_right, head.shadow_corner_hz), n=length)
        return MultiChannelClip(np.stack([left, right])[:, _PAD : _PAD + n], sr)


def binauralize(mono: MultiChannelClip, source_azimuth: float, head: HeadModel | None = None) -> MultiChannelClip:
    return SphericalHeadBinauralizer(head or HeadModel()).render(mono, source_azimuth)


def gcc_phat(x: np.ndarray, y: np.ndarray, sample_rate: float, max_tau: float | None = None, interp: int = 16):
    """Delay of ``y`` relative to ``x`` (seconds, positive when ``y`` lags).

    Cross-correlation with PHAT weighting, upsampled ``interp`` times by
    zero padding in frequency, with parabolic refinement of the peak.
    Returns ``(tau, cc)`` where ``cc`` is centred on zero lag.
    """
    n = len(x) + len(y)
    X = np.fft.rfft(x, n=n)
    Y = np.fft.rfft(y, n=n)
    cross = Y * np.conj(X)
    mag = np.abs(cross)
    cross = np.where(mag > 0, cross / np.where(mag > 0, mag, 1.0), 0.0)
    cc = np.fft.irfft(cross, n=interp * n)
    max_shift = interp * n // 2
    if max_tau is not None:
        max_shift = min(int(interp * sample_rate * max_tau), max_shift)
    cc = np.concatenate((cc[-max_shift:], cc[: max_shift + 1]))
    k = int(np.argmax(np.abs(cc)))
    shift = float(k - max_shift)
    if 0 < k < len(cc) - 1:
        a, b, c = np.abs(cc[k - 1 : k + 2])
        denom = a - 2 * b + c
        if denom != 0:
            shift += 0.5 * (a - c) / denom
    return shift / (interp * sample_rate), cc


@dataclass(frozen=True, eq=False)
class BinauralCues:
    bin_hz: np.ndarray
    ild_db: np.ndarray
    ipd_rad: np.ndarray
    tdoa_s: float

    def __post_init__(self):
        if not (self.bin_hz.shape == self.ild_db.shape == self.ipd_rad.shape):
            raise ValueError("cue arrays must share one shape")
        if np.any(self.ipd_rad <= -np.pi) or np.any(self.ipd_rad > np.pi):
            raise ValueError("ipd_rad must be wrapped to (-pi, pi]")

    @property
    def n_bins(self) -> int:
        return self.bin_hz.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# format_version: {FORMAT_VERSION}\n")
        buf.write(f"# tdoa_s: {self.tdoa_s!r}\n")
        buf.write("bin_hz,ild_db,ipd_rad\n")
        for f, ild, ipd in zip(self.bin_hz, self.ild_db, self.ipd_rad):
            buf.write(f"{float(f)!r},{float(ild)!r},{float(ipd)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> BinauralCues:
        header = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
            elif line and not line.startswith("bin_hz"):
                rows.append([float(v) for v in line.split(",")])
        check_version(header)
        if "tdoa_s" not in header:
            raise SchemaError("missing tdoa_s header field", "tdoa_s")
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], float(header["tdoa_s"]))


def _wrap_pi(phase: np.ndarray) -> np.ndarray:
    return np.where(phase <= -np.pi, phase + 2 * np.pi, phase)


def _tdoa(left: np.ndarray, right: np.ndarray, sr: float, max_tau: float | None) -> float:
    # evaluate in a canonical channel order so swapping channels negates exactly
    if left.tobytes() > right.tobytes():
        return -_tdoa(right, left, sr, max_tau)
    if np.array_equal(left, right):
        return 0.0
    return gcc_phat(left, right, sr, max_tau)[0]


def extract_cues(
    binaural: MultiChannelClip, cfg: StftConfig | None = None, max_tau: float | None = None
) -> BinauralCues:
    """ILD and IPD per frequency bin plus a broadband GCC-PHAT TDOA.

    ILD is averaged over frames with weights ``|L|^2 + |R|^2`` so silent
    frames do not dominate; IPD is the angle of the frame-averaged cross
    spectrum ``L * conj(R)``.  TDOA is the lag of the right channel behind
    the left one.
    """
    if binaural.n_channels != 2:
        raise NotBinaural(f"expected 2 channels, got {binaural.n_channels}")
    spec = stft(binaural, cfg)
    L, R = spec.bins
    mag_l, mag_r = np.abs(L), np.abs(R)
    ild = 20.0 * np.log10(np.maximum(mag_l, ILD_EPS)) - 20.0 * np.log10(np.maximum(mag_r, ILD_EPS))
    weight = mag_l**2 + mag_r**2
    total = weight.sum(axis=1)
    ild_db = np.where(total > 0, (weight * ild).sum(axis=1) / np.where(total > 0, total, 1.0), 0.0)
    # explicit real/imag parts keep L * conj(L) exactly real
    cross_re = (L.real * R.real + L.imag * R.imag).mean(axis=1)
    cross_im = (L.imag * R.real - L.real * R.imag).mean(axis=1)
    ipd = _wrap_pi(np.arctan2(cross_im, cross_re))
    left, right = binaural.samples
    tdoa = _tdoa(left, right, binaural.sample_rate, max_tau)
    return BinauralCues(spec.freqs, ild_db, ipd, float(tdoa))


def fuse_audio_features(doa: DoaSpectrum, cues: BinauralCues) -> np.ndarray:
    """Concatenate ``[doa (360) | ild (F) | ipd (F) | tdoa_s (1)]``."""
    return np.concatenate([doa.values, cues.ild_db, cues.ipd_rad, [cues.tdoa_s]])


FEATURE_LAYOUT = ("doa[360]", "ild_db[F]", "ipd_rad[F]", "tdoa_s[1]")
