"""Multichannel RIFF/WAV reading and writing (16-bit PCM and 32-bit float)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import MultiChannelClip

MAX_CHANNELS = 16


class SampleRateMismatch(ValueError):
    pass


def read_wav(path: str | Path, expected_rate: int | None = None) -> MultiChannelClip:
    """Read a WAV file into a clip with float samples.

    16-bit files are scaled by 1/32768.  A sample rate different from
    ``expected_rate`` is an error; nothing is ever resampled.
    """
    rate, data = wavfile.read(str(path))
    if expected_rate is not None and rate != expected_rate:
        raise SampleRateMismatch(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    samples = samples.T if samples.ndim == 2 else samples[None, :]
    if samples.shape[0] > MAX_CHANNELS:
        raise ValueError(f"{path}: {samples.shape[0]} channels, at most {MAX_CHANNELS} supported")
    return MultiChannelClip(samples, int(rate))


def write_wav(path: str | Path, clip: MultiChannelClip, fmt: str = "float32") -> None:
    """Write ``clip`` as ``float32`` or ``int16`` PCM.

    ``int16`` raises on samples outside [-1, 1) instead of clipping.
    """
    if clip.n_channels > MAX_CHANNELS:
        raise ValueError(f"{clip.n_channels} channels, at most {MAX_CHANNELS} supported")
    x = clip.samples.T
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "int16":
        scaled = np.round(x * 32768.0)
        if scaled.min(initial=0) < -32768 or scaled.max(initial=0) > 32767:
            raise ValueError("samples out of range for 16-bit PCM")
        data = scaled.astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(str(path), int(clip.sample_rate), np.ascontiguousarray(data))
