"""Array geometry, steering vectors and wideband MUSIC with frequency normalization.

The azimuth grid has 360 one-degree sectors; sector ``i`` covers
``[i, i+1)`` degrees counterclockwise from camera forward and is evaluated
at its center ``i + 0.5``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dsp import Spectrogram
from .errors import EmptyBand, ModalityMismatch, SchemaError, TooFewChannels
from .formats import FORMAT_VERSION, check_version

N_AZIMUTH = 360
SPEED_OF_SOUND = 343.0
SECTOR_CENTERS_DEG = np.arange(N_AZIMUTH) + 0.5


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Microphone positions (meters) in the camera frame."""

    mic_positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        p = np.array(self.mic_positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 2:
            raise ValueError(f"need at least 2 microphones as (M, 3) positions, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("microphone positions must be finite")
        d = np.linalg.norm(p[:, None] - p[None], axis=-1)
        if np.any(d[np.triu_indices(len(p), 1)] <= 1e-4):
            raise ValueError("microphones must be more than 1e-4 m apart")
        if not self.speed_of_sound > 0:
            raise ValueError("speed_of_sound must be positive")
        p.setflags(write=False)
        object.__setattr__(self, "mic_positions", p)

    @property
    def n_mics(self) -> int:
        return self.mic_positions.shape[0]

    @classmethod
    def circular(cls, n_mics: int = 4, radius: float = 0.05, start_deg: float = 0.0, **kw) -> ArrayGeometry:
        """Uniform circular array in the horizontal plane."""
        ang = np.deg2rad(start_deg + 360.0 * np.arange(n_mics) / n_mics)
        pos = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_mics)], axis=1)
        return cls(pos, **kw)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "speed_of_sound": self.speed_of_sound,
            "mics": self.mic_positions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, path: str = "") -> ArrayGeometry:
        check_version(d, path, required=False)
        mics = d.get("mics")
        if not isinstance(mics, list):
            raise SchemaError("expected a list of [x, y, z] positions", f"{path}.mics" if path else "mics")
        try:
            return cls(np.array(mics, dtype=float), float(d.get("speed_of_sound", SPEED_OF_SOUND)))
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc), f"{path}.mics" if path else "mics") from None


def read_geometry(path: str | Path) -> ArrayGeometry:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ArrayGeometry.from_dict(d)


def unit_direction(azimuth_deg) -> np.ndarray:
    """Horizontal unit vector(s) for azimuth(s) in degrees."""
    a = np.deg2rad(np.asarray(azimuth_deg, dtype=float))
    return np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=-1)


def steering_matrix(geom: ArrayGeometry, azimuths_deg, freqs_hz) -> np.ndarray:
    """Far-field plane-wave responses, shape ``(F, A, M)``.

    A microphone at ``p`` hears a wave arriving from direction ``u``
    with delay ``-(p . u) / c`` relative to the array origin.
    """
    tau = -(unit_direction(azimuths_deg) @ geom.mic_positions.T) / geom.speed_of_sound  # (A, M)
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    return np.exp(-2j * np.pi * f[:, None, None] * tau[None])


def steering_vector(geom: ArrayGeometry, azimuth_deg: float, freq_hz: float) -> np.ndarray:
    return steering_matrix(geom, [azimuth_deg], [freq_hz])[0, 0]


def _loading_scale(trace: np.ndarray, n: int) -> np.ndarray:
    scale = trace.real / n
    # a zero covariance still gets a well-defined (identity) loading
    return np.where(scale > 0, scale, 1.0)


def spatial_covariance(spec: Spectrogram, bin: int, loading: float = 1e-6) -> np.ndarray:
    """Snapshot-averaged covariance of one frequency bin plus diagonal loading.

    The loading is ``loading * trace / C`` times the identity (plain
    ``loading * I`` when the trace is zero).
    """
    x = spec.bins[:, bin, :]
    c, w = x.shape
    r = x @ x.conj().T / w
    r = 0.5 * (r + r.conj().T)
    return r + loading * _loading_scale(np.trace(r), c) * np.eye(c)


def _covariances(bins: np.ndarray, loading: float) -> np.ndarray:
    """Batched version of :func:`spatial_covariance`; ``bins`` is (C, B, W)."""
    x = bins.transpose(1, 0, 2)  # (B, C, W)
    c, w = x.shape[1], x.shape[2]
    r = x @ x.conj().transpose(0, 2, 1) / w
    r = 0.5 * (r + r.conj().transpose(0, 2, 1))
    tr = np.trace(r, axis1=1, axis2=2)
    return r + (loading * _loading_scale(tr, c))[:, None, None] * np.eye(c)


@dataclass(frozen=True)
class MusicConfig:
    num_sources: int = 1
    freq_band: tuple[float, float] = (300.0, 8000.0)
    diagonal_loading: float = 1e-6

    def __post_init__(self):
        lo, hi = self.freq_band
        if not 0 <= lo < hi:
            raise ValueError(f"invalid freq_band {self.freq_band}")
        if self.num_sources < 1:
            raise ValueError("num_sources must be >= 1")
        if self.diagonal_loading < 0:
            raise ValueError("diagonal_loading must be >= 0")

    def to_dict(self) -> dict:
        return {
            "num_sources": self.num_sources,
            "freq_band": list(self.freq_band),
            "diagonal_loading": self.diagonal_loading,
        }


@dataclass(frozen=True, eq=False)
class DoaSpectrum:
    """360 azimuth-sector values in [0, 1]."""

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (N_AZIMUTH,):
            raise ValueError(f"DoaSpectrum needs exactly {N_AZIMUTH} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("DoaSpectrum values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def argmax_deg(self) -> int:
        return int(np.argmax(self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# format_version: {FORMAT_VERSION}\n")
        for key in sorted(self.meta):
            buf.write(f"# {key}: {json.dumps(self.meta[key], sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["azimuth_deg", "value"])
        for i, v in enumerate(self.values):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> DoaSpectrum:
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line and not line.startswith("azimuth_deg"):
                rows.append(line.split(","))
        check_version({"format_version": meta.pop("format_version", None)})
        meta = {k: json.loads(v) for k, v in meta.items()}
        values = np.zeros(N_AZIMUTH)
        seen = set()
        for az, val in rows:
            values[int(az)] = float(val)
            seen.add(int(az))
        if seen != set(range(N_AZIMUTH)):
            raise SchemaError("DOA CSV must have one row per azimuth 0..359")
        return cls(values, meta)


def _minmax(x: np.ndarray, axis=None) -> np.ndarray:
    lo = x.min(axis=axis, keepdims=True)
    span = x.max(axis=axis, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def band_bins(spec: Spectrogram, band: tuple[float, float]) -> np.ndarray:
    f = spec.freqs
    return np.flatnonzero((f >= band[0]) & (f <= band[1]))


def music_spectrum(spec: Spectrogram, geom: ArrayGeometry, cfg: MusicConfig | None = None) -> DoaSpectrum:
    """Wideband MUSIC pseudospectrum over the 360 azimuth sectors.

    Each in-band frequency bin contributes a narrowband MUSIC
    pseudospectrum ``1 / |E_n^H a(theta)|^2``, min-max scaled to [0, 1]
    so that loud bins do not dominate; the per-bin curves are averaged and
    the average is min-max scaled again.
    """
    cfg = cfg or MusicConfig()
    c = spec.n_channels
    if c < 2:
        raise TooFewChannels(f"MUSIC needs at least 2 channels, got {c}")
    if c != geom.n_mics:
        raise ModalityMismatch(f"spectrogram has {c} channels but geometry has {geom.n_mics} microphones")
    if not cfg.num_sources < c:
        raise ValueError(f"num_sources ({cfg.num_sources}) must be smaller than the channel count ({c})")
    idx = band_bins(spec, cfg.freq_band)
    if idx.size == 0:
        raise EmptyBand(f"no STFT bin inside {cfg.freq_band} Hz")

    cov = _covariances(spec.bins[:, idx, :], cfg.diagonal_loading)
    _, vecs = np.linalg.eigh(cov)  # ascending eigenvalues
    noise = vecs[:, :, : c - cfg.num_sources]  # (B, C, C-K)
    a = steering_matrix(geom, SECTOR_CENTERS_DEG, spec.freqs[idx])  # (B, A, C)
    proj = np.einsum("bck,bac->bka", noise.conj(), a)
    denom = np.sum(proj.real**2 + proj.imag**2, axis=1)  # (B, A)
    pseudo = 1.0 / np.maximum(denom, 1e-300)
    per_bin = _minmax(pseudo, axis=1)
    values = _minmax(per_bin.mean(axis=0))
    meta = {
        "method": "music",
        "normalization": "per_bin_minmax_then_mean_then_minmax",
        "num_sources": cfg.num_sources,
        "freq_band_hz": list(cfg.freq_band),
        "n_bins_used": int(idx.size),
        "sector_sample": "center",
    }
    return DoaSpectrum(np.clip(values, 0.0, 1.0), meta)


def doa_peaks(spectrum: DoaSpectrum | Sequence[float], k: int = 1) -> list[int]:
    """Top-``k`` circular local maxima, no two adjacent.

    A sector is a local maximum when it is ``>=`` both circular
    neighbours.  Candidates are taken by value (descending), ties by
    smaller azimuth, skipping any sector adjacent to one already taken.
    """
    if not 1 <= k <= N_AZIMUTH:
        raise ValueError(f"k must be in [1, {N_AZIMUTH}]")
    v = np.asarray(getattr(spectrum, "values", spectrum), dtype=float)
    n = v.size
    is_max = (v >= np.roll(v, 1)) & (v >= np.roll(v, -1))
    cand = np.flatnonzero(is_max)
    order = cand[np.lexsort((cand, -v[cand]))]
    taken: list[int] = []
    blocked = np.zeros(n, dtype=bool)
    for i in order:
        if blocked[i]:
            continue
        taken.append(int(i))
        blocked[[i, (i - 1) % n, (i + 1) % n]] = True
        if len(taken) == k:
            break
    return taken
