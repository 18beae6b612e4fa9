"""Relative yaw from DOA spectra and score-level fusion with a pose prior.

Score curves in :class:`YawEstimate` are indexed by candidate yaw: entry
``j`` scores a relative camera yaw of ``j`` degrees (``j >= 180`` stands
for ``j - 360``).  A camera turning by ``+a`` degrees sees every source
``a`` degrees further clockwise, i.e. its DOA spectrum shifts by ``-a``
sectors, so alignment shift ``k`` corresponds to yaw ``-k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .doa import N_AZIMUTH, ArrayGeometry, DoaSpectrum, MusicConfig, music_spectrum
from .dsp import StftConfig, stft
from .errors import TooFewChannels
from .geometry import RelativePose, Rotation, signed_yaw_of, wrap_deg
from .sim import CapturePair

FLAT_THRESHOLD = 0.2
MIN_CONFIDENCE_DEG = 0.5
METHODS = ("audio_only", "prior_only", "fused")

_CANDIDATE_YAWS = wrap_deg(np.arange(N_AZIMUTH, dtype=float))
_SHIFT_INDEX = (np.arange(N_AZIMUTH)[None, :] + np.arange(N_AZIMUTH)[:, None]) % N_AZIMUTH


@dataclass(frozen=True)
class PosePrior:
    """External rotation belief with a wrapped-Gaussian yaw uncertainty."""

    rotation: Rotation
    yaw_confidence_deg: float

    def __post_init__(self):
        if not self.yaw_confidence_deg > 0:
            raise ValueError("yaw_confidence_deg must be positive")

    @property
    def yaw_deg(self) -> float:
        return signed_yaw_of(self.rotation)


@dataclass(frozen=True, eq=False)
class YawEstimate:
    yaw_deg: float
    score_curve: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        curve = np.asarray(self.score_curve, dtype=float)
        if curve.shape != (N_AZIMUTH,):
            raise ValueError("score_curve must have 360 entries")
        object.__setattr__(self, "score_curve", curve)

    @property
    def flat(self) -> bool:
        return bool(self.meta.get("flat_flag", False))


def _raw_alignment(f_s: np.ndarray, f_t: np.ndarray) -> np.ndarray:
    # row k holds f_t[(i + k) mod 360]
    return f_t[_SHIFT_INDEX] @ f_s


def _minmax(x: np.ndarray) -> np.ndarray:
    span = x.max() - x.min()
    # spans at rounding level are treated as flat
    if span <= 1e-12 * np.abs(x).max():
        return np.zeros_like(x)
    return (x - x.min()) / span


def circular_alignment(f_s: DoaSpectrum, f_t: DoaSpectrum) -> np.ndarray:
    """``score[k] = sum_i f_s[i] * f_t[(i + k) mod 360]``, min-max scaled to [0, 1]."""
    return _minmax(_raw_alignment(f_s.values, f_t.values))


def curve_argmax_yaw(curve: np.ndarray) -> float:
    """Yaw of the best entry; ties go to the smallest ``|yaw|``, then the smaller yaw."""
    best = np.flatnonzero(curve == curve.max())
    yaws = _CANDIDATE_YAWS[best]
    order = np.lexsort((yaws, np.abs(yaws)))
    return float(yaws[order[0]])


def alignment_to_yaw_curve(alignment: np.ndarray) -> np.ndarray:
    """Re-index a shift-indexed alignment score by candidate yaw."""
    return alignment[(-np.arange(N_AZIMUTH)) % N_AZIMUTH]


def estimate_yaw_from_spectra(f_s: DoaSpectrum, f_t: DoaSpectrum) -> YawEstimate:
    raw = _raw_alignment(f_s.values, f_t.values)
    peak = raw.max()
    # prominence of the best alignment over the average one
    prominence = float((peak - raw.mean()) / peak) if peak > 0 else 0.0
    curve = alignment_to_yaw_curve(_minmax(raw))
    meta = {
        "flat_flag": prominence < FLAT_THRESHOLD,
        "peak_prominence": prominence,
        "doa_argmax_source_deg": f_s.argmax_deg(),
        "doa_argmax_target_deg": f_t.argmax_deg(),
    }
    return YawEstimate(curve_argmax_yaw(curve), curve, "audio_only", meta)


def estimate_yaw_audio(
    pair: CapturePair,
    geom: ArrayGeometry,
    cfg: MusicConfig | None = None,
    stft_cfg: StftConfig | None = None,
) -> YawEstimate:
    """Audio-only relative yaw of the target camera w.r.t. the source camera.

    The estimate is flagged ``flat`` when the best raw alignment exceeds the
    average alignment by less than ``FLAT_THRESHOLD`` of the peak, which is
    what silent or diffuse scenes produce.
    """
    for clip in (pair.clip_source, pair.clip_target):
        if clip.n_channels < 2:
            raise TooFewChannels(f"audio yaw estimation needs >= 2 channels, got {clip.n_channels}")
    f_s = music_spectrum(stft(pair.clip_source, stft_cfg), geom, cfg)
    f_t = music_spectrum(stft(pair.clip_target, stft_cfg), geom, cfg)
    return estimate_yaw_from_spectra(f_s, f_t)


def prior_kernel(prior: PosePrior) -> np.ndarray:
    d = wrap_deg(_CANDIDATE_YAWS - prior.yaw_deg)
    return np.exp(-0.5 * (d / prior.yaw_confidence_deg) ** 2)


def estimate_yaw_prior(prior: PosePrior) -> YawEstimate:
    """Prior-only estimate.  The yaw is the prior's exact (off-grid) yaw."""
    return YawEstimate(prior.yaw_deg, prior_kernel(prior), "prior_only", {"flat_flag": False})


def fuse_with_prior(audio: YawEstimate, prior: PosePrior, weight: float) -> YawEstimate:
    """Blend ``weight * audio_curve + (1 - weight) * prior_kernel`` and take its argmax."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must be in [0, 1]")
    fused = weight * audio.score_curve + (1.0 - weight) * prior_kernel(prior)
    meta = dict(audio.meta, weight=weight, prior_yaw_deg=prior.yaw_deg)
    return YawEstimate(curve_argmax_yaw(fused), fused, "fused", meta)


def corrupt_prior(truth: RelativePose, sigma_deg: float, seed: int | Sequence[int]) -> PosePrior:
    """Truth rotation perturbed by a yaw error drawn from N(0, sigma_deg).

    The yaw error is applied about the vertical axis, so the prior's yaw is
    the truth yaw plus the (wrapped) draw.  Confidence is ``sigma_deg``,
    floored at ``MIN_CONFIDENCE_DEG`` so the prior kernel stays resolvable
    on the 1 degree grid.
    """
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be >= 0")
    noise = float(np.random.default_rng(seed).normal(0.0, sigma_deg)) if sigma_deg > 0 else 0.0
    rotation = Rotation.from_yaw(noise) @ truth.rotation if noise else truth.rotation
    return PosePrior(rotation, max(float(sigma_deg), MIN_CONFIDENCE_DEG))


def truth_yaw_deg(truth: RelativePose) -> float:
    return signed_yaw_of(truth.rotation)

