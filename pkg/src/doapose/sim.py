"""Deterministic free-field simulator for a microphone array on a moving camera.

Every source waveform is defined on a periodic support of ``L`` samples
(``L`` is a power of two comfortably longer than the clip).  Delays are
applied as exact frequency-domain phase ramps on that periodic signal, so
fractional delays introduce no interpolation error.  Sine sources and the
amplitude envelope of ``am_noise`` are evaluated analytically at the
delayed time instead.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .audio_io import read_wav, write_wav
from .doa import ArrayGeometry
from .dsp import DEFAULT_SAMPLE_RATE, MultiChannelClip
from .errors import SchemaError, SourceInsideArray
from .formats import FORMAT_VERSION, check_version, dump_line, optional, require
from .geometry import Pose, RelativePose, Rotation, pose_from_dict, pose_to_dict, relative_pose

log = logging.getLogger(__name__)

DISTANCE_CLAMP_M = 0.1
SIGNAL_RMS = 0.1
SIGNAL_KINDS = ("white_noise", "band_noise", "sine", "am_noise")
_GUARD_SAMPLES = 8192


@dataclass(frozen=True)
class SignalSpec:
    """Source waveform.  Which fields matter depends on ``kind``."""

    kind: str = "white_noise"
    seed: int = 0
    f_lo: float = 0.0
    f_hi: float = 0.0
    freq: float = 0.0
    phase: float = 0.0
    mod_rate: float = 4.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.kind == "band_noise" and not 0 <= self.f_lo < self.f_hi:
            raise ValueError("band_noise needs 0 <= f_lo < f_hi")
        if self.kind == "sine" and not self.freq > 0:
            raise ValueError("sine needs a positive frequency")

    def check_rate(self, sample_rate: int) -> None:
        nyq = sample_rate / 2
        if max(self.f_hi, self.freq, self.mod_rate if self.kind == "am_noise" else 0.0) >= nyq:
            raise ValueError(f"signal frequencies must be below Nyquist ({nyq} Hz)")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("white_noise", "band_noise", "am_noise"):
            d["seed"] = self.seed
        if self.kind == "band_noise":
            d.update(f_lo=self.f_lo, f_hi=self.f_hi)
        if self.kind == "sine":
            d.update(freq=self.freq, phase=self.phase)
        if self.kind == "am_noise":
            d["mod_rate"] = self.mod_rate
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SignalSpec:
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SourceSpec:
    position: np.ndarray
    signal: SignalSpec = SignalSpec()
    gain: float = 1.0

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("source position must be finite")
        if self.gain < 0:
            raise ValueError("gain must be >= 0")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)

    def moved(self, transform: Pose) -> SourceSpec:
        return SourceSpec(transform.apply(self.position), self.signal, self.gain)

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "signal": self.signal.to_dict(), "gain": self.gain}

    @classmethod
    def from_dict(cls, d: dict) -> SourceSpec:
        return cls(d["position"], SignalSpec.from_dict(d["signal"]), d.get("gain", 1.0))


@dataclass(frozen=True, eq=False)
class Scene:
    sources: tuple[SourceSpec, ...]
    geometry: ArrayGeometry
    noise_snr_db: float | None = None
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        for s in self.sources:
            s.signal.check_rate(self.sample_rate)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "noise_snr_db": self.noise_snr_db,
            "sample_rate": self.sample_rate,
            "sources": [s.to_dict() for s in self.sources],
        }

    @classmethod
    def from_dict(cls, d: dict, geometry: ArrayGeometry) -> Scene:
        return cls(
            tuple(SourceSpec.from_dict(s) for s in d["sources"]),
            geometry,
            d.get("noise_snr_db"),
            d.get("seed", 0),
            d.get("sample_rate", DEFAULT_SAMPLE_RATE),
        )


def _support_length(n: int) -> int:
    return 1 << math.ceil(math.log2(n + _GUARD_SAMPLES))


@lru_cache(maxsize=64)
def _periodic_base(kind: str, scene_seed: int, seed: int, f_lo: float, f_hi: float, length: int, sr: int):
    """Spectrum (rfft) of a periodic noise waveform with RMS ``SIGNAL_RMS``."""
    rng = np.random.default_rng([scene_seed, seed, SIGNAL_KINDS.index(kind)])
    x = rng.standard_normal(length)
    spec = np.fft.rfft(x)
    spec[-1] = 0.0  # a fractional delay would make the Nyquist bin complex
    spec[0] = 0.0
    if kind == "band_noise":
        f = np.fft.rfftfreq(length, 1.0 / sr)
        spec[(f < f_lo) | (f > f_hi)] = 0.0
    rms = np.sqrt(np.sum(np.abs(spec[1:-1]) ** 2) * 2) / length
    if rms > 0:
        spec *= SIGNAL_RMS / rms
    spec.setflags(write=False)
    return spec


def source_waveform(signal: SignalSpec, delays_s: np.ndarray, n: int, sr: int, scene_seed: int = 0) -> np.ndarray:
    """Waveform of one source as heard with each of ``delays_s``; shape ``(len(delays), n)``."""
    delays_s = np.asarray(delays_s, dtype=float)
    t = np.arange(n) / sr
    if signal.kind == "sine":
        amp = SIGNAL_RMS * math.sqrt(2.0)
        return amp * np.sin(2 * np.pi * signal.freq * (t[None, :] - delays_s[:, None]) + signal.phase)
    length = _support_length(n)
    base = _periodic_base(signal.kind, scene_seed, signal.seed, signal.f_lo, signal.f_hi, length, sr)
    f = np.fft.rfftfreq(length, 1.0 / sr)
    ramps = np.exp(-2j * np.pi * f[None, :] * delays_s[:, None])
    out = np.fft.irfft(base[None, :] * ramps, n=length, axis=1)[:, :n]
    if signal.kind == "am_noise":
        out = out * (1.0 + 0.5 * np.sin(2 * np.pi * signal.mod_rate * (t[None, :] - delays_s[:, None])))
    return out


def _noise_rng(scene: Scene, key: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng([scene.seed, 0x5EED, *key])


def render_clip(
    scene: Scene,
    camera: Pose,
    duration_s: float,
    noise_key: Sequence[int] = (0,),
) -> MultiChannelClip:
    """Render what the camera-mounted array records during ``duration_s``.

    Each source reaches microphone ``m`` after ``|x_k - p_m| / c`` seconds
    with amplitude ``gain / max(|x_k - p_m|, 0.1)``.  When the scene has a
    ``noise_snr_db``, white Gaussian noise from the stream selected by
    ``noise_key`` is added to every channel at that SNR relative to the
    mean power of the noiseless mixture.
    """
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    sr = scene.sample_rate
    n = int(round(duration_s * sr))
    mics = camera.apply(scene.geometry.mic_positions)
    c = scene.geometry.speed_of_sound
    out = np.zeros((len(mics), n))
    for src in scene.sources:
        dist = np.linalg.norm(mics - src.position, axis=1)
        if np.any(dist < DISTANCE_CLAMP_M):
            raise SourceInsideArray(
                f"source at {src.position.tolist()} is within {DISTANCE_CLAMP_M} m of a microphone"
            )
        if src.gain == 0:
            continue
        wave = source_waveform(src.signal, dist / c, n, sr, scene.seed)
        out += (src.gain / np.maximum(dist, DISTANCE_CLAMP_M))[:, None] * wave
    if scene.noise_snr_db is not None:
        power = float(np.mean(out**2))
        std = math.sqrt(power / 10.0 ** (scene.noise_snr_db / 10.0)) if power > 0 else 0.0
        out = out + std * _noise_rng(scene, noise_key).standard_normal(out.shape)
    return MultiChannelClip(out, sr)


@dataclass(frozen=True, eq=False)
class CapturePair:
    clip_source: MultiChannelClip
    clip_target: MultiChannelClip
    pose_source: Pose
    pose_target: Pose
    truth: RelativePose
    manifest_id: str = ""
    scene: Scene | None = None


def _as_float32(clip: MultiChannelClip) -> MultiChannelClip:
    return MultiChannelClip(clip.samples.astype(np.float32).astype(np.float64), clip.sample_rate)


def generate_pair(
    scene: Scene,
    pose_s: Pose,
    pose_t: Pose,
    duration_s: float = 1.0,
    pair_index: int = 0,
    manifest_id: str = "",
) -> CapturePair:
    """Render the same scene from two camera poses.

    Source waveforms are shared between the two renders; sensor noise uses
    independent streams keyed by ``(pair_index, role)``.  Clips are rounded
    to float32 so that they survive a WAV round trip unchanged.
    """
    clip_s = render_clip(scene, pose_s, duration_s, noise_key=(pair_index, 0))
    clip_t = render_clip(scene, pose_t, duration_s, noise_key=(pair_index, 1))
    return CapturePair(
        _as_float32(clip_s),
        _as_float32(clip_t),
        pose_s,
        pose_t,
        relative_pose(pose_s, pose_t),
        manifest_id,
        scene,
    )


# -- datasets ------------------------------------------------------------------


def _range(d: dict, key: str, default, path: str, kind=float) -> tuple:
    value = optional(d, key, list, None, path)
    if value is None:
        return tuple(default)
    full = f"{path}.{key}" if path else key
    if len(value) != 2:
        raise SchemaError("expected [min, max]", full)
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
            raise SchemaError(f"expected {kind.__name__}", f"{full}[{i}]")
        out.append(kind(v))
    if out[0] > out[1]:
        raise SchemaError("min exceeds max", full)
    return tuple(out)


@dataclass(frozen=True)
class DatasetSpec:
    """Sampling recipe for a simulated evaluation set.

    For every pair a source camera is placed at a random world position and
    heading; the target camera differs by a yaw drawn uniformly from
    ``yaw_range_deg`` and a horizontal translation with each component
    uniform in ``[-translation_range_m, translation_range_m]``.  Sources sit
    ``source_distance_m`` away from the source camera at uniform random
    azimuths.
    """

    n_pairs: int = 10
    master_seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    duration_s: float = 1.0
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry.circular)
    sources_per_scene: tuple[int, int] = (1, 1)
    source_distance_m: tuple[float, float] = (2.0, 6.0)
    source_height_m: tuple[float, float] = (0.0, 0.0)
    signals: tuple[str, ...] = ("white_noise",)
    yaw_range_deg: tuple[float, float] = (-60.0, 60.0)
    translation_range_m: float = 0.0
    noise_snr_db: float | None = 20.0
    wav_format: str = "float32"

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "n_pairs": self.n_pairs,
            "master_seed": self.master_seed,
            "sample_rate": self.sample_rate,
            "duration_s": self.duration_s,
            "geometry": self.geometry.to_dict(),
            "sources_per_scene": list(self.sources_per_scene),
            "source_distance_m": list(self.source_distance_m),
            "source_height_m": list(self.source_height_m),
            "signals": list(self.signals),
            "yaw_range_deg": list(self.yaw_range_deg),
            "translation_range_m": self.translation_range_m,
            "noise_snr_db": self.noise_snr_db,
            "wav_format": self.wav_format,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSpec:
        if not isinstance(d, dict):
            raise SchemaError("dataset spec must be a JSON object")
        check_version(d, required=False)
        known = set(cls().to_dict())
        for key in d:
            if key not in known:
                raise SchemaError("unknown key", key)
        geometry = ArrayGeometry.circular()
        if d.get("geometry") is not None:
            geometry = ArrayGeometry.from_dict(require(d, "geometry", dict), "geometry")
        signals = optional(d, "signals", list, ["white_noise"])
        for i, s in enumerate(signals):
            if s not in ("white_noise", "band_noise", "am_noise"):
                raise SchemaError(f"unsupported signal {s!r}", f"signals[{i}]")
        snr = d.get("noise_snr_db", 20.0)
        if snr is not None and (isinstance(snr, bool) or not isinstance(snr, (int, float))):
            raise SchemaError("expected number or null", "noise_snr_db")
        spec = cls(
            n_pairs=optional(d, "n_pairs", int, 10),
            master_seed=optional(d, "master_seed", int, 0),
            sample_rate=optional(d, "sample_rate", int, DEFAULT_SAMPLE_RATE),
            duration_s=optional(d, "duration_s", float, 1.0),
            geometry=geometry,
            sources_per_scene=_range(d, "sources_per_scene", (1, 1), "", int),
            source_distance_m=_range(d, "source_distance_m", (2.0, 6.0), ""),
            source_height_m=_range(d, "source_height_m", (0.0, 0.0), ""),
            signals=tuple(signals),
            yaw_range_deg=_range(d, "yaw_range_deg", (-60.0, 60.0), ""),
            translation_range_m=optional(d, "translation_range_m", float, 0.0),
            noise_snr_db=None if snr is None else float(snr),
            wav_format=optional(d, "wav_format", str, "float32"),
        )
        if spec.n_pairs < 0:
            raise SchemaError("must be >= 0", "n_pairs")
        if spec.sources_per_scene[0] < 1:
            raise SchemaError("need at least one source", "sources_per_scene")
        if spec.duration_s <= 0:
            raise SchemaError("must be positive", "duration_s")
        if spec.source_distance_m[0] <= DISTANCE_CLAMP_M + 0.2:
            raise SchemaError("sources must be farther than 0.3 m", "source_distance_m")
        if spec.translation_range_m < 0:
            raise SchemaError("must be >= 0", "translation_range_m")
        if spec.wav_format not in ("float32", "int16"):
            raise SchemaError("expected 'float32' or 'int16'", "wav_format")
        return spec


@dataclass(frozen=True)
class PairPlan:
    """Everything needed to render one pair; cheap to build, deterministic."""

    index: int
    pair_id: str
    scene: Scene
    pose_source: Pose
    pose_target: Pose


def plan_pair(spec: DatasetSpec, index: int) -> PairPlan:
    rng = np.random.default_rng([spec.master_seed, index])
    heading = rng.uniform(0.0, 360.0)
    position = np.array([*rng.uniform(-2.0, 2.0, size=2), 0.0])
    pose_s = Pose(Rotation.from_yaw(heading), position)
    yaw = rng.uniform(*spec.yaw_range_deg)
    t = spec.translation_range_m
    delta = np.array([*rng.uniform(-t, t, size=2), 0.0]) if t > 0 else np.zeros(3)
    pose_t = pose_s.compose(RelativePose(Rotation.from_yaw(yaw), delta))

    n_src = int(rng.integers(spec.sources_per_scene[0], spec.sources_per_scene[1] + 1))
    sources = []
    for _ in range(n_src):
        az = rng.uniform(0.0, 360.0)
        dist = rng.uniform(*spec.source_distance_m)
        height = rng.uniform(*spec.source_height_m)
        kind = spec.signals[int(rng.integers(len(spec.signals)))]
        seed = int(rng.integers(2**31))
        if kind == "band_noise":
            lo = rng.uniform(200.0, 1000.0)
            signal = SignalSpec(kind, seed, f_lo=lo, f_hi=min(lo + rng.uniform(2000.0, 7000.0), spec.sample_rate / 2 - 1))
        elif kind == "am_noise":
            signal = SignalSpec(kind, seed, mod_rate=float(rng.uniform(1.0, 8.0)))
        else:
            signal = SignalSpec(kind, seed)
        offset = dist * np.array([math.cos(math.radians(az)), math.sin(math.radians(az)), 0.0])
        sources.append(SourceSpec(position + offset + [0.0, 0.0, height], signal, 1.0))
    scene = Scene(tuple(sources), spec.geometry, spec.noise_snr_db, int(rng.integers(2**31)), spec.sample_rate)
    return PairPlan(index, f"pair_{index:05d}", scene, pose_s, pose_t)


def render_plan(plan: PairPlan, duration_s: float) -> CapturePair:
    return generate_pair(plan.scene, plan.pose_source, plan.pose_target, duration_s, plan.index, plan.pair_id)


def manifest_header(spec: DatasetSpec) -> dict:
    return {
        "kind": "header",
        "format_version": FORMAT_VERSION,
        "spec": spec.to_dict(),
        "n_pairs": spec.n_pairs,
        "distance_clamp_m": DISTANCE_CLAMP_M,
        "propagation": "free_field",
    }


def generate_dataset(spec: DatasetSpec, out_dir: str | Path, threads: int = 1) -> Path:
    """Render ``spec`` into ``out_dir``: ``manifest.jsonl`` plus one WAV per clip.

    Output bytes do not depend on ``threads``; pairs are rendered in
    parallel but written in index order.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    lines = [dump_line(manifest_header(spec))]

    def work(i: int) -> CapturePair:
        return render_plan(plan_pair(spec, i), spec.duration_s)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for pair in pool.map(work, range(spec.n_pairs)):
            rel_s = f"audio/{pair.manifest_id}_source.wav"
            rel_t = f"audio/{pair.manifest_id}_target.wav"
            write_wav(out_dir / rel_s, pair.clip_source, spec.wav_format)
            write_wav(out_dir / rel_t, pair.clip_target, spec.wav_format)
            lines.append(
                dump_line(
                    {
                        "id": pair.manifest_id,
                        "wav_source": rel_s,
                        "wav_target": rel_t,
                        "pose_source": pose_to_dict(pair.pose_source),
                        "pose_target": pose_to_dict(pair.pose_target),
                        "truth": pose_to_dict(pair.truth),
                        "scene": pair.scene.to_dict(),
                    }
                )
            )
            log.debug("rendered %s", pair.manifest_id)
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# -- manifest reading ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifestRecord:
    id: str
    wav_source: Path
    wav_target: Path
    pose_source: Pose
    pose_target: Pose
    truth: RelativePose
    scene: dict


@dataclass(frozen=True, eq=False)
class Manifest:
    path: Path
    header: dict
    records: tuple[ManifestRecord, ...]

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.from_dict(self.header["spec"]["geometry"])

    @property
    def sample_rate(self) -> int:
        return int(self.header["spec"].get("sample_rate", DEFAULT_SAMPLE_RATE))

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def load_pair(self, rec: ManifestRecord) -> CapturePair:
        rate = self.sample_rate
        return CapturePair(
            read_wav(rec.wav_source, rate),
            read_wav(rec.wav_target, rate),
            rec.pose_source,
            rec.pose_target,
            rec.truth,
            rec.id,
            Scene.from_dict(rec.scene, self.geometry) if rec.scene else None,
        )


def read_manifest(path: str | Path) -> Manifest:
    """Parse and validate a manifest; problems raise :class:`SchemaError`."""
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("manifest is empty (no header line)", "line 1")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", "line 1") from None
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise SchemaError("first line must be the header record", "line 1")
    check_version(header, "line 1.format_version")
    if not isinstance(header.get("spec"), dict) or "geometry" not in header["spec"]:
        raise SchemaError("header lacks spec.geometry", "line 1.spec")
    records = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        where = f"line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", where) from None
        for key in ("id", "wav_source", "wav_target", "pose_source", "pose_target", "truth"):
            if key not in rec:
                raise SchemaError("missing key", f"{where}.{key}")
        rid = rec["id"]
        if not isinstance(rid, str) or rid in seen:
            raise SchemaError("ids must be unique strings", f"{where}.id")
        seen.add(rid)
        truth = pose_from_dict(rec["truth"], RelativePose, f"{where}.truth")
        records.append(
            ManifestRecord(
                rid,
                path.parent / rec["wav_source"],
                path.parent / rec["wav_target"],
                pose_from_dict(rec["pose_source"], path=f"{where}.pose_source"),
                pose_from_dict(rec["pose_target"], path=f"{where}.pose_target"),
                truth,
                rec.get("scene") or {},
            )
        )
    if header.get("n_pairs") is not None and header["n_pairs"] != len(records):
        raise SchemaError(f"header announces {header['n_pairs']} pairs, found {len(records)}", "line 1.n_pairs")
    return Manifest(path, header, tuple(records))
