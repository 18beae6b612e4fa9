"""Rigid-body poses, relative pose composition and angular error functions.

Frames and conventions
----------------------
* Camera frame: +x forward, +y left, +z up.  Azimuth is measured
  counterclockwise (seen from +z) from the forward axis, so azimuth
  ``theta`` points along ``(cos theta, sin theta, 0)``.
* A :class:`Pose` is world-from-camera: ``x_world = R @ x_cam + t``.
* Quaternions are stored as ``(w, x, y, z)`` with ``w >= 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTranslation, EmptyInput, GimbalDegenerate, SchemaError

_NORM_TOL = 1e-9
DEGENERATE_NORM = 1e-9
GIMBAL_TOL = 1e-6


def _canonical(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    q = q / n
    # w >= 0; for w == 0 the first nonzero vector component is made positive
    for c in q:
        if c > 0:
            break
        if c < 0:
            q = -q
            break
    return q


@dataclass(frozen=True, eq=False)
class Rotation:
    """Unit quaternion rotation, canonicalized to ``w >= 0``."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        q = _canonical([self.w, self.x, self.y, self.z])
        for name, value in zip("wxyz", q):
            object.__setattr__(self, name, float(value))

    # -- constructors -----------------------------------------------------

    @classmethod
    def identity(cls) -> Rotation:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_quat(cls, q: Sequence[float]) -> Rotation:
        w, x, y, z = q
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle_deg: float) -> Rotation:
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        half = math.radians(angle_deg) / 2.0
        s = math.sin(half)
        return cls(math.cos(half), *(axis * s))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float]) -> Rotation:
        rotvec = np.asarray(rotvec, dtype=float)
        angle = float(np.linalg.norm(rotvec))
        if angle < 1e-15:
            return cls.identity()
        return cls.from_axis_angle(rotvec / angle, math.degrees(angle))

    @classmethod
    def from_yaw(cls, yaw_deg: float) -> Rotation:
        """Rotation about the vertical (+z) axis."""
        half = math.radians(yaw_deg) / 2.0
        return cls(math.cos(half), 0.0, 0.0, math.sin(half))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Rotation:
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        # Shepperd's method: branch on the largest diagonal term for stability
        if tr > 0:
            s = 2.0 * math.sqrt(tr + 1.0)
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        return cls.from_quat(q)

    # -- algebra ----------------------------------------------------------

    @property
    def quat(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def __matmul__(self, other: Rotation) -> Rotation:
        """Hamilton product: ``(a @ b).apply(v) == a.apply(b.apply(v))``."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> Rotation:
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate one 3-vector or an ``(n, 3)`` array of them."""
        return np.asarray(points, dtype=float) @ self.as_matrix().T

    def angle_deg(self) -> float:
        return math.degrees(2.0 * math.atan2(math.sqrt(self.x**2 + self.y**2 + self.z**2), self.w))

    def allclose(self, other: Rotation, atol: float = 1e-9) -> bool:
        a, b = self.quat, other.quat
        return bool(np.allclose(a, b, atol=atol) or np.allclose(a, -b, atol=atol))

    def __repr__(self) -> str:
        return f"Rotation(w={self.w:.12g}, x={self.x:.12g}, y={self.y:.12g}, z={self.z:.12g})"


def _vec3(v, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite, got {arr!r}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """World-from-camera rigid transform (translation in meters)."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))

    @classmethod
    def identity(cls) -> Pose:
        return cls(Rotation.identity(), np.zeros(3))

    def compose(self, other: Pose | RelativePose) -> Pose:
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        r = self.rotation @ other.rotation
        t = self.rotation.apply(other.translation) + self.translation
        return Pose(r, t)

    def inverse(self) -> Pose:
        rinv = self.rotation.inverse()
        return Pose(rinv, -rinv.apply(self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.rotation.apply(points) + self.translation

    def as_matrix(self) -> np.ndarray:
        """3x4 ``[R | t]`` matrix."""
        return np.hstack([self.rotation.as_matrix(), self.translation[:, None]])

    def allclose(self, other: Pose | RelativePose, atol: float = 1e-9) -> bool:
        return self.rotation.allclose(other.rotation, atol) and bool(
            np.allclose(self.translation, other.translation, atol=atol)
        )

    def to_dict(self) -> dict:
        return pose_to_dict(self)


@dataclass(frozen=True, eq=False)
class RelativePose(Pose):
    """Pose of a target camera expressed in the source camera frame."""

    def inverse(self) -> RelativePose:
        p = Pose.inverse(self)
        return RelativePose(p.rotation, p.translation)


def relative_pose(source: Pose, target: Pose) -> RelativePose:
    """Transform taking target-camera coordinates to source-camera coordinates.

    ``source.compose(relative_pose(source, target))`` reproduces ``target``.
    """
    rinv = source.rotation.inverse()
    return RelativePose(rinv @ target.rotation, rinv.apply(target.translation - source.translation))


def rotation_error_deg(a: Rotation, b: Rotation) -> float:
    """Geodesic angle between two rotations, in degrees within [0, 180]."""
    rel = a.as_matrix().T @ b.as_matrix()
    c = (np.trace(rel) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_angle_error_deg(a: Sequence[float], b: Sequence[float]) -> float:
    """Angle between two translation directions (scale is ignored).

    Raises :class:`DegenerateTranslation` when either vector is shorter
    than ``DEGENERATE_NORM``; callers decide how to score that case.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < DEGENERATE_NORM or nb < DEGENERATE_NORM:
        raise DegenerateTranslation(bool(na < DEGENERATE_NORM), bool(nb < DEGENERATE_NORM))
    c = float(np.dot(a, b) / (na * nb))
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def yaw_of(r: Rotation) -> float:
    """Azimuth in [0, 360) of the rotated forward axis on the ground plane."""
    fwd = r.apply(np.array([1.0, 0.0, 0.0]))
    horiz = math.hypot(fwd[0], fwd[1])
    if horiz < GIMBAL_TOL:
        raise GimbalDegenerate("forward axis is (nearly) vertical; yaw undefined")
    yaw = math.degrees(math.atan2(fwd[1], fwd[0])) % 360.0
    # -1e-17 % 360 rounds up to 360.0
    return 0.0 if yaw >= 360.0 else yaw


def wrap_deg(angle: float | np.ndarray) -> float | np.ndarray:
    """Wrap degrees into [-180, 180)."""
    wrapped = (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0
    wrapped = np.where(wrapped >= 180.0, wrapped - 360.0, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def signed_yaw_of(r: Rotation) -> float:
    """Yaw in [-180, 180)."""
    return wrap_deg(yaw_of(r))


def _chordal_cost(q: np.ndarray, quats: np.ndarray) -> float:
    d_plus = np.sum((quats - q) ** 2, axis=1)
    d_minus = np.sum((quats + q) ** 2, axis=1)
    return float(np.sum(np.minimum(d_plus, d_minus)))


def mean_rotation(rs: Iterable[Rotation]) -> Rotation:
    """Chordal L2 mean of rotations.

    Signs of the input quaternions are aligned with the dominant
    eigenvector of ``sum(q q^T)`` (which does not depend on input order),
    averaged, and renormalized.  Realignment is repeated until the sign
    pattern is stable, which makes the result a stationary point of
    ``sum_i min(|q - q_i|^2, |q + q_i|^2)``.
    """
    quats = np.array([r.quat for r in rs], dtype=float)
    if quats.size == 0:
        raise EmptyInput("mean_rotation needs at least one rotation")
    # sort rows so floating point summation order is input-order independent
    quats = quats[np.lexsort(quats.T[::-1])]
    _, vecs = np.linalg.eigh(quats.T @ quats)
    ref = vecs[:, -1]
    signs = None
    for _ in range(10):
        new_signs = np.where(quats @ ref >= 0.0, 1.0, -1.0)
        if signs is not None and np.array_equal(new_signs, signs):
            break
        signs = new_signs
        mean = (quats * signs[:, None]).sum(axis=0)
        if np.linalg.norm(mean) < 1e-12:
            break
        ref = mean / np.linalg.norm(mean)
    return Rotation.from_quat(ref)


# -- serialization ---------------------------------------------------------


def pose_to_dict(p: Pose) -> dict:
    return {
        "qw": p.rotation.w,
        "qx": p.rotation.x,
        "qy": p.rotation.y,
        "qz": p.rotation.z,
        "tx": float(p.translation[0]),
        "ty": float(p.translation[1]),
        "tz": float(p.translation[2]),
    }


def pose_from_dict(d: dict, cls=Pose, path: str = "") -> Pose:
    try:
        rot = Rotation(d["qw"], d["qx"], d["qy"], d["qz"])
        return cls(rot, [d["tx"], d["ty"], d["tz"]])
    except KeyError as exc:
        raise SchemaError(f"missing pose field {exc.args[0]!r}", path) from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid pose: {exc}", path) from None


def read_trajectory(path: str | Path) -> list[tuple[float, Pose]]:
    """Read a pose trajectory: a JSON array of
    ``{timestamp_s, qw, qx, qy, qz, tx, ty, tz}`` records."""
    records = json.loads(Path(path).read_text())
    if not isinstance(records, list):
        raise SchemaError("trajectory must be a JSON array")
    out = []
    prev = -math.inf
    for i, rec in enumerate(records):
        try:
            ts = float(rec["timestamp_s"])
        except (KeyError, TypeError, ValueError):
            raise SchemaError("missing or invalid timestamp_s", f"[{i}].timestamp_s") from None
        if not ts > prev:
            raise SchemaError("timestamps must be strictly increasing", f"[{i}].timestamp_s")
        prev = ts
        out.append((ts, pose_from_dict(rec, path=f"[{i}]")))
    return out


def write_trajectory(path: str | Path, trajectory: Sequence[tuple[float, Pose]]) -> None:
    prev = -math.inf
    records = []
    for ts, pose in trajectory:
        if not ts > prev:
            raise ValueError("timestamps must be strictly increasing")
        prev = ts
        records.append({"timestamp_s": float(ts), **pose_to_dict(pose)})
    Path(path).write_text(json.dumps(records, indent=1) + "\n")
