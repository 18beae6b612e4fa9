"""Pose-error metrics: AUC@tau on angular errors, yaw MAE and the chance baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateTranslation, EmptyInput, IdMismatch, NonPositiveTau, SchemaError
from .formats import FORMAT_VERSION, check_version, dumps
from .geometry import (
    RelativePose,
    Rotation,
    mean_rotation,
    rotation_error_deg,
    signed_yaw_of,
    translation_angle_error_deg,
    wrap_deg,
)

THRESHOLDS = (5, 10, 20)
FAMILIES = ("rotation", "translation", "total")
MISSING_TRANSLATION_ERROR_DEG = 180.0


def auc_at(errors: Sequence[float], tau: float) -> float:
    """Normalized area under the accuracy curve on ``[0, tau]``.

    With ``a(t)`` the fraction of errors ``<= t``, returns
    ``(1 / tau) * integral_0^tau a(t) dt``.  The accuracy curve is a step
    function, so the integral is exact: each error ``e < tau`` contributes
    ``(tau - e) / n``.
    """
    if not tau > 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise EmptyInput("auc_at needs at least one error")
    if np.any(np.isnan(e)):
        raise ValueError("errors must not be NaN")
    below = e[e < tau]
    return float(np.sum(tau - below) / (e.size * tau))


def yaw_error_deg(pred_deg, truth_deg):
    """Absolute wrapped yaw difference in [0, 180]."""
    return np.abs(wrap_deg(np.asarray(pred_deg, dtype=float) - np.asarray(truth_deg, dtype=float)))


def mae(errors: Sequence[float]) -> float:
    """Mean of absolute yaw errors after wrapping each into [0, 180]."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptyInput("mae needs at least one error")
    return float(np.mean(np.abs(wrap_deg(e))))


@dataclass(frozen=True)
class ErrorSample:
    id: str
    rot_err_deg: float
    trans_err_deg: float
    total_err_deg: float

    def __post_init__(self):
        if min(self.rot_err_deg, self.trans_err_deg) < 0:
            raise ValueError("errors must be non-negative")
        if self.total_err_deg != max(self.rot_err_deg, self.trans_err_deg):
            raise ValueError("total_err_deg must equal max(rotation, translation)")


@dataclass(frozen=True, eq=False)
class Prediction:
    """A predicted relative pose.  ``translation`` is None for rotation-only methods."""

    id: str
    rotation: Rotation
    translation: np.ndarray | None = None
    method: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def yaw_deg(self) -> float:
        return signed_yaw_of(self.rotation)


def translation_error(pred: np.ndarray | None, truth: np.ndarray) -> float:
    """Direction error with the degenerate-vector conventions applied.

    Missing prediction: 180.  Both vectors ~0: 0.  Exactly one ~0: 180.
    """
    if pred is None:
        return MISSING_TRANSLATION_ERROR_DEG
    try:
        return translation_angle_error_deg(pred, truth)
    except DegenerateTranslation as exc:
        return 0.0 if (exc.a_degenerate and exc.b_degenerate) else 180.0


def error_sample(pred: Prediction, truth: RelativePose) -> ErrorSample:
    rot = rotation_error_deg(pred.rotation, truth.rotation)
    trans = translation_error(pred.translation, truth.translation)
    return ErrorSample(pred.id, rot, trans, max(rot, trans))


@dataclass(frozen=True)
class ChancePredictor:
    """Constant predictor emitting the mean ground-truth relative pose."""

    rotation: Rotation
    translation: np.ndarray

    def predict(self, pair_id: str) -> Prediction:
        return Prediction(pair_id, self.rotation, np.array(self.translation), "chance")


def _truth_map(manifest) -> dict[str, RelativePose]:
    if isinstance(manifest, Mapping):
        return dict(manifest)
    return {rec.id: rec.truth for rec in manifest}


def chance_baseline(manifest) -> ChancePredictor:
    """Mean of the truth rotations (chordal) and translations (arithmetic)."""
    truths = list(_truth_map(manifest).values())
    if not truths:
        raise EmptyInput("chance baseline needs a non-empty manifest")
    rot = mean_rotation(t.rotation for t in truths)
    trans = np.mean([t.translation for t in truths], axis=0)
    return ChancePredictor(rot, trans)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    auc: dict
    mae_yaw_deg: float
    n: int
    method: str
    meta: dict = field(default_factory=dict)
    samples: tuple[ErrorSample, ...] = ()

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "method": self.method,
            "n": self.n,
            "auc": {fam: {str(t): v for t, v in sorted(d.items())} for fam, d in self.auc.items()},
            "mae_yaw_deg": self.mae_yaw_deg,
            "meta": self.meta,
            "samples": [
                {"id": s.id, "rot_err_deg": s.rot_err_deg, "trans_err_deg": s.trans_err_deg, "total_err_deg": s.total_err_deg}
                for s in self.samples
            ],
        }

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        check_version(d)
        try:
            auc = {fam: {int(t): float(v) for t, v in d["auc"][fam].items()} for fam in FAMILIES}
            samples = tuple(ErrorSample(**s) for s in d.get("samples", []))
            return cls(auc, float(d["mae_yaw_deg"]), int(d["n"]), str(d["method"]), dict(d.get("meta", {})), samples)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed metrics report: {exc}") from None

    def table(self) -> str:
        return format_table([self])


def evaluate_run(
    manifest,
    predictions: Iterable[Prediction],
    method: str | None = None,
    meta: dict | None = None,
) -> MetricsReport:
    """Score ``predictions`` against the truths in ``manifest``.

    ``manifest`` is a :class:`~doapose.sim.Manifest`, an iterable of records
    with ``id`` and ``truth``, or a mapping id -> truth.  Every id needs
    exactly one prediction.  Predictions without a translation score 180
    degrees of translation error.
    """
    truths = _truth_map(manifest)
    preds: dict[str, Prediction] = {}
    duplicated = []
    for p in predictions:
        if p.id in preds:
            duplicated.append(p.id)
        preds[p.id] = p
    missing = [i for i in truths if i not in preds]
    extra = [i for i in preds if i not in truths]
    if missing or extra or duplicated:
        raise IdMismatch(missing, extra, duplicated)
    if not truths:
        raise EmptyInput("nothing to evaluate")

    ids = sorted(truths)
    samples = tuple(error_sample(preds[i], truths[i]) for i in ids)
    families = {
        "rotation": [s.rot_err_deg for s in samples],
        "translation": [s.trans_err_deg for s in samples],
        "total": [s.total_err_deg for s in samples],
    }
    auc = {fam: {t: auc_at(errs, t) for t in THRESHOLDS} for fam, errs in families.items()}
    yaw_errs = [preds[i].yaw_deg - signed_yaw_of(truths[i].rotation) for i in ids]
    if method is None:
        methods = sorted({preds[i].method for i in ids})
        method = methods[0] if len(methods) == 1 else "+".join(methods)
    report_meta = {
        "auc_normalization": "area divided by tau",
        "translation_metric": "direction angle; missing prediction scores 180",
        "thresholds_deg": list(THRESHOLDS),
    }
    report_meta.update(meta or {})
    return MetricsReport(auc, mae(yaw_errs), len(ids), method, report_meta, samples)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def format_table(reports: Sequence[MetricsReport]) -> str:
    """Aligned plain-text table: one row per report, AUC@5/10/20 per family, then MAE."""
    labels = []
    for r in reports:
        label = r.method
        if "sigma_deg" in r.meta and r.meta["sigma_deg"] is not None:
            label += f" (sigma={r.meta['sigma_deg']:g})"
        labels.append(label)
    width = max([len("Method")] + [len(lbl) for lbl in labels])
    cell = 6
    group = " ".join(f"@{t}".rjust(cell) for t in THRESHOLDS)
    gw = len(group)
    head1 = "Method".ljust(width) + " | " + " | ".join(f.capitalize().center(gw) for f in FAMILIES) + " | " + "MAE yaw"
    head2 = "".ljust(width) + " | " + " | ".join(group for _ in FAMILIES) + " | " + "(deg)".rjust(7)
    lines = [head1, head2, "-" * len(head1)]
    for label, r in zip(labels, reports):
        groups = [" ".join(_fmt(r.auc[f][t]).rjust(cell) for t in THRESHOLDS) for f in FAMILIES]
        lines.append(label.ljust(width) + " | " + " | ".join(groups) + " | " + f"{r.mae_yaw_deg:7.3f}")
    return "\n".join(lines) + "\n"


def parse_prediction(rec: dict, where: str = "") -> Prediction:
    """Build a :class:`Prediction` from one predictions-JSONL record.

    A full ``rotation`` ``[qw, qx, qy, qz]`` takes precedence over
    ``yaw_deg``; ``translation`` is optional.
    """
    if not isinstance(rec, dict):
        raise SchemaError("expected an object", where)
    check_version(rec, f"{where}.format_version" if where else "")
    rid = rec.get("id")
    if not isinstance(rid, str):
        raise SchemaError("missing or non-string id", f"{where}.id")
    try:
        if rec.get("rotation") is not None:
            rotation = Rotation.from_quat([float(v) for v in rec["rotation"]])
        else:
            yaw = float(rec["yaw_deg"])
            if not math.isfinite(yaw):
                raise ValueError("yaw_deg must be finite")
            rotation = Rotation.from_yaw(yaw)
        translation = None
        if rec.get("translation") is not None:
            translation = np.array([float(v) for v in rec["translation"]])
            if translation.shape != (3,):
                raise ValueError("translation needs 3 components")
    except KeyError as exc:
        raise SchemaError("missing key", f"{where}.{exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), where) from None
    meta = {k: rec[k] for k in ("sigma_deg", "weight", "flat_flag") if k in rec}
    return Prediction(rid, rotation, translation, str(rec.get("method", "")), meta)
