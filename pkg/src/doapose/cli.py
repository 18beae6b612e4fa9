"""Command-line interface.

Exit codes: 0 success, 2 parse error, 3 I/O failure, 4 channel/geometry
mismatch, 5 manifest or prediction schema violation, 6 incompatible runs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .audio_io import SampleRateMismatch, read_wav
from .doa import MusicConfig, doa_peaks, music_spectrum, read_geometry
from .dsp import StftConfig, stft
from .errors import (
    IdMismatch,
    IncompatibleRuns,
    ModalityMismatch,
    SchemaError,
    TooFewChannels,
)
from .evaluation import MetricsReport, evaluate_run, format_table
from .formats import FORMAT_VERSION, check_version, dump_line, dumps, sha256_file
from .pipeline import CLI_METHODS, predict_records, records_to_predictions
from .sim import DatasetSpec, generate_dataset, read_manifest
from .svg import polar_plot, sweep_plot

log = logging.getLogger("doapose")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_MODALITY = 4
EXIT_SCHEMA = 5
EXIT_INCOMPATIBLE = 6

CONFIG_NAME = "resolved_config.json"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _load_json(path: str | Path, code: int = EXIT_PARSE):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(code, f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _resolve(args: argparse.Namespace, keys: dict) -> dict:
    """Flags override ``--config`` values, which override built-in defaults."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_json(args.config)
        if not isinstance(file_cfg, dict):
            raise CliError(EXIT_PARSE, f"{args.config}: config must be a JSON object")
        for key in file_cfg:
            if key not in keys:
                raise CliError(EXIT_PARSE, f"{args.config}: unknown config key '{key}'")
    out = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else file_cfg.get(key, default)
    return out


def _write_snapshot(out_dir: Path, command: str, resolved: dict) -> None:
    # thread count and output location do not influence results, so they are left out
    snapshot = {k: v for k, v in resolved.items() if k not in ("threads", "output")}
    snapshot.update(command=command, format_version=FORMAT_VERSION)
    (out_dir / CONFIG_NAME).write_text(dumps(snapshot) + "\n")


def _out_dir(path: str | None) -> Path:
    out = Path(path or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc.strerror or exc}") from None
    return out


def _music_cfg(resolved: dict) -> MusicConfig:
    return MusicConfig(
        num_sources=int(resolved["num_sources"]),
        freq_band=tuple(float(v) for v in resolved["band"]),
    )


# -- commands ------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {"seed": None, "threads": 1, "output": None})
    raw = _load_json(args.spec)
    if isinstance(raw, dict) and resolved["seed"] is not None:
        raw = dict(raw, master_seed=int(resolved["seed"]))
    try:
        spec = DatasetSpec.from_dict(raw)
    except SchemaError as exc:
        raise CliError(EXIT_PARSE, f"{args.spec}: {exc}") from None
    out = _out_dir(resolved["output"])
    try:
        manifest = generate_dataset(spec, out, threads=int(resolved["threads"]))
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from None
    _write_snapshot(out, "simulate", {"spec": spec.to_dict()})
    print(manifest)
    return EXIT_OK


def cmd_doa(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {"num_sources": 1, "band": [300.0, 8000.0], "peaks": 1})
    try:
        geom = read_geometry(args.geometry)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.geometry}: {exc}") from None
    except SchemaError as exc:
        raise CliError(EXIT_PARSE, f"{args.geometry}: {exc}") from None
    try:
        clip = read_wav(args.wav)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read {args.wav}: {exc}") from None
    if clip.n_channels < 2:
        raise CliError(EXIT_MODALITY, f"TooFewChannels: {args.wav} has {clip.n_channels} channel(s); MUSIC needs >= 2")
    if clip.n_channels != geom.n_mics:
        raise CliError(
            EXIT_MODALITY,
            f"{args.wav} has {clip.n_channels} channels but {args.geometry} lists {geom.n_mics} microphones",
        )
    try:
        spectrum = music_spectrum(stft(clip, StftConfig()), geom, _music_cfg(resolved))
    except (TooFewChannels, ModalityMismatch) as exc:
        raise CliError(EXIT_MODALITY, str(exc)) from None
    meta = dict(spectrum.meta, peaks_deg=doa_peaks(spectrum, int(resolved["peaks"])))
    text = type(spectrum)(spectrum.values, meta).to_csv()
    try:
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        if args.plot:
            Path(args.plot).write_text(polar_plot(spectrum.values, f"DOA spectrum: {Path(args.wav).name}"))
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from None
    return EXIT_OK


def _read_manifest(path: str):
    try:
        return read_manifest(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except SchemaError as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: {exc}") from None


def cmd_estimate(args: argparse.Namespace) -> int:
    resolved = _resolve(
        args,
        {
            "method": "audio",
            "weight": 0.5,
            "sigma": 0.0,
            "seed": 0,
            "threads": 1,
            "num_sources": 1,
            "band": [300.0, 8000.0],
            "output": None,
        },
    )
    if resolved["method"] not in CLI_METHODS:
        raise CliError(EXIT_PARSE, f"unknown method {resolved['method']!r}")
    if not 0.0 <= float(resolved["weight"]) <= 1.0:
        raise CliError(EXIT_PARSE, "--weight must be within [0, 1]")
    if float(resolved["sigma"]) < 0:
        raise CliError(EXIT_PARSE, "--sigma must be >= 0")
    manifest = _read_manifest(args.manifest)
    try:
        records = predict_records(
            manifest,
            resolved["method"],
            weight=float(resolved["weight"]),
            sigma_deg=float(resolved["sigma"]),
            seed=int(resolved["seed"]),
            cfg=_music_cfg(resolved),
            threads=int(resolved["threads"]),
        )
    except (OSError, SampleRateMismatch) as exc:
        raise CliError(EXIT_IO, f"cannot read audio: {exc}") from None
    except (TooFewChannels, ModalityMismatch) as exc:
        raise CliError(EXIT_MODALITY, str(exc)) from None
    out = _out_dir(resolved["output"])
    try:
        (out / "predictions.jsonl").write_text("".join(dump_line(r) + "\n" for r in records))
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from None
    snapshot = dict(resolved, manifest_sha256=sha256_file(args.manifest))
    _write_snapshot(out, "estimate", snapshot)
    print(out / "predictions.jsonl")
    return EXIT_OK


def _read_predictions(path: str):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    records = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_SCHEMA, f"{path}: line {i}: invalid JSON: {exc.msg}") from None
    try:
        return records, records_to_predictions(records)
    except SchemaError as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: {exc}") from None


def _uniform(records: list[dict], key: str):
    values = {json.dumps(r.get(key)) for r in records}
    return records[0].get(key) if len(values) == 1 and records else None


def cmd_evaluate(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {"output": None})
    manifest = _read_manifest(args.manifest)
    records, preds = _read_predictions(args.predictions)
    meta = {
        "dataset_sha256": sha256_file(args.manifest),
        "sigma_deg": _uniform(records, "sigma_deg"),
        "weight": _uniform(records, "weight"),
    }
    try:
        report = evaluate_run(manifest, preds, meta=meta)
    except IdMismatch as exc:
        raise CliError(EXIT_SCHEMA, f"IdMismatch: {exc}") from None
    out = _out_dir(resolved["output"])
    try:
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.table())
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from None
    _write_snapshot(
        out,
        "evaluate",
        {"manifest_sha256": meta["dataset_sha256"], "predictions_sha256": sha256_file(args.predictions)},
    )
    sys.stdout.write(report.table())
    return EXIT_OK


def load_run_reports(run_dirs) -> list[MetricsReport]:
    reports = []
    for d in run_dirs:
        path = Path(d) / "report.json" if Path(d).is_dir() else Path(d)
        data = _load_json(path, EXIT_SCHEMA)
        try:
            check_version(data)
            reports.append(MetricsReport.from_dict(data))
        except SchemaError as exc:
            raise CliError(EXIT_SCHEMA, f"{path}: {exc}") from None
    hashes = {r.meta.get("dataset_sha256") for r in reports}
    if len(hashes) > 1:
        raise IncompatibleRuns("runs were evaluated on different datasets: " + ", ".join(sorted(map(str, hashes))))
    return reports


def cmd_report(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {"output": None})
    try:
        reports = load_run_reports(args.run_dirs)
    except IncompatibleRuns as exc:
        raise CliError(EXIT_INCOMPATIBLE, str(exc)) from None
    table = format_table(reports)
    series: dict[str, list[tuple[float, float]]] = {}
    for r in reports:
        if r.meta.get("sigma_deg") is not None:
            series.setdefault(r.method, []).append((float(r.meta["sigma_deg"]), r.mae_yaw_deg))
    out = _out_dir(resolved["output"])
    summary = {
        "format_version": FORMAT_VERSION,
        "dataset_sha256": reports[0].meta.get("dataset_sha256"),
        "rows": [
            {"method": r.method, "sigma_deg": r.meta.get("sigma_deg"), "auc": r.to_dict()["auc"], "mae_yaw_deg": r.mae_yaw_deg}
            for r in reports
        ],
    }
    try:
        (out / "comparison.txt").write_text(table)
        (out / "comparison.json").write_text(dumps(summary) + "\n")
        (out / "sweep.svg").write_text(sweep_plot(series))
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from None
    sys.stdout.write(table)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="doapose", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, output_help="output directory"):
        sp.add_argument("--config", help="JSON file with default values for the flags")
        sp.add_argument("--output", help=output_help)

    sp = sub.add_parser("simulate", help="render a simulated dataset from a JSON spec")
    sp.add_argument("spec")
    common(sp)
    sp.add_argument("--seed", type=int, help="override the spec's master_seed")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("doa", help="DOA spectrum of a multichannel WAV")
    sp.add_argument("wav")
    sp.add_argument("geometry")
    common(sp, "CSV destination (default: stdout)")
    sp.add_argument("--plot", help="write an SVG polar plot here")
    sp.add_argument("--num-sources", dest="num_sources", type=int)
    sp.add_argument("--band", nargs=2, type=float, metavar=("LO", "HI"))
    sp.add_argument("--peaks", type=int, help="number of peaks to list in the CSV header")
    sp.set_defaults(func=cmd_doa)

    sp = sub.add_parser("estimate", help="predict relative yaw for every pair of a manifest")
    sp.add_argument("manifest")
    common(sp)
    sp.add_argument("--method", choices=sorted(CLI_METHODS))
    sp.add_argument("--weight", type=float, help="audio weight for --method fused")
    sp.add_argument("--sigma", type=float, help="prior corruption in degrees")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--num-sources", dest="num_sources", type=int)
    sp.add_argument("--band", nargs=2, type=float, metavar=("LO", "HI"))
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("evaluate", help="score predictions against a manifest")
    sp.add_argument("manifest")
    sp.add_argument("predictions")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("report", help="compare evaluated runs and plot MAE against sigma")
    sp.add_argument("run_dirs", nargs="+")
    common(sp)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    level = os.environ.get("DOAPOSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"doapose {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
