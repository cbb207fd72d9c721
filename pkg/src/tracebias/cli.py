"""``tracebias`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 input validation failure, 3 runtime failure.
Data goes to files (or stdout for ``validate``); logs go to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from .core import ConfigError
from .forest import ForestConfig, ModelFileError, TrainingError
from .ingest import IngestError, parse_trace_file
from .pipeline import (InputError, RunConfig, analyze_stage, classify_stage, run_config_template,
                       segment_stage, train_stage)
from .synth import SynthConfig, SynthError, generate

log = logging.getLogger("tracebias")

EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 1, 2, 3
_INPUT_ERRORS = (InputError, IngestError, ConfigError, TrainingError, ModelFileError, SynthError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path: Path, data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _file_hash(path) -> str | None:
    try:
        return _sha256(Path(path).read_bytes())
    except (OSError, TypeError):
        return None


def _emit(outdir: Path, command: str, files: dict[str, bytes | str], config: dict, seed,
          inputs: dict[str, str | None]) -> None:
    """Write outputs atomically, then the run manifest describing them."""
    outputs = {}
    for name, data in files.items():
        write_atomic(outdir / name, data)
        raw = data.encode("utf-8") if isinstance(data, str) else data
        outputs[name] = _sha256(raw)
        log.info("wrote %s", outdir / name)
    manifest = {
        "tool": "tracebias",
        "version": __version__,
        "command": command,
        "config_sha256": _sha256(json.dumps(config, sort_keys=True).encode("utf-8")),
        "seed": seed,
        "inputs": {k: {"path": str(v), "sha256": _file_hash(v)} for k, v in inputs.items() if v},
        "outputs": outputs,
    }
    write_atomic(outdir / f"manifest.{command}.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    overrides = {}
    if getattr(args, "format", None):
        overrides["trace_format"] = args.format
    if getattr(args, "seed", None) is not None:
        overrides["forest"] = replace(cfg.forest, seed=args.seed)
    if args.output:
        overrides["paths"] = replace(cfg.paths, output_dir=args.output)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _config_dict(cfg: RunConfig) -> dict:
    return {"pipeline": cfg.pipeline.to_dict(), "forest": cfg.forest.to_dict(),
            "trace_format": cfg.trace_format, "cv_folds": cfg.cv_folds,
            "tune_threshold": cfg.tune_threshold, "news_category": cfg.news_category}


def cmd_validate(args) -> int:
    _, report = parse_trace_file(args.trace, args.format or "jsonl")
    sys.stdout.write(json.dumps(report.to_dict(), indent=2) + "\n")
    return 0 if not report.rejected else 1


def cmd_train(args) -> int:
    cfg = _run_config(args)
    model, report = train_stage(cfg, args.threads)
    _emit(Path(cfg.paths.output_dir), "train", {"model.bin": model, "cv_report.json": report},
          _config_dict(cfg), cfg.forest.seed,
          {"ground_truth": cfg.paths.ground_truth, "stems": cfg.paths.stems, "lexicon": cfg.paths.lexicon})
    return 0


def cmd_classify(args) -> int:
    cfg = _run_config(args)
    model = args.model or cfg.paths.model
    labels = classify_stage(cfg, model, args.threads)
    _emit(Path(cfg.paths.output_dir), "classify", {"labels.jsonl": labels}, _config_dict(cfg),
          cfg.forest.seed, {"trace": cfg.paths.trace, "model": model, "stems": cfg.paths.stems})
    return 0


def cmd_segment(args) -> int:
    cfg = _run_config(args)
    labels = args.labels or cfg.paths.labels
    out = segment_stage(cfg, labels, args.label_by)
    name = "segments_classified.csv" if args.label_by == "political" else f"segments_{args.label_by}.csv"
    _emit(Path(cfg.paths.output_dir), "segment", {name: out}, _config_dict(cfg), cfg.forest.seed,
          {"trace": cfg.paths.trace, "labels": labels if args.label_by == "political" else None,
           "catalog": cfg.paths.catalog})
    return 0


def cmd_analyze(args) -> int:
    cfg = _run_config(args)
    segments = args.segments or cfg.paths.segments
    labels = args.labels or cfg.paths.labels
    files = analyze_stage(cfg, segments, labels, args.which)
    _emit(Path(cfg.paths.output_dir), "analyze", files, _config_dict(cfg), cfg.forest.seed,
          {"trace": cfg.paths.trace, "catalog": cfg.paths.catalog, "segments": segments, "labels": labels})
    return 0


def demo_config_path():
    return resources.files("tracebias").joinpath("data/demo_synth.json")


def cmd_synth(args) -> int:
    if args.demo:
        raw = json.loads(demo_config_path().read_text(encoding="utf-8"))
    elif args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
    else:
        raise ConfigError("synth needs --config or --demo")
    if not isinstance(raw, dict):
        raise ConfigError("synth config must be a JSON object")
    forest_raw = raw.pop("forest", None)
    if args.seed is not None:
        raw["seed"] = args.seed
    config = SynthConfig.from_dict(raw)
    corpus = generate(config)
    files = corpus.files()
    forest = ForestConfig.from_dict(forest_raw) if forest_raw else ForestConfig(seed=config.seed)
    files["run.json"] = json.dumps(
        run_config_template("trace.jsonl", "catalog.csv", "ground_truth.jsonl", config.pipeline, forest),
        indent=2, sort_keys=True) + "\n"
    files["synth_config.json"] = json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    outdir = Path(args.output or ".")
    _emit(outdir, "synth", files, config.to_dict(), config.seed, {"config": args.config})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tracebias", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tracebias {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run config JSON")
        p.add_argument("--format", choices=("jsonl", "csv"), help="trace file format")
        p.add_argument("--threads", type=int, default=1, help="worker threads (output is identical)")
        p.add_argument("--seed", type=int, help="override the forest seed")
        p.add_argument("--output", help="output directory")

    p = sub.add_parser("validate", help="check a trace file and print the ingest report")
    p.add_argument("trace")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="cross-validate and fit the classifier")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label every trace record")
    common(p)
    p.add_argument("--model")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("segment", help="sessionize and build segments")
    common(p)
    p.add_argument("--labels")
    p.add_argument("--label-by", choices=("political", "app", "category"), default="political")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("analyze", help="entangling / flattening / bundling diagnostics")
    common(p)
    p.add_argument("--segments")
    p.add_argument("--labels")
    p.add_argument("--which", choices=("entangle", "flatten", "bundle", "all"), default="all")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--config", help="synth config JSON")
    p.add_argument("--demo", action="store_true", help="use the bundled demo config")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime failure: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
