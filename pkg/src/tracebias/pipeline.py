"""Batch stages behind the CLI: train, classify, segment, analyze.

Each stage reads files named by a :class:`RunConfig` and returns file
contents as strings or bytes; writing them out is left to the caller.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .core import ConfigError, PipelineConfig
from .forest import (ForestConfig, TrainingError, best_threshold, cross_validate, load_model, model_to_bytes,
                     train, unique_rows)
from .ingest import (IngestError, ParticipantTrace, load_app_catalog, load_ground_truth, load_stems,
                     parse_trace_file, read_lexicon)
from .metrics import (bundle_total, duration_histogram, entangle_report, filter_by_duration,
                      fit_lognormal, flatten_vs_weighted_report, flattened_count, unbundle_strata)
from .segmenter import Segment, extract_segments, read_segments_csv, segments_to_csv
from .textfeat import featurize

log = logging.getLogger(__name__)

ANALYSES = ("entangle", "flatten", "bundle")
LABEL_MODES = ("political", "app", "category")


class InputError(ValueError):
    """Input files missing, inconsistent or failing validation."""


@dataclass(frozen=True)
class RunPaths:
    trace: str | None = None
    catalog: str | None = None
    stems: str | None = None
    lexicon: str | None = None
    ground_truth: str | None = None
    model: str | None = None
    labels: str | None = None
    segments: str | None = None
    output_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    paths: RunPaths = field(default_factory=RunPaths)
    trace_format: str = "jsonl"
    cv_folds: int = 5
    tune_threshold: bool = False
    news_category: str = "news"

    def __post_init__(self) -> None:
        if self.trace_format not in ("jsonl", "csv"):
            raise ConfigError(f"trace_format must be jsonl or csv, got {self.trace_format!r}")
        if isinstance(self.cv_folds, bool) or not isinstance(self.cv_folds, int) or self.cv_folds < 2:
            raise ConfigError("cv_folds must be an integer >= 2")

    @classmethod
    def from_dict(cls, raw: dict[str, Any], base_dir: str | Path = ".") -> RunConfig:
        if not isinstance(raw, dict):
            raise ConfigError("run config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        raw = dict(raw)
        raw["pipeline"] = PipelineConfig.from_dict(raw.get("pipeline", {}))
        try:
            raw["forest"] = ForestConfig.from_dict(raw.get("forest", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        paths = raw.get("paths", {})
        unknown = set(paths) - {f.name for f in fields(RunPaths)}
        if unknown:
            raise ConfigError(f"unknown path keys: {sorted(unknown)}")
        base = Path(base_dir)
        raw["paths"] = RunPaths(**{k: (str(base / v) if v is not None else None) for k, v in paths.items()})
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    def require(self, *names: str) -> None:
        """Fail early unless each named input path is set and exists."""
        for name in names:
            value = getattr(self.paths, name)
            if value is None:
                raise InputError(f"paths.{name} is required for this command")
            if not Path(value).is_file():
                raise InputError(f"paths.{name}: no such file {value}")


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_traces(cfg: RunConfig) -> list[ParticipantTrace]:
    traces, report = parse_trace_file(cfg.paths.trace, cfg.trace_format)
    if report.rejected:
        first = report.rejected[0]
        raise InputError(f"{cfg.paths.trace}: {report.records_rejected} rejected lines "
                         f"(first: line {first[0]}: {first[1]})")
    return traces


def _lexicon(cfg: RunConfig):
    return read_lexicon(cfg.paths.lexicon) if cfg.paths.lexicon else None


# -- train ------------------------------------------------------------------


def train_stage(cfg: RunConfig, threads: int = 1) -> tuple[bytes, str]:
    """Cross-validate, fit the final forest and return (model bytes, CV report JSON)."""
    cfg.require("ground_truth")
    stems = load_stems(cfg.paths.stems)
    labeled, report = load_ground_truth(cfg.paths.ground_truth)
    if report.rejected:
        first = report.rejected[0]
        raise InputError(f"{cfg.paths.ground_truth}: {report.records_rejected} rejected lines "
                         f"(first: line {first[0]}: {first[1]})")
    X = featurize([lr.record for lr in labeled], stems, _lexicon(cfg))
    y = np.array([lr.political for lr in labeled], dtype=bool)
    if len(y) == 0 or y.all() or not y.any():
        raise TrainingError(f"{cfg.paths.ground_truth}: ground truth contains a single class "
                            f"({int(y.sum())} positive of {len(y)}); a classifier needs both")
    log.info("training on %d examples (%d positive)", len(y), int(y.sum()))
    cv = cross_validate((X, y), cfg.forest, cfg.cv_folds, threads)
    model = train((X, y), cfg.forest, threads)
    threshold = cfg.forest.threshold
    if cfg.tune_threshold:
        threshold = best_threshold(cv.scores, y)
        model = model.with_threshold(threshold)
    body = {
        "n_examples": int(len(y)),
        "n_positive": int(y.sum()),
        "base_rate": float(y.mean()),
        "feature_count": int(X.shape[1]),
        "threshold": threshold,
        "threshold_tuned": cfg.tune_threshold,
        "cross_validation": cv.to_dict(),
    }
    return model_to_bytes(model), _dumps(body)


# -- classify ---------------------------------------------------------------


def classify_stage(cfg: RunConfig, model_path: str | None = None, threads: int = 1) -> str:
    """Per-record labels as JSONL, in participant then timestamp order."""
    model_path = model_path or cfg.paths.model
    if model_path is None:
        raise InputError("no model given")
    cfg.require("trace")
    model = load_model(model_path)
    stems = load_stems(cfg.paths.stems)
    if len(stems) != model.feature_count:
        raise InputError(f"model expects {model.feature_count} features but stem list has {len(stems)}")
    traces = _load_traces(cfg)
    records = [r for t in traces for r in t.records]
    X = featurize(records, stems, _lexicon(cfg))
    if len(X):
        first, inverse = unique_rows(X)
        labels, scores = model.predict_many(X[first], threads)
        labels, scores = labels[inverse], scores[inverse]
    else:
        labels, scores = np.zeros(0, dtype=bool), np.zeros(0)
    out = io.StringIO()
    for r, lbl, s in zip(records, labels.tolist(), scores.tolist()):
        out.write(json.dumps({"participant_id": r.participant_id, "ts_ms": r.ts_ms,
                              "political": lbl, "score": s}) + "\n")
    return out.getvalue()


def read_labels(path: str | Path) -> dict[tuple[str, int], bool]:
    labels: dict[tuple[str, int], bool] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = (obj["participant_id"], obj["ts_ms"])
                    value = obj["political"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise InputError(f"{path}:{lineno}: bad label line ({exc})") from None
                if not isinstance(value, bool):
                    raise InputError(f"{path}:{lineno}: political must be boolean")
                if key in labels:
                    raise InputError(f"{path}:{lineno}: duplicate label for {key}")
                labels[key] = value
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return labels


# -- segment ----------------------------------------------------------------


def segment_stage(cfg: RunConfig, labels_path: str | None = None, label_by: str = "political") -> str:
    if label_by not in LABEL_MODES:
        raise ConfigError(f"label_by must be one of {LABEL_MODES}")
    cfg.require("trace")
    traces = _load_traces(cfg)
    if label_by == "political":
        labels = read_labels(labels_path or cfg.paths.labels)
        missing = [(r.participant_id, r.ts_ms) for t in traces for r in t.records
                   if (r.participant_id, r.ts_ms) not in labels]
        if missing:
            raise InputError(f"{len(missing)} trace records have no label (first: {missing[0]})")

        def labeler(r):
            return labels[(r.participant_id, r.ts_ms)]
    elif label_by == "app":
        def labeler(r):
            return r.app_id or ""
    else:
        cfg.require("catalog")
        catalog = load_app_catalog(cfg.paths.catalog, cfg.news_category)

        def labeler(r):
            return catalog.category_of(r.app_id)
    return segments_to_csv(extract_segments(traces, cfg.pipeline, labeler))


# -- analyze ----------------------------------------------------------------


def _csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def analyze_entangle(cfg: RunConfig, labels: dict[tuple[str, int], bool]) -> tuple[dict, dict[str, str]]:
    cfg.require("trace", "catalog")
    catalog = load_app_catalog(cfg.paths.catalog, cfg.news_category)
    traces = _load_traces(cfg)
    rows = []
    for t in traces:
        for r in t.records:
            key = (r.participant_id, r.ts_ms)
            if key not in labels:
                raise InputError(f"trace record {key} has no label")
            rows.append((r.participant_id, labels[key], catalog.is_news(r.app_id)))
    rep = entangle_report(rows)
    table = _csv(
        ["owner", "political_news", "political_other", "nonpolitical_news", "nonpolitical_other",
         "p_political", "p_news", "p_both", "p_news_given_political", "p_nonpolitical_given_news"],
        [[t.owner, t.political_news, t.political_other, t.nonpolitical_news, t.nonpolitical_other,
          t.p_political, t.p_news, t.p_both, t.p_news_given_political, t.p_nonpolitical_given_news]
         for t in [*rep.participants, rep.pooled]],
    )
    return rep.to_dict(), {"crosstab.csv": table}


def _by_participant(segments: list[Segment]) -> dict[str, list[Segment]]:
    out: dict[str, list[Segment]] = {}
    for s in segments:
        out.setdefault(s.participant_id, []).append(s)
    return out


def analyze_flatten(cfg: RunConfig, political: list[Segment]) -> tuple[dict, dict[str, str]]:
    pc = cfg.pipeline
    body: dict[str, Any] = {"n_segments": len(political)}
    tables: dict[str, str] = {}
    if not political:
        return body, tables
    pooled = duration_histogram(political, pc.histogram_bin_s, "pooled")
    per = duration_histogram(political, pc.histogram_bin_s, "participant")
    body["single_frame_share"] = flattened_count(political, lambda s: s.frame_count == 1) / len(political)
    body["histogram"] = pooled[0].to_dict()
    body["lognormal_fit"] = fit_lognormal(s.duration_s for s in political).to_dict() if len(political) >= 2 else None
    body["counts_at_least_s"] = [
        {"min_s": b, "count": len(filter_by_duration(political, min_s=b))} for b in pc.strata_bounds_s
    ]
    by_pid = _by_participant(political)
    if len(by_pid) >= 2:
        ranking = flatten_vs_weighted_report(by_pid)
        body["ranking"] = {"n_inversions": len(ranking.inversions),
                           "n_pairs": len(by_pid) * (len(by_pid) - 1) // 2}
        tables["ranking.csv"] = _csv(
            ["participant_id", "segment_count", "total_duration_s", "count_rank", "duration_rank"],
            [[r.participant_id, r.segment_count, r.total_duration_s, r.count_rank, r.duration_rank]
             for r in ranking.rows],
        )
    tables["histogram.csv"] = _csv(
        ["owner", "bin_upper_s", "count", "percent"],
        [list(row) for h in [*pooled, *per] for row in h.rows()],
    )
    return body, tables


def analyze_bundle(cfg: RunConfig, political: list[Segment]) -> tuple[dict, dict[str, str]]:
    strata = unbundle_strata(political, cfg.pipeline.strata_bounds_s)
    body = {"total_duration_s": bundle_total(political), "strata": strata.to_dict()}
    table = _csv(
        ["lower_s", "upper_s", "count", "count_share", "duration_s", "duration_share"],
        [[s.lower_s, s.upper_s, s.count, s.count_share, s.duration_s, s.duration_share] for s in strata.strata],
    )
    return body, {"strata.csv": table}


def analyze_stage(cfg: RunConfig, segments_path: str | None = None, labels_path: str | None = None,
                  which: str = "all") -> dict[str, str]:
    """Report JSON plus flat CSV tables, keyed by output file name."""
    wanted = ANALYSES if which == "all" else (which,)
    if any(w not in ANALYSES for w in wanted):
        raise ConfigError(f"unknown analysis {which!r}")
    report: dict[str, Any] = {"pipeline": cfg.pipeline.to_dict()}
    files: dict[str, str] = {}
    if "entangle" in wanted:
        labels = read_labels(labels_path or cfg.paths.labels)
        report["entangle"], t = analyze_entangle(cfg, labels)
        files.update(t)
    if "flatten" in wanted or "bundle" in wanted:
        seg_path = segments_path or cfg.paths.segments
        if seg_path is None or not Path(seg_path).is_file():
            raise InputError(f"segments file not found: {seg_path}")
        try:
            segments = read_segments_csv(seg_path)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        political = [s for s in segments if s.label is True]
        if "flatten" in wanted:
            report["flatten"], t = analyze_flatten(cfg, political)
            files.update(t)
        if "bundle" in wanted:
            report["bundle"], t = analyze_bundle(cfg, political)
            files.update(t)
    files["report.json"] = _dumps(report)
    return files


def run_config_template(trace: str, catalog: str, ground_truth: str, pipeline: PipelineConfig,
                        forest: ForestConfig | None = None, output_dir: str = ".") -> dict[str, Any]:
    forest = forest or ForestConfig()
    return {
        "pipeline": pipeline.to_dict(),
        "forest": forest.to_dict(),
        "paths": {
            "trace": trace, "catalog": catalog, "ground_truth": ground_truth,
            "model": "model.bin", "labels": "labels.jsonl", "segments": "segments_classified.csv",
            "output_dir": output_dir,
        },
        "trace_format": "jsonl",
        "cv_folds": 5,
        "tune_threshold": False,
    }


__all__ = [
    "RunConfig", "RunPaths", "InputError", "IngestError", "train_stage", "classify_stage",
    "segment_stage", "analyze_stage", "read_labels", "run_config_template",
]
