"""Readers for trace files, the app catalog, stem lists and ground-truth labels."""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .core import AppCatalog, ConfigError, LabeledRecord, ScreenshotRecord, validate_record
from .textfeat import StemList, load_lexicon

log = logging.getLogger(__name__)

TRACE_FIELDS = ("participant_id", "ts_ms", "app_id", "text")


class IngestError(Exception):
    """Fatal ingestion failure (unreadable file, bad header, bad catalog)."""


@dataclass(frozen=True)
class ParticipantTrace:
    participant_id: str
    records: tuple[ScreenshotRecord, ...]

    def __post_init__(self) -> None:
        prev = None
        for r in self.records:
            if r.participant_id != self.participant_id:
                raise ValueError(f"record for {r.participant_id!r} in trace of {self.participant_id!r}")
            if prev is not None and r.ts_ms <= prev:
                raise ValueError(f"trace {self.participant_id!r} not strictly ascending at ts_ms={r.ts_ms}")
            prev = r.ts_ms

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class IngestReport:
    lines_read: int = 0
    records_accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    participants: int = 0
    positives: int | None = None

    @property
    def records_rejected(self) -> int:
        return len(self.rejected)

    @property
    def base_rate(self) -> float | None:
        """Share of positive labels, only for ground-truth files."""
        if self.positives is None or not self.records_accepted:
            return None
        return self.positives / self.records_accepted

    def to_dict(self) -> dict[str, Any]:
        out = {
            "lines_read": self.lines_read,
            "records_accepted": self.records_accepted,
            "records_rejected": self.records_rejected,
            "participants": self.participants,
            "rejected": [{"line": n, "reason": why} for n, why in self.rejected],
        }
        if self.positives is not None:
            out["positives"] = self.positives
            out["base_rate"] = self.base_rate
        return out


def _jsonl_rows(path: Path) -> Iterator[tuple[int, dict[str, Any] | str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                yield lineno, "blank line"
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, f"unparseable JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield lineno, "line is not a JSON object"
                continue
            yield lineno, obj


def _csv_rows(path: Path) -> Iterator[tuple[int, dict[str, Any] | str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if tuple(header) != TRACE_FIELDS:
            raise IngestError(f"{path}: expected CSV header {','.join(TRACE_FIELDS)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(TRACE_FIELDS):
                yield lineno, f"expected {len(TRACE_FIELDS)} fields, got {len(row)}"
                continue
            pid, ts, app, text = row
            try:
                ts_val: Any = int(ts)
            except ValueError:
                ts_val = ts
            yield lineno, {"participant_id": pid, "ts_ms": ts_val, "app_id": app or None, "text": text}


def _rows(path: Path, fmt: str) -> Iterator[tuple[int, dict[str, Any] | str]]:
    if fmt == "jsonl":
        return _jsonl_rows(path)
    if fmt == "csv":
        return _csv_rows(path)
    raise ValueError(f"unknown trace format {fmt!r}")


def _group(records: Iterable[ScreenshotRecord]) -> list[ParticipantTrace]:
    by_pid: dict[str, list[ScreenshotRecord]] = {}
    for r in records:
        by_pid.setdefault(r.participant_id, []).append(r)
    return [
        ParticipantTrace(pid, tuple(sorted(recs, key=lambda r: r.ts_ms)))
        for pid, recs in sorted(by_pid.items())
    ]


def _ingest(path: Path, fmt: str, label_key: str | None):
    report = IngestReport(positives=0 if label_key else None)
    seen: set[tuple[str, int]] = set()
    accepted: list[ScreenshotRecord] = []
    labels: list[bool] = []
    try:
        for lineno, row in _rows(path, fmt):
            report.lines_read += 1
            if isinstance(row, str):
                report.rejected.append((lineno, row))
                continue
            result = validate_record(row)
            errors = result if isinstance(result, list) else []
            label = None
            if label_key:
                label = row.get(label_key)
                if label_key not in row:
                    errors = errors + [f"missing {label_key}"]
                elif not isinstance(label, bool):
                    errors = errors + [f"non-boolean {label_key}"]
            if errors:
                report.rejected.append((lineno, "; ".join(errors)))
                continue
            key = (result.participant_id, result.ts_ms)
            if key in seen:
                report.rejected.append((lineno, f"duplicate timestamp {result.ts_ms} for {result.participant_id}"))
                continue
            seen.add(key)
            accepted.append(result)
            if label_key:
                labels.append(label)
                report.positives += label
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    report.records_accepted = len(accepted)
    report.participants = len({r.participant_id for r in accepted})
    log.info("%s: %d lines, %d accepted, %d rejected", path, report.lines_read,
             report.records_accepted, report.records_rejected)
    return accepted, labels, report


def parse_trace_file(path: str | Path, format: str = "jsonl") -> tuple[list[ParticipantTrace], IngestReport]:
    """Read, validate, de-duplicate, group and sort a trace file.

    Bad lines are rejected and listed in the report; only I/O problems and a
    bad CSV header are fatal. Traces come back ordered by participant id.
    """
    records, _, report = _ingest(Path(path), format, None)
    return _group(records), report


def load_ground_truth(path: str | Path, label_key: str = "political") -> tuple[list[LabeledRecord], IngestReport]:
    records, labels, report = _ingest(Path(path), "jsonl", label_key)
    return [LabeledRecord(r, y) for r, y in zip(records, labels)], report


def write_trace_jsonl(traces: Iterable[ParticipantTrace], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            for r in trace.records:
                fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def load_app_catalog(path: str | Path, news_category: str = "news") -> AppCatalog:
    categories: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["app_id", "category"]:
                raise IngestError(f"{path}: expected header app_id,category")
            for lineno, row in enumerate(reader, 2):
                if not row:
                    continue
                if len(row) != 2:
                    raise IngestError(f"{path}:{lineno}: expected 2 fields")
                app_id, category = row[0].strip(), row[1].strip()
                if not category:
                    raise IngestError(f"{path}:{lineno}: empty category for {app_id!r}")
                if app_id in categories:
                    raise IngestError(f"{path}:{lineno}: duplicate app_id {app_id!r}")
                categories[app_id] = category
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    try:
        return AppCatalog(categories, news_category)
    except ConfigError as exc:
        raise IngestError(f"{path}: {exc}") from exc


def load_stems(path: str | Path | None = None) -> StemList:
    """Load a stem list; with no path, the bundled 154-stem political list."""
    if path is None:
        text = resources.files("tracebias").joinpath("data/stems.txt").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IngestError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return StemList.from_lines(lines)


def read_lexicon(path: str | Path) -> frozenset[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return load_lexicon(fh)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
