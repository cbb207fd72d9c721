"""Session splitting at timestamp gaps and run-length segment extraction."""

from __future__ import annotations

import csv
import io
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass
from itertools import groupby
from typing import Any

from .core import PipelineConfig, ScreenshotRecord
from .ingest import ParticipantTrace

SEGMENT_FIELDS = ("participant_id", "session_index", "label", "start_ts_ms", "frame_count", "duration_s")

Labeler = Callable[[ScreenshotRecord], Hashable]


@dataclass(frozen=True)
class Session:
    participant_id: str
    index: int
    records: tuple[ScreenshotRecord, ...]


@dataclass(frozen=True)
class Segment:
    participant_id: str
    session_index: int
    label: Any
    start_ts_ms: int
    frame_count: int
    duration_s: float

    @classmethod
    def of(cls, participant_id: str, session_index: int, label: Any, start_ts_ms: int,
           frame_count: int, frame_period_s: float) -> Segment:
        return cls(participant_id, session_index, label, start_ts_ms, frame_count,
                   frame_count * frame_period_s)


def sessionize(trace: ParticipantTrace, config: PipelineConfig = PipelineConfig()) -> list[Session]:
    """Split a trace wherever consecutive timestamps differ by more than the gap."""
    gap_ms = config.session_gap_ms
    sessions: list[Session] = []
    current: list[ScreenshotRecord] = []
    prev = None
    for r in trace.records:
        if prev is not None:
            if r.ts_ms <= prev:
                raise ValueError(f"trace {trace.participant_id!r} is not strictly ascending at ts_ms={r.ts_ms}")
            if r.ts_ms - prev > gap_ms:
                sessions.append(Session(trace.participant_id, len(sessions), tuple(current)))
                current = []
        current.append(r)
        prev = r.ts_ms
    if current:
        sessions.append(Session(trace.participant_id, len(sessions), tuple(current)))
    return sessions


def segmentize(session: Session, labeler: Labeler, config: PipelineConfig = PipelineConfig()) -> list[Segment]:
    """Maximal runs of equal labels within a session."""
    out = []
    for label, run in groupby(session.records, key=labeler):
        run = list(run)
        out.append(Segment.of(session.participant_id, session.index, label, run[0].ts_ms,
                              len(run), config.frame_period_s))
    return out


def extract_segments(traces: Iterable[ParticipantTrace], config: PipelineConfig,
                     labeler: Labeler) -> list[Segment]:
    return [
        seg
        for trace in traces
        for session in sessionize(trace, config)
        for seg in segmentize(session, labeler, config)
    ]


def format_label(label: Any) -> str:
    if isinstance(label, bool):
        return "true" if label else "false"
    if isinstance(label, tuple):
        return "|".join(format_label(x) for x in label)
    return "" if label is None else str(label)


def parse_label(text: str) -> Any:
    if text == "true":
        return True
    if text == "false":
        return False
    return text


def segments_to_csv(segments: Iterable[Segment]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SEGMENT_FIELDS)
    for s in segments:
        writer.writerow([s.participant_id, s.session_index, format_label(s.label), s.start_ts_ms,
                         s.frame_count, repr(float(s.duration_s))])
    return buf.getvalue()


def read_segments_csv(path) -> list[Segment]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SEGMENT_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(SEGMENT_FIELDS)}")
        out = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(SEGMENT_FIELDS):
                raise ValueError(f"{path}:{lineno}: expected {len(SEGMENT_FIELDS)} fields")
            pid, idx, label, start, count, dur = row
            out.append(Segment(pid, int(idx), parse_label(label), int(start), int(count), float(dur)))
    return out


def check_segments(segments: Sequence[Segment]) -> None:
    """Assert segment invariants: positive counts, ordered, maximal within a session."""
    for a, b in zip(segments, segments[1:]):
        if (a.participant_id, a.session_index) == (b.participant_id, b.session_index):
            if a.label == b.label:
                raise AssertionError(f"adjacent segments share label {a.label!r}")
            if b.start_ts_ms <= a.start_ts_ms:
                raise AssertionError("segments out of order")
    for s in segments:
        if s.frame_count < 1:
            raise AssertionError("segment with no frames")
