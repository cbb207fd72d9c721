"""Shared record types, pipeline configuration and record validation."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any

MAX_TEXT_BYTES = 1_000_000
UNKNOWN_CATEGORY = "unknown"


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


@dataclass(frozen=True)
class ScreenshotRecord:
    """One captured frame."""

    participant_id: str
    ts_ms: int
    app_id: str | None = None
    text: str = ""

    def __post_init__(self) -> None:
        errors = _record_errors(self.participant_id, self.ts_ms, self.app_id, self.text)
        if errors:
            raise ValueError("; ".join(errors))

    def to_dict(self) -> dict[str, Any]:
        return {
            "participant_id": self.participant_id,
            "ts_ms": self.ts_ms,
            "app_id": self.app_id,
            "text": self.text,
        }


@dataclass(frozen=True)
class LabeledRecord:
    record: ScreenshotRecord
    political: bool


@dataclass(frozen=True)
class PipelineConfig:
    frame_period_s: float = 5.0
    session_gap_s: float = 5.0
    histogram_bin_s: float = 5.0
    strata_bounds_s: tuple[float, ...] = (10.0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "strata_bounds_s", tuple(float(b) for b in self.strata_bounds_s))
        for name in ("frame_period_s", "session_gap_s", "histogram_bin_s"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigError(f"{name} must be a positive number, got {value!r}")
        check_bounds(self.strata_bounds_s)

    @property
    def frame_period_ms(self) -> int:
        return round(self.frame_period_s * 1000)

    @property
    def session_gap_ms(self) -> float:
        return self.session_gap_s * 1000.0

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> PipelineConfig:
        unknown = set(raw) - {"frame_period_s", "session_gap_s", "histogram_bin_s", "strata_bounds_s"}
        if unknown:
            raise ConfigError(f"unknown pipeline keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "frame_period_s": self.frame_period_s,
            "session_gap_s": self.session_gap_s,
            "histogram_bin_s": self.histogram_bin_s,
            "strata_bounds_s": list(self.strata_bounds_s),
        }


def check_bounds(bounds: tuple[float, ...] | list[float]) -> None:
    """Raise ConfigError unless ``bounds`` are positive and strictly ascending."""
    for b in bounds:
        if not b > 0:
            raise ConfigError(f"stratum bounds must be positive, got {b!r}")
    for lo, hi in zip(bounds, bounds[1:]):
        if not lo < hi:
            raise ConfigError(f"stratum bounds must be strictly ascending, got {list(bounds)}")


@dataclass(frozen=True)
class AppCatalog:
    """Maps app ids to store categories; one category is singled out as news."""

    categories: Mapping[str, str] = field(default_factory=dict)
    news_category: str = "news"

    def __post_init__(self) -> None:
        for app_id, category in self.categories.items():
            if not app_id:
                raise ConfigError("empty app_id in catalog")
            if not category:
                raise ConfigError(f"empty category for app {app_id!r}")
        object.__setattr__(self, "categories", MappingProxyType(dict(self.categories)))

    def category_of(self, app_id: str | None) -> str:
        if app_id is None:
            return UNKNOWN_CATEGORY
        return self.categories.get(app_id, UNKNOWN_CATEGORY)

    def is_news(self, app_id: str | None) -> bool:
        return self.category_of(app_id) == self.news_category


def _record_errors(participant_id: Any, ts_ms: Any, app_id: Any, text: Any) -> list[str]:
    errors = []
    if participant_id is None:
        errors.append("missing participant_id")
    elif not isinstance(participant_id, str):
        errors.append("non-string participant_id")
    elif not participant_id:
        errors.append("empty participant_id")
    if ts_ms is None:
        errors.append("missing ts_ms")
    elif isinstance(ts_ms, bool) or not isinstance(ts_ms, int):
        errors.append("non-integer ts_ms")
    elif ts_ms < 0:
        errors.append("negative timestamp")
    if app_id is not None and not isinstance(app_id, str):
        errors.append("non-string app_id")
    if not isinstance(text, str):
        errors.append("non-string text")
    elif len(text) > MAX_TEXT_BYTES // 4 and len(text.encode("utf-8")) > MAX_TEXT_BYTES:
        errors.append("oversized text")
    return errors


def validate_record(raw: Mapping[str, Any]) -> ScreenshotRecord | list[str]:
    """Build a record from a parsed field map, or return every violated rule.

    Missing ``text`` is read as empty and a missing or empty ``app_id`` as
    unknown. Extra keys are ignored.
    """
    participant_id = raw.get("participant_id")
    ts_ms = raw.get("ts_ms")
    app_id = raw.get("app_id") or None
    text = raw.get("text", "")
    if text is None:
        text = ""
    errors = _record_errors(participant_id, ts_ms, app_id, text)
    if errors:
        return errors
    return ScreenshotRecord(participant_id, ts_ms, app_id, text)
