"""Entangling, flattening and bundling diagnostics over labeled frames and segments."""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

from .core import check_bounds
from .segmenter import Segment
from .stats import CorrelationResult, pearson_r

POOLED = "pooled"
_BIN_EPS = 1e-9


# -- entangling -------------------------------------------------------------


@dataclass(frozen=True)
class CrossTab:
    """Frame counts of political x news-app for one participant (or pooled)."""

    owner: str
    political_news: int = 0
    political_other: int = 0
    nonpolitical_news: int = 0
    nonpolitical_other: int = 0

    @property
    def total(self) -> int:
        return self.political_news + self.political_other + self.nonpolitical_news + self.nonpolitical_other

    @property
    def political(self) -> int:
        return self.political_news + self.political_other

    @property
    def news(self) -> int:
        return self.political_news + self.nonpolitical_news

    def _frac(self, num: int, den: int) -> float:
        return num / den if den else 0.0

    @property
    def p_political(self) -> float:
        return self._frac(self.political, self.total)

    @property
    def p_news(self) -> float:
        return self._frac(self.news, self.total)

    @property
    def p_both(self) -> float:
        return self._frac(self.political_news, self.total)

    @property
    def p_news_given_political(self) -> float:
        return self._frac(self.political_news, self.political)

    @property
    def p_nonpolitical_given_news(self) -> float:
        return self._frac(self.nonpolitical_news, self.news)

    @property
    def undefined(self) -> list[str]:
        """Names of proportions whose denominator is zero (reported as 0)."""
        flags = []
        if not self.total:
            flags += ["p_political", "p_news", "p_both"]
        if not self.political:
            flags.append("p_news_given_political")
        if not self.news:
            flags.append("p_nonpolitical_given_news")
        return flags

    def __add__(self, other: CrossTab) -> CrossTab:
        return CrossTab(
            POOLED,
            self.political_news + other.political_news,
            self.political_other + other.political_other,
            self.nonpolitical_news + other.nonpolitical_news,
            self.nonpolitical_other + other.nonpolitical_other,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "owner": self.owner,
            "political_news": self.political_news,
            "political_other": self.political_other,
            "nonpolitical_news": self.nonpolitical_news,
            "nonpolitical_other": self.nonpolitical_other,
            "total": self.total,
            "p_political": self.p_political,
            "p_news": self.p_news,
            "p_both": self.p_both,
            "p_news_given_political": self.p_news_given_political,
            "p_nonpolitical_given_news": self.p_nonpolitical_given_news,
            "undefined": self.undefined,
        }


def entangle_crosstab(
    rows: Iterable[tuple[str, bool, bool]],
) -> tuple[list[CrossTab], CrossTab]:
    """Cross-tabulate ``(participant_id, political, is_news)`` frames.

    Returns per-participant tables sorted by participant id and the pooled
    table.
    """
    cells: dict[str, list[int]] = {}
    for pid, political, news in rows:
        c = cells.get(pid)
        if c is None:
            c = cells[pid] = [0, 0, 0, 0]
        c[(0 if political else 2) + (0 if news else 1)] += 1
    tables = [CrossTab(pid, *c) for pid, c in sorted(cells.items())]
    pooled = CrossTab(POOLED)
    for t in tables:
        pooled = pooled + t
    return tables, pooled


@dataclass(frozen=True)
class EntangleReport:
    participants: list[CrossTab]
    pooled: CrossTab
    correlation: CorrelationResult | None
    mean_participant: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pooled": self.pooled.to_dict(),
            "mean_participant": self.mean_participant,
            "news_vs_political_correlation": None if self.correlation is None else self.correlation.to_dict(),
            "participants": [t.to_dict() for t in self.participants],
        }


def entangle_report(rows: Iterable[tuple[str, bool, bool]]) -> EntangleReport:
    """Cross-tabs plus the between-person correlation of news share and political share."""
    tables, pooled = entangle_crosstab(rows)
    keys = ("p_political", "p_news", "p_both", "p_news_given_political", "p_nonpolitical_given_news")
    mean = {}
    if tables:
        for k in keys:
            mean[k] = math.fsum(getattr(t, k) for t in tables) / len(tables)
    corr = None
    if len(tables) >= 3:
        try:
            corr = pearson_r([t.p_news for t in tables], [t.p_political for t in tables])
        except ValueError:
            corr = None
    return EntangleReport(tables, pooled, corr, mean)


# -- flattening -------------------------------------------------------------


@dataclass(frozen=True)
class DurationHistogram:
    """Segment counts per duration bin; bin i covers (i*w, (i+1)*w]."""

    owner: str
    bin_width_s: float
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def bin_upper(self, i: int) -> float:
        return (i + 1) * self.bin_width_s

    @property
    def percentages(self) -> dict[int, float]:
        n = self.total
        return {i: 100.0 * c / n for i, c in self.counts.items()}

    def rows(self) -> list[tuple[str, float, int, float]]:
        pct = self.percentages
        return [(self.owner, self.bin_upper(i), self.counts[i], pct[i]) for i in sorted(self.counts)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "owner": self.owner,
            "bin_width_s": self.bin_width_s,
            "total": self.total,
            "bins": [{"bin_upper_s": u, "count": c, "percent": p} for _, u, c, p in self.rows()],
        }


def _bin_index(duration: float, width: float) -> int:
    if not duration > 0:
        raise ValueError(f"segment durations must be positive, got {duration!r}")
    # Tolerate float noise so e.g. 3 * 0.1 s still lands in the 0.3 s bin.
    return max(0, math.ceil(duration / width - _BIN_EPS) - 1)


def duration_histogram(segments: Iterable[Segment], bin_width_s: float = 5.0,
                       group_by: str = "pooled") -> list[DurationHistogram]:
    if not bin_width_s > 0:
        raise ValueError("bin width must be positive")
    if group_by not in ("pooled", "participant"):
        raise ValueError(f"group_by must be 'pooled' or 'participant', got {group_by!r}")
    groups: dict[str, dict[int, int]] = {}
    for s in segments:
        owner = POOLED if group_by == "pooled" else s.participant_id
        counts = groups.setdefault(owner, {})
        i = _bin_index(s.duration_s, bin_width_s)
        counts[i] = counts.get(i, 0) + 1
    return [DurationHistogram(owner, bin_width_s, dict(sorted(c.items()))) for owner, c in sorted(groups.items())]


@dataclass(frozen=True)
class LogNormalFit:
    mu: float
    sigma: float
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {"mu": self.mu, "sigma": self.sigma, "n": self.n}


def fit_lognormal(durations: Iterable[float]) -> LogNormalFit:
    """Mean and sample (n-1) standard deviation of log durations."""
    durations = list(durations)
    if len(durations) < 2:
        raise ValueError("fit_lognormal needs at least 2 durations")
    if any(not d > 0 for d in durations):
        raise ValueError("durations must be positive")
    logs = [math.log(d) for d in durations]
    n = len(logs)
    # Centering on the first value keeps identical durations exactly at sigma = 0.
    ref = logs[0]
    shift = math.fsum(v - ref for v in logs) / n
    mu = ref + shift
    var = math.fsum((v - ref - shift) ** 2 for v in logs) / (n - 1)
    return LogNormalFit(mu, math.sqrt(var), n)


def flattened_count(segments: Iterable[Segment], predicate: Callable[[Segment], bool] = lambda s: True) -> int:
    """Number of matching segments, each counted once whatever its duration."""
    return sum(1 for s in segments if predicate(s))


def filter_by_duration(segments: Iterable[Segment], min_s: float = 0.0, max_s: float = math.inf) -> list[Segment]:
    if min_s < 0:
        raise ValueError("min_s must be non-negative")
    if min_s > max_s:
        raise ValueError(f"min_s ({min_s}) exceeds max_s ({max_s})")
    return [s for s in segments if min_s <= s.duration_s <= max_s]


@dataclass(frozen=True)
class RankingRow:
    participant_id: str
    segment_count: int
    total_duration_s: float
    count_rank: int
    duration_rank: int


@dataclass(frozen=True)
class RankingReport:
    rows: list[RankingRow]
    inversions: list[tuple[str, str]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "participants": [vars(r) for r in self.rows],
            "inversions": [list(p) for p in self.inversions],
        }


def flatten_vs_weighted_report(segments_by_participant: Mapping[str, Sequence[Segment]]) -> RankingReport:
    """Rank participants by segment count and by total duration; list pairs ranked oppositely.

    Rank 1 is the heaviest user. Ties go to the lexicographically smaller id.
    """
    if len(segments_by_participant) < 2:
        raise ValueError("ranking comparison needs at least 2 participants")
    stats = {
        pid: (len(segs), math.fsum(s.duration_s for s in segs))
        for pid, segs in segments_by_participant.items()
    }
    by_count = sorted(stats, key=lambda p: (-stats[p][0], p))
    by_duration = sorted(stats, key=lambda p: (-stats[p][1], p))
    count_rank = {p: i + 1 for i, p in enumerate(by_count)}
    duration_rank = {p: i + 1 for i, p in enumerate(by_duration)}
    rows = [RankingRow(p, stats[p][0], stats[p][1], count_rank[p], duration_rank[p]) for p in by_count]
    inversions = []
    for a, b in combinations(sorted(stats), 2):
        if (count_rank[a] < count_rank[b]) != (duration_rank[a] < duration_rank[b]):
            inversions.append((a, b))
    return RankingReport(rows, inversions)


# -- bundling ---------------------------------------------------------------


def bundle_total(segments: Iterable[Segment]) -> float:
    """Aggregate duration in seconds."""
    return math.fsum(s.duration_s for s in segments)


@dataclass(frozen=True)
class Stratum:
    lower_s: float
    upper_s: float
    count: int
    count_share: float
    duration_s: float
    duration_share: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "lower_s": self.lower_s,
            "upper_s": None if math.isinf(self.upper_s) else self.upper_s,
            "count": self.count,
            "count_share": self.count_share,
            "duration_s": self.duration_s,
            "duration_share": self.duration_share,
        }


@dataclass(frozen=True)
class StrataReport:
    bounds_s: tuple[float, ...]
    strata: list[Stratum]

    def to_dict(self) -> dict[str, Any]:
        return {"bounds_s": list(self.bounds_s), "strata": [s.to_dict() for s in self.strata]}


def unbundle_strata(segments: Iterable[Segment], bounds: Sequence[float] = (10.0,)) -> StrataReport:
    """Split segments into duration strata (0,b1], (b1,b2], ..., (b_last, inf).

    Shares are zero throughout when there are no segments.
    """
    bounds = tuple(float(b) for b in bounds)
    check_bounds(bounds)
    edges = (0.0,) + bounds + (math.inf,)
    counts = [0] * (len(bounds) + 1)
    durations: list[list[float]] = [[] for _ in counts]
    for s in segments:
        d = s.duration_s
        i = 0
        while d > edges[i + 1]:
            i += 1
        counts[i] += 1
        durations[i].append(d)
    n = sum(counts)
    per = [math.fsum(d) for d in durations]
    total = math.fsum(d for ds in durations for d in ds)
    strata = [
        Stratum(edges[i], edges[i + 1], counts[i], counts[i] / n if n else 0.0,
                per[i], per[i] / total if total else 0.0)
        for i in range(len(counts))
    ]
    return StrataReport(bounds, strata)
