"""Synthetic trace corpora with known ground truth, plus closed-form expectations.

Generative model, per participant:

* sessions ~ Poisson(sessions_per_participant)
* segments per session ~ max(1, Poisson(segments_per_session))
* each segment draws an app (catalog weights), a political flag with
  probability ``p_political_given_news`` or ``p_political_given_other`` by the
  app's category, and a duration ``exp(Normal(mu, sigma))`` seconds that is
  ceiled to whole frames (at least one)
* all frames of a segment share one text; political texts carry stems,
  every other text is made of decoy tokens only

Ground-truth segments merge adjacent same-flag segments of a session, so they
obey the segmenter's maximality rule.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import ndtr
from scipy.stats import poisson

from .core import AppCatalog, ConfigError, PipelineConfig, ScreenshotRecord, check_bounds
from .ingest import ParticipantTrace, load_stems
from .segmenter import Segment, segments_to_csv
from .textfeat import StemList, normalize

DEFAULT_DECOYS = (
    "weather", "sunny", "recipe", "pizza", "football", "score", "playlist", "album",
    "concert", "puppy", "garden", "coffee", "shopping", "discount", "video", "movie",
    "travel", "beach", "workout", "birthday", "dinner", "lunch", "selfie", "kitten",
    "followers", "likes", "comments", "share", "weekend", "photos", "forecast", "game",
    "level", "points", "music", "podcast", "episode", "season", "celebrity", "gossip",
    # near misses for anchored stems
    "magazine", "musicians", "specialist", "reformatted", "reelection", "magazines",
)

DEFAULT_APPS = (
    ("com.cnn.mobile.android.phone", "news", 0.4),
    ("com.google.android.apps.magazines", "news", 0.6),
    ("com.facebook.katana", "social", 3.0),
    ("com.instagram.android", "social", 2.0),
    ("com.google.android.youtube", "video_players", 2.0),
    ("com.king.candycrushsaga", "games", 1.0),
    ("com.android.chrome", "communication", 1.0),
)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class AppSpec:
    app_id: str
    category: str
    weight: float


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_participants: int = 10
    sessions_per_participant: float = 20.0
    segments_per_session: float = 8.0
    duration_lognormal: tuple[float, float] = (1.65, 1.7)
    frame_period_s: float = 5.0
    session_gap_s: float = 5.0
    apps: tuple[AppSpec, ...] = tuple(AppSpec(*a) for a in DEFAULT_APPS)
    news_category: str = "news"
    p_political_given_news: float = 0.15
    p_political_given_other: float = 0.015
    stems_per_political_text: int = 2
    decoy_tokens: tuple[str, ...] = DEFAULT_DECOYS
    decoys_per_text: int = 4
    label_fraction: float = 0.25
    start_ts_ms: int = 1_570_000_000_000
    mean_break_s: float = 1800.0
    strata_bounds_s: tuple[float, ...] = (10.0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "apps", tuple(a if isinstance(a, AppSpec) else AppSpec(**a) for a in self.apps))
        object.__setattr__(self, "duration_lognormal", tuple(float(v) for v in self.duration_lognormal))
        object.__setattr__(self, "decoy_tokens", tuple(self.decoy_tokens))
        object.__setattr__(self, "strata_bounds_s", tuple(float(b) for b in self.strata_bounds_s))
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(self.n_participants, int) or self.n_participants < 0:
            raise ConfigError("n_participants must be a non-negative integer")
        for name in ("sessions_per_participant", "segments_per_session", "frame_period_s",
                     "session_gap_s", "mean_break_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("p_political_given_news", "p_political_given_other", "label_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if len(self.duration_lognormal) != 2 or self.duration_lognormal[1] < 0:
            raise ConfigError("duration_lognormal must be (mu, sigma) with sigma >= 0")
        if not self.apps:
            raise ConfigError("at least one app is required")
        if len({a.app_id for a in self.apps}) != len(self.apps):
            raise ConfigError("duplicate app_id in apps")
        if any(not a.weight >= 0 for a in self.apps) or not sum(a.weight for a in self.apps) > 0:
            raise ConfigError("app weights must be non-negative with a positive sum")
        if self.stems_per_political_text < 1 or self.decoys_per_text < 0:
            raise ConfigError("stems_per_political_text must be >= 1 and decoys_per_text >= 0")
        if self.decoys_per_text and not self.decoy_tokens:
            raise ConfigError("decoy_tokens is empty")
        check_bounds(self.strata_bounds_s)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> SynthConfig:
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path: str | Path) -> SynthConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["duration_lognormal"] = list(self.duration_lognormal)
        out["decoy_tokens"] = list(self.decoy_tokens)
        out["strata_bounds_s"] = list(self.strata_bounds_s)
        return out

    @property
    def catalog(self) -> AppCatalog:
        return AppCatalog({a.app_id: a.category for a in self.apps}, self.news_category)

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(frame_period_s=self.frame_period_s, session_gap_s=self.session_gap_s,
                              histogram_bin_s=self.frame_period_s, strata_bounds_s=self.strata_bounds_s)

    @property
    def p_news(self) -> float:
        total = math.fsum(a.weight for a in self.apps)
        return math.fsum(a.weight for a in self.apps if a.category == self.news_category) / total


@dataclass
class SynthCorpus:
    config: SynthConfig
    traces: list[ParticipantTrace]
    truth: dict[tuple[str, int], bool]
    segments: list[Segment]
    labeled: list[tuple[ScreenshotRecord, bool]] = field(default_factory=list)

    @property
    def records(self) -> list[ScreenshotRecord]:
        return [r for t in self.traces for r in t.records]

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in self.records)

    def truth_jsonl(self) -> str:
        return "".join(
            json.dumps({"participant_id": r.participant_id, "ts_ms": r.ts_ms,
                        "political": self.truth[(r.participant_id, r.ts_ms)]}) + "\n"
            for r in self.records
        )

    def ground_truth_jsonl(self) -> str:
        return "".join(json.dumps({**r.to_dict(), "political": y}, ensure_ascii=False) + "\n"
                       for r, y in self.labeled)

    def catalog_csv(self) -> str:
        return "app_id,category\n" + "".join(f"{a.app_id},{a.category}\n" for a in self.config.apps)

    def files(self) -> dict[str, str]:
        """Output file name -> contents."""
        return {
            "trace.jsonl": self.trace_jsonl(),
            "truth.jsonl": self.truth_jsonl(),
            "ground_truth.jsonl": self.ground_truth_jsonl(),
            "segments.csv": segments_to_csv(self.segments),
            "catalog.csv": self.catalog_csv(),
        }


def frames_for(duration_s: float, period_s: float) -> int:
    return max(1, math.ceil(duration_s / period_s))


def check_decoys(tokens: Sequence[str], stems: StemList) -> None:
    automaton = stems.automaton
    for tok in tokens:
        if automaton.scan(normalize(tok)):
            raise SynthError(f"decoy token {tok!r} matches a stem")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _participant(config: SynthConfig, index: int, stems: StemList, rendered: list[str]):
    rng = _rng(config.seed, 0, index)
    label_rng = _rng(config.seed, 1, index)
    pid = f"p{index:04d}"
    cum = np.cumsum([a.weight for a in config.apps], dtype=float)
    cum /= cum[-1]
    decoys = np.array(config.decoy_tokens, dtype=object)
    mu, sigma = config.duration_lognormal
    period_ms = round(config.frame_period_s * 1000)
    gap_ms = config.session_gap_s * 1000
    automaton = stems.automaton
    k = min(config.stems_per_political_text, len(stems))

    records: list[ScreenshotRecord] = []
    truth: dict[tuple[str, int], bool] = {}
    segments: list[Segment] = []
    labeled: list[tuple[ScreenshotRecord, bool]] = []
    ts = config.start_ts_ms
    for s_idx in range(int(rng.poisson(config.sessions_per_participant))):
        run_label, run_start, run_frames = None, 0, 0
        for _ in range(max(1, int(rng.poisson(config.segments_per_session)))):
            app = config.apps[min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)]
            p = config.p_political_given_news if app.category == config.news_category \
                else config.p_political_given_other
            political = bool(rng.random() < p)
            frames = frames_for(math.exp(rng.normal(mu, sigma)), config.frame_period_s)
            words = list(rng.choice(decoys, size=config.decoys_per_text)) if config.decoys_per_text else []
            if political:
                words += [rendered[int(i)] for i in rng.choice(len(stems), size=k, replace=False)]
                rng.shuffle(words)
            text = " ".join(words)
            text = (text[:1].upper() + text[1:] + ".") if text else ""
            hit = automaton.scan(normalize(text)) != 0
            if hit != political:
                raise SynthError(f"generated text {text!r} has political={political} but stem match={hit}")
            if political == run_label:
                run_frames += frames
            else:
                if run_label is not None:
                    segments.append(Segment.of(pid, s_idx, run_label, run_start, run_frames, config.frame_period_s))
                run_label, run_start, run_frames = political, ts, frames
            for _ in range(frames):
                rec = ScreenshotRecord(pid, ts, app.app_id, text)
                records.append(rec)
                truth[(pid, ts)] = political
                if label_rng.random() < config.label_fraction:
                    labeled.append((rec, political))
                ts += period_ms
        segments.append(Segment.of(pid, s_idx, run_label, run_start, run_frames, config.frame_period_s))
        # Next session starts strictly more than the gap after the last frame.
        ts += math.floor(gap_ms) - period_ms + 1 + int(rng.exponential(config.mean_break_s * 1000))
    return ParticipantTrace(pid, tuple(records)), truth, segments, labeled


def generate(config: SynthConfig, stems: StemList | None = None) -> SynthCorpus:
    """Deterministic corpus for ``config``; participants use independent seed streams."""
    stems = stems or load_stems()
    check_decoys(config.decoy_tokens, stems)
    rendered = [" ".join(s.tokens) for s in stems]
    traces, truth, segments, labeled = [], {}, [], []
    for i in range(config.n_participants):
        trace, t, segs, lab = _participant(config, i, stems, rendered)
        if trace.records:
            traces.append(trace)
        truth.update(t)
        segments.extend(segs)
        labeled.extend(lab)
    return SynthCorpus(config, traces, truth, segments, labeled)


def write_corpus(corpus: SynthCorpus, outdir: str | Path) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, content in corpus.files().items():
        path = outdir / name
        path.write_text(content, encoding="utf-8")
        written[name] = path
    return written


# -- closed-form expectations -------------------------------------------------


TAIL_BOUND = 1e-9
MAX_FRAMES = 50_000_000


def frame_pmf(mu: float, sigma: float, period_s: float) -> np.ndarray:
    """P(frames = k) for k = 1..K (index k-1) under ceil(exp(N(mu, sigma)) / period).

    K is chosen so the neglected probability and neglected mean frames are
    both below 1e-9.
    """
    if sigma == 0:
        k = frames_for(math.exp(mu), period_s)
        pmf = np.zeros(k)
        pmf[-1] = 1.0
        return pmf
    mean_s = math.exp(mu + sigma * sigma / 2)
    K = 1
    while True:
        x = math.log(K * period_s)
        tail_p = float(ndtr(-(x - mu) / sigma))
        tail_mean = mean_s / period_s * float(ndtr(-(x - mu - sigma * sigma) / sigma)) + tail_p
        if tail_p < TAIL_BOUND and tail_mean < TAIL_BOUND:
            break
        K *= 2
        if K > MAX_FRAMES:
            raise SynthError("duration distribution tail too heavy for exact summation")
    k = np.arange(0, K + 1, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(k * period_s) - mu) / sigma
    surv = ndtr(-z)
    return surv[:-1] - surv[1:]


def _stratum_of_frames(frames: np.ndarray, period_s: float, bounds: Sequence[float]) -> np.ndarray:
    return np.searchsorted(np.asarray(bounds, dtype=float), frames * period_s, side="left")


@dataclass(frozen=True)
class ExpectedStats:
    p_political: float
    p_news: float
    p_both: float
    p_news_given_political: float
    lognormal_mu: float
    lognormal_sigma: float
    discretized_log_mu: float
    discretized_log_sigma: float
    mean_frames: float
    strata_bounds_s: tuple[float, ...]
    segment_count_share: tuple[float, ...]
    segment_duration_share: tuple[float, ...]
    political_single_frame_share: float
    political_count_share: tuple[float, ...]
    political_duration_share: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def expected_stats(config: SynthConfig) -> ExpectedStats:
    """Large-corpus expectations implied by ``config``.

    Frame shares follow from the law of total probability because durations
    are independent of app and label. ``segment_*`` shares describe generated
    segments; ``political_*`` shares describe merged political runs, counting
    run lengths per session exactly and convolving frame distributions.
    """
    mu, sigma = config.duration_lognormal
    period = config.frame_period_s
    bounds = config.strata_bounds_s
    p_news = config.p_news
    p_both = p_news * config.p_political_given_news
    p_pol = p_both + (1 - p_news) * config.p_political_given_other

    pmf = frame_pmf(mu, sigma, period)
    k = np.arange(1, len(pmf) + 1, dtype=float)
    logs = np.log(k * period)
    mass = pmf.sum()
    d_mu = float(np.dot(pmf, logs) / mass)
    d_sigma = math.sqrt(float(np.dot(pmf, (logs - d_mu) ** 2) / mass))
    mean_frames = float(np.dot(pmf, k))

    strata = _stratum_of_frames(k, period, bounds)
    n_strata = len(bounds) + 1
    seg_count = np.bincount(strata, weights=pmf, minlength=n_strata)
    seg_dur = np.bincount(strata, weights=pmf * k, minlength=n_strata)
    seg_count_share = tuple(float(v) for v in seg_count / seg_count.sum())
    seg_dur_share = tuple(float(v) for v in seg_dur / seg_dur.sum())

    # Expected number of maximal political runs of L segments in a session.
    lam, q = config.segments_per_session, p_pol
    n_max = int(poisson.isf(1e-15, lam)) + 2
    n = np.arange(1, n_max + 1)
    p_n = poisson.pmf(n, lam)
    p_n[0] += poisson.pmf(0, lam)
    runs = np.zeros(n_max + 1)
    for L in range(1, n_max + 1):
        qL = q ** L
        if qL * lam < 1e-18 and L > 1:
            break
        r = np.where(n == L, qL, 0.0)
        r = r + np.where(n >= L + 1, 2 * qL * (1 - q), 0.0)
        r = r + np.where(n >= L + 2, (n - L - 1) * qL * (1 - q) ** 2, 0.0)
        runs[L] = float(np.dot(p_n, r))
    total_runs = runs.sum()
    max_finite = int(math.floor(bounds[-1] / period + 1e-9))
    low = np.zeros(max_finite + 1)  # expected runs by total frames, for frames <= max_finite
    head = pmf[:max_finite] if max_finite else pmf[:0]
    power = np.zeros(max_finite + 1)
    power[0] = 1.0
    for L in range(1, min(n_max, max_finite) + 1):
        power = np.convolve(power, np.concatenate([[0.0], head]))[: max_finite + 1]
        low += runs[L] * power
    run_frames_total = float(np.dot(runs, np.arange(len(runs)))) * mean_frames
    if total_runs > 0:
        f = np.arange(max_finite + 1, dtype=float)
        low_strata = _stratum_of_frames(f[1:], period, bounds)
        cnt = np.bincount(low_strata, weights=low[1:], minlength=n_strata)
        dur = np.bincount(low_strata, weights=low[1:] * f[1:], minlength=n_strata)
        cnt[-1] = total_runs - cnt[:-1].sum()
        dur[-1] = run_frames_total - dur[:-1].sum()
        pol_count = tuple(float(v) for v in cnt / total_runs)
        pol_dur = tuple(float(v) for v in dur / run_frames_total)
        single = float(runs[1] * pmf[0] / total_runs)
    else:
        pol_count = pol_dur = tuple(0.0 for _ in range(n_strata))
        single = 0.0

    return ExpectedStats(
        p_political=p_pol,
        p_news=p_news,
        p_both=p_both,
        p_news_given_political=p_both / p_pol if p_pol else 0.0,
        lognormal_mu=mu,
        lognormal_sigma=sigma,
        discretized_log_mu=d_mu,
        discretized_log_sigma=d_sigma,
        mean_frames=mean_frames,
        strata_bounds_s=bounds,
        segment_count_share=seg_count_share,
        segment_duration_share=seg_dur_share,
        political_single_frame_share=single,
        political_count_share=pol_count,
        political_duration_share=pol_dur,
    )
