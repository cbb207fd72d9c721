import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tracebias.metrics import (CrossTab, bundle_total, duration_histogram, entangle_crosstab, entangle_report,
                               filter_by_duration, fit_lognormal, flatten_vs_weighted_report, flattened_count,
                               unbundle_strata)
from tracebias.segmenter import Segment


def seg(duration, pid="p", label=True, frames=None):
    return Segment(pid, 0, label, 0, frames or max(1, round(duration / 5)), float(duration))


def segs(durations, pid="p"):
    return [seg(d, pid) for d in durations]


frame_rows = st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.booleans(), st.booleans()), max_size=200)


@given(frame_rows)
def test_crosstab_matches_naive_count(rows):
    tables, pooled = entangle_crosstab(rows)
    for t in tables:
        mine = [(p, n) for pid, p, n in rows if pid == t.owner]
        assert t.political_news == sum(1 for p, n in mine if p and n)
        assert t.political_other == sum(1 for p, n in mine if p and not n)
        assert t.nonpolitical_news == sum(1 for p, n in mine if not p and n)
        assert t.nonpolitical_other == sum(1 for p, n in mine if not p and not n)
        assert t.total == len(mine)
    assert pooled.total == len(rows)
    assert [t.owner for t in tables] == sorted({r[0] for r in rows})


@given(frame_rows)
def test_frechet_bound_and_ranges(rows):
    tables, pooled = entangle_crosstab(rows)
    for t in tables + [pooled]:
        for v in (t.p_political, t.p_news, t.p_both, t.p_news_given_political, t.p_nonpolitical_given_news):
            assert 0.0 <= v <= 1.0
        assert t.p_both <= min(t.p_political, t.p_news)


@given(frame_rows)
def test_pooled_is_merge_of_partials(rows):
    tables, pooled = entangle_crosstab(rows)
    merged = CrossTab("pooled")
    for t in tables:
        merged = merged + t
    assert merged == pooled


def test_crosstab_corners():
    all_both = CrossTab("p", political_news=10)
    assert all_both.p_both == 1.0 and all_both.p_news_given_political == 1.0
    none = CrossTab("p", nonpolitical_news=3, nonpolitical_other=7)
    assert none.p_political == 0.0
    assert none.p_news_given_political == 0.0
    assert "p_news_given_political" in none.undefined
    assert CrossTab("p").undefined == ["p_political", "p_news", "p_both", "p_news_given_political",
                                       "p_nonpolitical_given_news"]


def test_entangle_recovers_generator_rates():
    rng = np.random.default_rng(7)
    n = 10_000
    p_news, p_both, p_pol = 0.0113, 0.0015, 0.0168
    news = rng.random(n) < p_news
    p_pol_news = p_both / p_news
    p_pol_other = (p_pol - p_both) / (1 - p_news)
    political = np.where(news, rng.random(n) < p_pol_news, rng.random(n) < p_pol_other)
    _, pooled = entangle_crosstab(("p", bool(a), bool(b)) for a, b in zip(political, news))
    for est, target in ((pooled.p_political, p_pol), (pooled.p_news, p_news), (pooled.p_both, p_both)):
        se = math.sqrt(target * (1 - target) / n)
        assert abs(est - target) <= 3 * se


def test_entangle_report_correlation():
    rows = []
    for i, (pol, news) in enumerate([(1, 1), (2, 3), (3, 2), (4, 5), (5, 4)]):
        rows += [(f"p{i}", True, False)] * pol + [(f"p{i}", False, True)] * news + [(f"p{i}", False, False)] * 20
    rep = entangle_report(rows)
    assert rep.correlation is not None and rep.correlation.n == 5
    assert rep.mean_participant["p_political"] == pytest.approx(
        sum(t.p_political for t in rep.participants) / 5)
    assert entangle_report(rows[:25]).correlation is None


def test_histogram_examples():
    (h,) = duration_histogram(segs([5, 5, 10]), 5.0)
    assert h.counts == {0: 2, 1: 1}
    assert [round(v, 1) for v in h.percentages.values()] == [66.7, 33.3]
    assert [row[1] for row in h.rows()] == [5.0, 10.0]
    (one,) = duration_histogram(segs([35]), 5.0)
    assert one.percentages == {6: 100.0}


def test_histogram_right_closed_bins():
    (h,) = duration_histogram(segs([0.1 * 3, 0.30000001, 0.2]), 0.1)
    assert h.counts == {1: 1, 2: 1, 3: 1}


def test_histogram_per_participant():
    hs = duration_histogram(segs([5, 10], "b") + segs([5], "a"), 5.0, group_by="participant")
    assert [h.owner for h in hs] == ["a", "b"]


durations = st.lists(st.integers(1, 500).map(lambda k: 5.0 * k), min_size=1, max_size=80)


@given(durations)
def test_histogram_totals(ds):
    (h,) = duration_histogram(segs(ds), 5.0)
    assert h.total == len(ds)
    assert abs(sum(h.percentages.values()) - 100.0) <= 1e-9


def test_fit_lognormal_examples():
    fit = fit_lognormal([7.0] * 5)
    assert fit.mu == pytest.approx(math.log(7.0)) and fit.sigma == 0.0
    fit = fit_lognormal([math.e, math.e ** 3])
    assert fit.mu == pytest.approx(2.0) and fit.sigma == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        fit_lognormal([5.0])


def test_fit_lognormal_monte_carlo():
    x = np.exp(np.random.default_rng(11).normal(2.0, 1.0, 10_000))
    fit = fit_lognormal(x.tolist())
    assert abs(fit.mu - 2.0) <= 0.05 and abs(fit.sigma - 1.0) <= 0.05


def test_flattened_count_ratio():
    left = [seg(d, label="left") for d in range(5, 55, 5)]
    right = [seg(d * 100, label="right") for d in range(1, 6)]
    n_left = flattened_count(left + right, lambda s: s.label == "left")
    n_right = flattened_count(left + right, lambda s: s.label == "right")
    assert (n_left, n_right) == (10, 5)
    assert flattened_count([]) == 0


def test_filter_examples():
    ss = segs([5, 10, 15])
    assert filter_by_duration(ss) == ss
    assert [s.duration_s for s in filter_by_duration(ss, min_s=10)] == [10, 15]
    assert [s.duration_s for s in filter_by_duration(ss, 5, 5)] == [5]
    with pytest.raises(ValueError):
        filter_by_duration(ss, 10, 5)


def test_bundle_total_examples():
    assert bundle_total([]) == 0
    assert bundle_total(segs([5, 10, 15])) == 30


@given(durations, st.floats(0, 3000))
def test_bundle_partition_additivity(ds, b):
    ss = segs(ds)
    low = [s for s in ss if s.duration_s <= b]
    high = [s for s in ss if s.duration_s > b]
    assert filter_by_duration(ss, 0, b) == low
    assert math.isclose(bundle_total(ss), bundle_total(low) + bundle_total(high), rel_tol=1e-12)


@given(durations, st.floats(0.01, 100))
def test_rescaling(ds, c):
    ss = segs(ds)
    scaled = [seg(s.duration_s * c) for s in ss]
    assert flattened_count(scaled) == flattened_count(ss)
    assert math.isclose(bundle_total(scaled), c * bundle_total(ss), rel_tol=1e-9)


def test_strata_example():
    rep = unbundle_strata(segs([5, 5, 10, 300]), [10])
    low, high = rep.strata
    assert low.count_share == 3 / 4
    assert low.duration_share == 20 / 320
    assert high.upper_s == math.inf and high.count == 1


def test_strata_single():
    rep = unbundle_strata(segs([5, 10]), [10])
    assert rep.strata[0].count_share == 1.0 and rep.strata[0].duration_share == 1.0
    empty = unbundle_strata([], [10])
    assert all(s.count_share == 0 for s in empty.strata)


@given(st.lists(st.floats(0.1, 5000), min_size=1, max_size=60),
       st.lists(st.floats(1, 1000), min_size=1, max_size=4, unique=True))
def test_strata_shares_sum_to_one(ds, bounds):
    rep = unbundle_strata([seg(d) for d in ds], sorted(bounds))
    assert abs(sum(s.count_share for s in rep.strata) - 1) <= 1e-9
    assert abs(sum(s.duration_share for s in rep.strata) - 1) <= 1e-9
    assert sum(s.count for s in rep.strata) == len(ds)


def test_ranking_example():
    rep = flatten_vs_weighted_report({"A": segs([5] * 10, "A"), "B": segs([300] * 2, "B")})
    rows = {r.participant_id: r for r in rep.rows}
    assert (rows["A"].count_rank, rows["B"].count_rank) == (1, 2)
    assert (rows["B"].duration_rank, rows["A"].duration_rank) == (1, 2)
    assert rows["A"].total_duration_s == 50 and rows["B"].total_duration_s == 600
    assert rep.inversions == [("A", "B")]


def test_ranking_identical_and_ties():
    rep = flatten_vs_weighted_report({"b": segs([5, 10], "b"), "a": segs([5, 10], "a")})
    assert rep.inversions == []
    assert [r.participant_id for r in rep.rows] == ["a", "b"]
    with pytest.raises(ValueError):
        flatten_vs_weighted_report({"a": []})


@given(st.dictionaries(st.sampled_from("abcdef"), durations, min_size=2))
def test_ranking_inversions_oracle(by):
    rep = flatten_vs_weighted_report({k: segs(v, k) for k, v in by.items()})
    rank = {r.participant_id: (r.count_rank, r.duration_rank) for r in rep.rows}
    expected = [(a, b) for a in sorted(by) for b in sorted(by) if a < b
                and (rank[a][0] - rank[b][0]) * (rank[a][1] - rank[b][1]) < 0]
    assert rep.inversions == expected
