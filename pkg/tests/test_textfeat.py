import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracebias.core import ScreenshotRecord
from tracebias.ingest import load_stems
from tracebias.textfeat import (Stem, StemAutomaton, StemError, StemList, featurize, match_stems, normalize,
                                spell_correct)

from .oracles import levenshtein, naive_normalize, naive_stem_present

STEMS = load_stems()


def _one(line):
    return StemList([Stem.parse(line)])


@pytest.mark.parametrize("text, expected", [
    ("Support Black Lives Matter!", " support black lives matter "),
    ("O’Rourke2020", " o rourke2020 "),
    ("", " "),
    ("  --  ", " "),
])
def test_normalize_examples(text, expected):
    assert normalize(text) == expected


@given(st.text())
def test_normalize_matches_oracle(text):
    assert normalize(text) == naive_normalize(text)


@given(st.text())
def test_normalize_is_fixpoint(text):
    once = normalize(text)
    assert normalize(once) == once


@pytest.mark.parametrize("line, rendered, left, right", [
    ("black.lives.matter", "black lives matter", False, False),
    (".CIA.", " cia ", True, True),
    ("maga.", "maga ", False, True),
    (".tax", " tax", True, False),
    ("bet0", "bet0", False, False),
])
def test_stem_parse(line, rendered, left, right):
    stem = Stem.parse(line)
    assert stem.rendered == rendered
    assert (stem.left_anchor, stem.right_anchor) == (left, right)
    assert str(stem) == line.lower()


@pytest.mark.parametrize("line", ["", ".", "a..b", "a-b", "..x"])
def test_bad_stems(line):
    with pytest.raises(StemError):
        Stem.parse(line)


def test_duplicate_rendered_rejected():
    with pytest.raises(StemError, match="duplicate"):
        StemList.from_lines(["vote", "VOTE"])


@pytest.mark.parametrize("text, stem, present", [
    (" support black lives matter ", "black.lives.matter", True),
    (" musicians unite ", ".CIA.", False),
    (" the cia said ", ".CIA.", True),
    (" my magazine ", "maga.", False),
    (" maga hats ", "maga.", True),
    (" maga ", "maga.", True),
])
def test_match_examples(text, stem, present):
    stems = _one(stem)
    assert bool(match_stems(text, stems)[0]) is present
    assert naive_stem_present(text, stems[0].rendered) is present


def test_bundled_traps():
    traps = {"musicians": ".cia.", "magazine": "maga.", "magazines": "maga."}
    index = {str(s): i for i, s in enumerate(STEMS)}
    for word, stem in traps.items():
        bits = match_stems(normalize(word), STEMS)
        assert not bits[index[stem]]


token = st.text(alphabet="abcm0 ", min_size=1, max_size=4).map(lambda s: s.strip() or "a")
stem_line = st.builds(
    lambda toks, l, r: ("." if l else "") + ".".join(t.replace(" ", "") or "a" for t in toks) + ("." if r else ""),
    st.lists(token, min_size=1, max_size=3), st.booleans(), st.booleans(),
)


@given(st.lists(stem_line, min_size=1, max_size=12, unique_by=lambda s: Stem.parse(s).rendered),
       st.text(alphabet="abcm0 .,", max_size=60))
def test_automaton_matches_naive_scan(lines, raw):
    stems = StemList.from_lines(lines)
    text = normalize(raw)
    expected = [naive_stem_present(text, s.rendered) for s in stems]
    assert match_stems(text, stems).tolist() == expected


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789 ", max_size=80))
def test_bundled_automaton_matches_naive_scan(raw):
    text = normalize(raw)
    expected = [naive_stem_present(text, p) for p in STEMS.patterns]
    assert match_stems(text, STEMS).tolist() == expected


def test_automaton_overlapping_patterns():
    a = StemAutomaton(["he", "she", "his", "hers"])
    assert a.scan("ushers") == 0b1011
    assert a.scan("xyz") == 0


@given(st.lists(token, min_size=1, max_size=3), st.text(alphabet="abcm0 ", max_size=40))
def test_anchored_implies_unanchored(tokens, raw):
    body = ".".join(t.replace(" ", "") or "a" for t in tokens)
    text = normalize(raw)
    plain = match_stems(text, _one(body))[0]
    for variant in (f".{body}", f"{body}.", f".{body}."):
        if match_stems(text, _one(variant))[0]:
            assert plain


@given(st.text(max_size=40), st.text(max_size=40))
def test_monotone_under_concatenation(a, b):
    va = featurize([a], STEMS)[0]
    vab = featurize([a + " " + b], STEMS)[0]
    assert not np.any(va & ~vab)


def test_featurize_shapes():
    assert featurize([], STEMS).shape == (0, len(STEMS))
    assert not featurize([""], STEMS).any()


@given(st.lists(st.sampled_from(["vote for the senate", "pizza night", "", "Trump rally", "the CIA"]),
                max_size=10))
def test_featurize_is_rowwise(texts):
    X = featurize(texts, STEMS)
    assert X.shape == (len(texts), len(STEMS))
    for i, t in enumerate(texts):
        assert X[i].tolist() == match_stems(normalize(t), STEMS).tolist()


def test_featurize_accepts_records():
    recs = [ScreenshotRecord("p", 0, None, "the CIA"), ScreenshotRecord("p", 1, None, "pizza")]
    assert featurize(recs, STEMS).tolist() == featurize(["the CIA", "pizza"], STEMS).tolist()


def test_spell_correct_examples():
    assert spell_correct(" presidant ", frozenset({"president"})) == " president "
    assert spell_correct(" presidant ", frozenset({"president", "presidants"})) == " presidant "
    assert spell_correct(" anything at all ", frozenset()) == " anything at all "


def test_spell_correct_keeps_known_tokens():
    lex = frozenset({"cat", "cot"})
    assert spell_correct(" cat cut ", lex) == " cat cut "
    assert spell_correct(" cax ", lex) == " cat "


words = st.text(alphabet="abcd", min_size=1, max_size=5)


@given(st.lists(words, max_size=6), st.frozensets(words, max_size=8))
def test_spell_correct_oracle(tokens, lexicon):
    text = " " + " ".join(tokens) + " " if tokens else " "
    expected = []
    for tok in tokens:
        if tok not in lexicon:
            near = [w for w in lexicon if levenshtein(tok, w) == 1]
            if len(near) == 1:
                tok = near[0]
        expected.append(tok)
    want = " " + " ".join(expected) + " " if expected else " "
    assert spell_correct(text, lexicon) == want


def test_featurize_with_lexicon():
    X = featurize(["presidant"], STEMS, frozenset({"president"}))
    ref = featurize(["president"], STEMS)
    assert X.tolist() == ref.tolist()
