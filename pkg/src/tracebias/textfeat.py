"""Text normalization, distance-1 spell correction and stem-presence features.

A stem is written with ``.`` standing for a single space, so ``maga.`` only
matches ``maga`` followed by a space and ``.cia.`` only matches ``cia`` as a
whole token, while an undotted stem such as ``obamacar`` matches anywhere.
Normalized text is space padded, so every token is bounded by spaces.

All stems are matched in a single pass by an Aho-Corasick automaton over the
normalized alphabet.
"""

from __future__ import annotations

import re
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 "
_TOKEN = re.compile(r"[a-z0-9]+")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")


class StemError(ValueError):
    pass


@dataclass(frozen=True)
class Stem:
    tokens: tuple[str, ...]
    left_anchor: bool = False
    right_anchor: bool = False

    def __post_init__(self) -> None:
        if not self.tokens:
            raise StemError("stem has no tokens")
        for tok in self.tokens:
            if not _TOKEN.fullmatch(tok):
                raise StemError(f"invalid stem token {tok!r}")

    @classmethod
    def parse(cls, line: str) -> Stem:
        """Parse the dotted notation, e.g. ``.CIA.`` or ``black.lives.matter``."""
        raw = line.strip().lower()
        if not raw:
            raise StemError("empty stem")
        left = raw.startswith(".")
        right = raw.endswith(".") and len(raw) > 1
        body = raw[1 if left else 0 : len(raw) - 1 if right else len(raw)]
        tokens = tuple(body.split("."))
        if any(not t for t in tokens):
            raise StemError(f"malformed stem {line.strip()!r}")
        return cls(tokens, left, right)

    @property
    def rendered(self) -> str:
        """The literal substring searched for in normalized text."""
        core = " ".join(self.tokens)
        return (" " if self.left_anchor else "") + core + (" " if self.right_anchor else "")

    def __str__(self) -> str:
        return ("." if self.left_anchor else "") + ".".join(self.tokens) + ("." if self.right_anchor else "")


class StemList(Sequence):
    """An ordered, duplicate-free list of stems with a compiled matcher."""

    def __init__(self, stems: Iterable[Stem]):
        self.stems: tuple[Stem, ...] = tuple(stems)
        if not self.stems:
            raise StemError("stem list is empty")
        seen: dict[str, int] = {}
        for i, stem in enumerate(self.stems):
            if stem.rendered in seen:
                raise StemError(f"duplicate stem {str(stem)!r} (lines {seen[stem.rendered] + 1} and {i + 1})")
            seen[stem.rendered] = i

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> StemList:
        stems = []
        for lineno, line in enumerate(lines, 1):
            try:
                stems.append(Stem.parse(line))
            except StemError as exc:
                raise StemError(f"line {lineno}: {exc}") from None
        return cls(stems)

    def __getitem__(self, i):
        return self.stems[i]

    def __len__(self) -> int:
        return len(self.stems)

    @property
    def patterns(self) -> list[str]:
        return [s.rendered for s in self.stems]

    @cached_property
    def automaton(self) -> StemAutomaton:
        return StemAutomaton(self.patterns)


class StemAutomaton:
    """Aho-Corasick DFA; each state carries a bitmask of the patterns it completes."""

    def __init__(self, patterns: Sequence[str]):
        self.n_patterns = len(patterns)
        goto: list[dict[str, int]] = [{}]
        out = [0]
        for idx, pat in enumerate(patterns):
            state = 0
            for ch in pat:
                if ch not in ALPHABET:
                    raise StemError(f"pattern {pat!r} has character outside the normalized alphabet")
                nxt = goto[state].get(ch)
                if nxt is None:
                    nxt = len(goto)
                    goto[state][ch] = nxt
                    goto.append({})
                    out.append(0)
                state = nxt
            out[state] |= 1 << idx

        # BFS to fill failure links and complete the transition table.
        fail = [0] * len(goto)
        delta: list[dict[str, int]] = [dict() for _ in goto]
        queue: deque[int] = deque()
        for ch in ALPHABET:
            nxt = goto[0].get(ch, 0)
            delta[0][ch] = nxt
            if nxt:
                queue.append(nxt)
        while queue:
            state = queue.popleft()
            out[state] |= out[fail[state]]
            for ch in ALPHABET:
                nxt = goto[state].get(ch)
                if nxt is None:
                    delta[state][ch] = delta[fail[state]][ch]
                else:
                    fail[nxt] = delta[fail[state]][ch]
                    delta[state][ch] = nxt
                    queue.append(nxt)
        self._delta = delta
        self._out = out

    @property
    def n_states(self) -> int:
        return len(self._delta)

    def scan(self, text: str) -> int:
        """Bitmask of patterns occurring in ``text``."""
        delta, out = self._delta, self._out
        state = 0
        found = 0
        for ch in text:
            state = delta[state].get(ch, 0)
            found |= out[state]
        return found


def normalize(text: str) -> str:
    """Lowercase, map non ``[a-z0-9]`` runs to one space, pad with one space each side."""
    body = _NON_ALNUM.sub(" ", text.lower()).strip()
    return f" {body} " if body else " "


def load_lexicon(words: Iterable[str]) -> frozenset[str]:
    lexicon = set()
    for word in words:
        word = word.strip()
        if not word:
            continue
        if not _TOKEN.fullmatch(word):
            raise ValueError(f"lexicon word {word!r} is not a lowercase alphanumeric token")
        lexicon.add(word)
    return frozenset(lexicon)


def _edits1(token: str) -> set[str]:
    letters = ALPHABET[:-1]
    splits = [(token[:i], token[i:]) for i in range(len(token) + 1)]
    deletes = {a + b[1:] for a, b in splits if b}
    replaces = {a + c + b[1:] for a, b in splits if b for c in letters if c != b[0]}
    inserts = {a + c + b for a, b in splits for c in letters}
    return (deletes | replaces | inserts) - {token, ""}


def spell_correct(normalized: str, lexicon: frozenset[str] | set[str]) -> str:
    """Replace out-of-lexicon tokens that have exactly one lexicon word at edit distance 1."""
    if not lexicon:
        return normalized
    fixed = []
    for token in normalized.split():
        if token not in lexicon:
            candidates = _edits1(token) & lexicon
            if len(candidates) == 1:
                token = next(iter(candidates))
        fixed.append(token)
    return f" {' '.join(fixed)} " if fixed else " "


def _bits(mask: int, n: int) -> np.ndarray:
    bits = np.zeros(n, dtype=bool)
    i = 0
    while mask:
        if mask & 1:
            bits[i] = True
        mask >>= 1
        i += 1
    return bits


def match_stems(normalized: str, stems: StemList) -> np.ndarray:
    """Boolean presence vector, one entry per stem."""
    return _bits(stems.automaton.scan(normalized), len(stems))


def featurize(texts: Iterable[str], stems: StemList, lexicon: frozenset[str] | None = None) -> np.ndarray:
    """Feature matrix with one row per text (normalize, correct, match).

    Accepts raw strings or objects with a ``text`` attribute. Identical texts
    are matched once.
    """
    automaton = stems.automaton
    cache: dict[str, int] = {}
    masks = []
    for item in texts:
        text = item if isinstance(item, str) else item.text
        mask = cache.get(text)
        if mask is None:
            norm = normalize(text)
            if lexicon:
                norm = spell_correct(norm, lexicon)
            mask = cache[text] = automaton.scan(norm)
        masks.append(mask)
    out = np.zeros((len(masks), len(stems)), dtype=bool)
    rows: dict[int, np.ndarray] = {}
    for i, mask in enumerate(masks):
        if mask:
            row = rows.get(mask)
            if row is None:
                row = rows[mask] = _bits(mask, len(stems))
            out[i] = row
    return out
