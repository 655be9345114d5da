"""Deterministic tokenization and n-gram statistics.

Two schemes: "word-whitespace" (runs of Unicode whitespace separate tokens, so
no token is ever empty) and "byte" (one token per UTF-8 byte). Everything here
is pure and order-stable; the corpus filter and the evaluation metrics both
build on these primitives.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

WORD = "word-whitespace"
BYTE = "byte"
SCHEMES = (WORD, BYTE)


@dataclass(frozen=True)
class TokenSeq:
    """An immutable token sequence tagged with the scheme that produced it."""

    tokens: tuple[str, ...]
    scheme: str = WORD

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown tokenization scheme: {self.scheme!r}")
        if any(t == "" for t in self.tokens):
            raise ValueError("TokenSeq may not contain empty tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(text: str, scheme: str = WORD, lowercase: bool = False) -> TokenSeq:
    """Split text into a TokenSeq.

    word-whitespace splits on whitespace runs (leading/trailing whitespace
    ignored). byte yields one token per UTF-8 byte, each rendered as the
    latin-1 character for that byte value. lowercase applies str.lower()
    before splitting; callers that need normalised counts opt in explicitly.
    """
    if lowercase:
        text = text.lower()
    if scheme == WORD:
        return TokenSeq(tuple(text.split()), WORD)
    if scheme == BYTE:
        return TokenSeq(tuple(chr(b) for b in text.encode("utf-8")), BYTE)
    raise ValueError(f"unknown tokenization scheme: {scheme!r}")


def detokenize(seq: TokenSeq) -> str:
    """Inverse of tokenize up to whitespace normalisation (word scheme joins
    with single spaces; byte scheme re-decodes the byte string as UTF-8)."""
    if seq.scheme == BYTE:
        return "".join(seq.tokens).encode("latin-1").decode("utf-8")
    return " ".join(seq.tokens)


def _tokens(seq: TokenSeq | Sequence[str]) -> tuple[str, ...]:
    if isinstance(seq, TokenSeq):
        return seq.tokens
    return tuple(seq)


@dataclass
class NgramStats:
    """Counts of every n-gram in a sequence.

    total_positions = max(len(seq) - n + 1, 0), the number of window start
    positions; occurrences are counted per start position, so overlapping
    occurrences all count.
    """

    n: int
    counts: dict[tuple[str, ...], int]
    total_positions: int


def ngram_stats(seq: TokenSeq | Sequence[str], n: int) -> NgramStats:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    toks = _tokens(seq)
    total = max(len(toks) - n + 1, 0)
    counts = Counter(tuple(toks[i : i + n]) for i in range(total))
    return NgramStats(n=n, counts=dict(counts), total_positions=total)


def unigram_entropy(seq: TokenSeq | Sequence[str]) -> float:
    """Shannon entropy of the token distribution, in nats."""
    toks = _tokens(seq)
    if not toks:
        raise ValueError("entropy of an empty sequence is undefined")
    total = len(toks)
    return -sum((c / total) * math.log(c / total) for c in Counter(toks).values())


def frac_chars_dupe_ngrams(seq: TokenSeq | Sequence[str], n: int) -> float:
    """Fraction of character mass covered by duplicated n-grams.

    A token is covered if it lies inside at least one window whose n-gram
    occurs >= 2 times; each covered token contributes its character length
    once (no double counting, no separators). Empty input gives 0.0.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    toks = _tokens(seq)
    total_chars = sum(len(t) for t in toks)
    if total_chars == 0:
        return 0.0
    stats = ngram_stats(toks, n)
    covered = [False] * len(toks)
    for start in range(stats.total_positions):
        if stats.counts[tuple(toks[start : start + n])] >= 2:
            for i in range(start, start + n):
                covered[i] = True
    dup_chars = sum(len(t) for t, hit in zip(toks, covered) if hit)
    return dup_chars / total_chars


def frac_chars_top_ngram(seq: TokenSeq | Sequence[str], n: int) -> float:
    """Character-mass share of the single most frequent n-gram.

    share = count * (character length of the n-gram's tokens) / total token
    characters, clamped to 1.0 since overlapping occurrences can overcount.
    Ties on count break toward the lexicographically smallest n-gram.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    toks = _tokens(seq)
    total_chars = sum(len(t) for t in toks)
    if total_chars == 0:
        return 0.0
    stats = ngram_stats(toks, n)
    if not stats.counts:
        return 0.0
    gram, count = min(stats.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    gram_chars = sum(len(t) for t in gram)
    return min(count * gram_chars / total_chars, 1.0)


def frac_no_alpha_words(seq: TokenSeq | Sequence[str]) -> float:
    """Fraction of tokens containing no alphabetic character. Empty -> 0.0."""
    toks = _tokens(seq)
    if not toks:
        return 0.0
    bad = sum(1 for t in toks if not any(ch.isalpha() for ch in t))
    return bad / len(toks)
