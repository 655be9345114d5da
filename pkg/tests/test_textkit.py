"""Tokenization and n-gram statistic tests, with brute-force oracles."""

import math
import random
from collections import Counter

import pytest

from iorpo import textkit as tk


def test_tokenize_word_scheme_strips_and_splits():
    seq = tk.tokenize("  the quick\tbrown\n\nfox  ")
    assert seq.tokens == ("the", "quick", "brown", "fox")
    assert seq.scheme == tk.WORD


def test_tokenize_lowercase_flag():
    assert tk.tokenize("The THE the", lowercase=True).tokens == ("the",) * 3
    assert tk.tokenize("The THE the").tokens == ("The", "THE", "the")


def test_tokenize_byte_scheme_round_trips_utf8():
    text = "héllo ✓"
    seq = tk.tokenize(text, scheme=tk.BYTE)
    assert len(seq) == len(text.encode("utf-8"))
    assert tk.detokenize(seq) == text


def test_detokenize_word_scheme_normalises_whitespace():
    assert tk.detokenize(tk.tokenize("a   b \n c")) == "a b c"


def test_tokenseq_rejects_empty_tokens_and_bad_scheme():
    with pytest.raises(ValueError):
        tk.TokenSeq(("a", ""), tk.WORD)
    with pytest.raises(ValueError):
        tk.TokenSeq(("a",), "chars")
    with pytest.raises(ValueError):
        tk.tokenize("x", scheme="chars")


def test_ngram_stats_counts_by_start_position():
    stats = tk.ngram_stats(["a", "a", "a", "a"], 2)
    assert stats.total_positions == 3
    assert stats.counts == {("a", "a"): 3}


def test_ngram_stats_short_sequence_has_no_positions():
    stats = tk.ngram_stats(["a"], 2)
    assert stats.total_positions == 0
    assert stats.counts == {}
    with pytest.raises(ValueError):
        tk.ngram_stats(["a"], 0)


def test_unigram_entropy_uniform_and_point_mass():
    assert tk.unigram_entropy(["a", "b", "c", "d"]) == pytest.approx(math.log(4))
    assert tk.unigram_entropy(["a", "a", "a"]) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        tk.unigram_entropy([])


def test_frac_chars_dupe_ngrams_definition_example():
    # duplicated bigram ("aa","b") covers tokens 0..3: 6 of 10 characters.
    assert tk.frac_chars_dupe_ngrams(["aa", "b", "aa", "b", "zzzz"], 2) == pytest.approx(0.6)
    # uniform token lengths: 4 of 8 characters.
    assert tk.frac_chars_dupe_ngrams(["a", "b", "a", "b", "zzzz"], 2) == pytest.approx(0.5)


def test_frac_chars_dupe_ngrams_no_duplicates():
    assert tk.frac_chars_dupe_ngrams(["a", "b", "c", "d"], 2) == 0.0
    assert tk.frac_chars_dupe_ngrams([], 2) == 0.0
    with pytest.raises(ValueError):
        tk.frac_chars_dupe_ngrams(["a", "b"], 1)


def test_frac_chars_top_ngram_overlap_clamps_to_one():
    # ("a","a") occurs 3 times, gram_chars=2, total=4 -> 6/4 clamped.
    assert tk.frac_chars_top_ngram(["a", "a", "a", "a"], 2) == 1.0


def test_frac_chars_top_ngram_tie_breaks_lexicographically():
    # ("a","b") and ("b","a") both occur twice; tie goes to ("a","b").
    toks = ["a", "b", "a", "b", "a"]
    stats = tk.ngram_stats(toks, 2)
    assert stats.counts[("a", "b")] == stats.counts[("b", "a")] == 2
    assert tk.frac_chars_top_ngram(toks, 2) == pytest.approx(2 * 2 / 5)


def test_frac_no_alpha_words():
    assert tk.frac_no_alpha_words(["abc", "123", "a1", "--", "."]) == pytest.approx(3 / 5)
    assert tk.frac_no_alpha_words([]) == 0.0


def _brute_dupe_frac(toks, n):
    grams = [tuple(toks[i : i + n]) for i in range(max(len(toks) - n + 1, 0))]
    counts = Counter(grams)
    covered = set()
    for i, g in enumerate(grams):
        if counts[g] >= 2:
            covered.update(range(i, i + n))
    total = sum(len(t) for t in toks)
    if total == 0:
        return 0.0
    return sum(len(toks[i]) for i in covered) / total


def _brute_top_frac(toks, n):
    grams = [tuple(toks[i : i + n]) for i in range(max(len(toks) - n + 1, 0))]
    if not grams:
        return 0.0
    counts = Counter(grams)
    best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    total = sum(len(t) for t in toks)
    return min(best[1] * sum(len(t) for t in best[0]) / total, 1.0)


def test_ngram_char_fractions_match_brute_force_on_random_sequences():
    rng = random.Random(20240817)
    alphabet = ["a", "bb", "ccc", "d", "ee"]
    for _ in range(300):
        toks = rng.choices(alphabet, k=rng.randrange(0, 40))
        for n in (2, 3, 4):
            got_d = tk.frac_chars_dupe_ngrams(toks, n)
            got_t = tk.frac_chars_top_ngram(toks, n)
            assert got_d == pytest.approx(_brute_dupe_frac(toks, n), abs=1e-12)
            assert got_t == pytest.approx(_brute_top_frac(toks, n), abs=1e-12)


def test_entropy_matches_counter_oracle_on_random_sequences():
    rng = random.Random(7)
    for _ in range(50):
        toks = rng.choices("abcdefgh", k=rng.randrange(1, 60))
        counts = Counter(toks)
        want = -sum(
            (c / len(toks)) * math.log(c / len(toks)) for c in counts.values()
        )
        assert tk.unigram_entropy(toks) == pytest.approx(want, abs=1e-12)
