"""Corpus filter tests: engineered 12-document fixture plus rule unit tests.

Signals on the fixture are verified against independent brute-force
implementations (plain Counter/string code, no shared helpers) so the two
routes cannot inherit each other's bugs.
"""

import json
import math
from collections import Counter

import pytest

from filter_fixture import FIXTURE_DOCS
from iorpo import filtering as fl

BUNDLE = fl.BlocklistBundle.fixture()


# ---------------------------------------------------------------- brute force

def _bf_entropy(words):
    if not words:
        return 0.0
    n = len(words)
    return -sum((c / n) * math.log(c / n) for c in Counter(words).values())


def _bf_dupe_frac(words, n):
    grams = [tuple(words[i : i + n]) for i in range(len(words) - n + 1)]
    counts = Counter(grams)
    covered = set()
    for i, g in enumerate(grams):
        if counts[g] > 1:
            covered.update(range(i, i + n))
    total = sum(len(w) for w in words)
    return sum(len(words[i]) for i in covered) / total if total else 0.0


def _bf_top_frac(words, n):
    grams = [tuple(words[i : i + n]) for i in range(len(words) - n + 1)]
    if not grams:
        return 0.0
    counts = Counter(grams)
    top = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    total = sum(len(w) for w in words)
    return min(top[1] * sum(len(t) for t in top[0]) / total, 1.0)


def _bf_clean(word):
    return word.strip(".,;:!?\"'()[]{}<>*_`~").lower()


def _bf_blocklist_hits(words, phrases):
    cleaned = [_bf_clean(w) for w in words]
    hits = 0
    for phrase in phrases:
        parts = phrase.split()
        for i in range(len(cleaned) - len(parts) + 1):
            if cleaned[i : i + len(parts)] == parts:
                hits += 1
    return hits


def _bf_domain_hit(domain, entries):
    if not domain:
        return False
    d = domain.lower().strip()
    if d.startswith("www."):
        d = d[4:]
    return any(d == e or d.endswith("." + e) for e in entries)


def _bf_signals(doc):
    text = doc["text"]
    words = text.split()
    n_chars = len(text)
    return {
        "word_count": len(words),
        "unigram_entropy": _bf_entropy(words),
        "frac_no_alpha": (
            sum(1 for w in words if not any(c.isalpha() for c in w)) / len(words)
        ),
        "curly_bracket_ratio": (text.count("{") + text.count("}")) / n_chars,
        "lorem_ipsum_ratio": text.lower().count("lorem ipsum") / n_chars,
        "javascript_line_hits": sum(
            1 for line in text.lower().splitlines() if "javascript" in line
        ),
        "dupe_ngram_fracs": {n: _bf_dupe_frac(words, n) for n in range(5, 11)},
        "top_ngram_fracs": {n: _bf_top_frac(words, n) for n in (2, 3, 4)},
        "blocklist_word_hits": _bf_blocklist_hits(words, BUNDLE.naughty_phrases),
        "ut1_category_hit": _bf_domain_hit(doc["source_domain"], BUNDLE.ut1_domains),
        "news_domain_hit": _bf_domain_hit(doc["source_domain"], BUNDLE.news_domains),
        "religious_word_frac": (
            sum(1 for w in words if _bf_clean(w) in BUNDLE.religious_words) / len(words)
        ),
    }


# ------------------------------------------------------------ fixture corpus

@pytest.mark.parametrize("doc", FIXTURE_DOCS, ids=lambda d: d["id"])
def test_fixture_decisions_and_failed_rules(doc):
    signals = fl.compute_signals(
        doc["text"],
        blocklists=BUNDLE,
        source_domain=doc["source_domain"],
        external=doc["external"],
    )
    decision = fl.apply_filters(signals)
    assert decision.failed_rules == doc["expected_failed"]
    assert decision.accepted == (not doc["expected_failed"])


@pytest.mark.parametrize("doc", FIXTURE_DOCS, ids=lambda d: d["id"])
def test_fixture_signals_match_brute_force(doc):
    got = fl.compute_signals(
        doc["text"],
        blocklists=BUNDLE,
        source_domain=doc["source_domain"],
        external=doc["external"],
    )
    want = _bf_signals(doc)
    assert got.word_count == want["word_count"]
    assert got.unigram_entropy == pytest.approx(want["unigram_entropy"], abs=1e-9)
    assert got.frac_no_alpha == pytest.approx(want["frac_no_alpha"], abs=1e-9)
    assert got.curly_bracket_ratio == pytest.approx(want["curly_bracket_ratio"], abs=1e-9)
    assert got.lorem_ipsum_ratio == pytest.approx(want["lorem_ipsum_ratio"], abs=1e-9)
    assert got.javascript_line_hits == want["javascript_line_hits"]
    for n in range(5, 11):
        assert got.dupe_ngram_fracs[n] == pytest.approx(
            want["dupe_ngram_fracs"][n], abs=1e-9
        )
    for n in (2, 3, 4):
        assert got.top_ngram_fracs[n] == pytest.approx(
            want["top_ngram_fracs"][n], abs=1e-9
        )
    assert got.blocklist_word_hits == want["blocklist_word_hits"]
    assert got.ut1_category_hit == want["ut1_category_hit"]
    assert got.news_domain_hit == want["news_domain_hit"]
    assert got.religious_word_frac == pytest.approx(
        want["religious_word_frac"], abs=1e-9
    )
    # external passthrough
    assert got.ccnet_language_score == doc["external"].get("ccnet_language_score")
    assert got.ccnet_perplexity == doc["external"].get("ccnet_perplexity")
    assert got.books_importance == doc["external"].get("books_importance")


def test_fixture_closed_form_spot_checks():
    by_id = {d["id"]: d for d in FIXTURE_DOCS}
    clean = fl.compute_signals(by_id["doc-01-clean"]["text"], BUNDLE)
    assert clean.word_count == 2500
    assert clean.unigram_entropy == pytest.approx(math.log(2500), abs=1e-9)
    assert all(v == 0.0 for v in clean.dupe_ngram_fracs.values())

    dupe = fl.compute_signals(by_id["doc-09-dupe-block"]["text"], BUNDLE)
    # 400 covered tokens of 2500, uniform 5-char words.
    for n in range(5, 11):
        assert dupe.dupe_ngram_fracs[n] == pytest.approx(400 / 2500, abs=1e-9)

    top = fl.compute_signals(by_id["doc-10-top-pair"]["text"], BUNDLE)
    assert top.top_ngram_fracs[2] == pytest.approx(300 * 10 / 13000, abs=1e-9)

    block = fl.compute_signals(by_id["doc-11-blocklist"]["text"], BUNDLE)
    assert block.blocklist_word_hits == 2


# ---------------------------------------------------------------- unit tests

def test_word_count_bounds_are_exclusive():
    base = fl.compute_signals(" ".join(f"w{i:04d}" for i in range(2500)))
    ok = fl.apply_filters(base)
    assert ok.accepted

    cfg = fl.FilterConfig(word_count_range=(2500, 5024))
    assert "rps_doc_word_count" in fl.apply_filters(base, cfg).failed_rules
    cfg = fl.FilterConfig(word_count_range=(2048, 2500))
    assert "rps_doc_word_count" in fl.apply_filters(base, cfg).failed_rules


def test_optional_external_signals_skipped_when_absent():
    sig = fl.compute_signals(" ".join(f"w{i:04d}" for i in range(2500)))
    assert sig.ccnet_language_score is None
    decision = fl.apply_filters(sig)
    assert decision.accepted
    assert "ccnet_language_score" not in decision.failed_rules


def test_domain_matching_rules():
    lists = fl.BlocklistBundle(ut1_domains=frozenset({"badsite.example"}))
    hit = lambda d: fl.compute_signals("x", lists, source_domain=d).ut1_category_hit
    assert hit("badsite.example")
    assert hit("BADSITE.example")
    assert hit("www.badsite.example")
    assert hit("deep.sub.badsite.example")
    assert not hit("notbadsite.example")
    assert not hit("badsite.example.org")
    assert not hit(None)


def test_count_blocklist_hits_overlap_and_punctuation():
    words = "the Belgium, belgium man said utter blortch utter blortch".split()
    phrases = ("belgium", "utter blortch")
    assert fl.count_blocklist_hits(words, phrases) == 4
    # overlapping single-word phrase occurrences count per position
    assert fl.count_blocklist_hits(["aa", "aa", "aa"], ("aa aa",)) == 2


def test_downsample_topical():
    lists = fl.BlocklistBundle(
        news_domains=frozenset({"heraldwire.example"}),
        religious_words=frozenset({"sermon"}),
    )
    text_ok = " ".join(["word"] * 5000)
    assert fl.downsample_topical(text_ok, None, lists)
    assert not fl.downsample_topical(text_ok, "heraldwire.example", lists)
    # 3 hits in 3000 words: fraction 0.001 > 0.0005 -> drop
    text_rel = " ".join(["word"] * 2997 + ["sermon"] * 3)
    assert not fl.downsample_topical(text_rel, None, lists)
    # 1 hit in 3000: fraction below threshold -> keep
    text_light = " ".join(["word"] * 2999 + ["sermon"])
    assert fl.downsample_topical(text_light, None, lists)


def test_filter_config_file_round_trip(tmp_path):
    cfg = fl.FilterConfig(
        word_count_range=(10, 100),
        min_unigram_entropy=1.5,
        max_dupe_ngram_frac={5: 0.5, 10: 0.2},
        perplexity_range=(1.0, 9.0),
    )
    path = tmp_path / "filter.json"
    cfg.to_file(path)
    back = fl.FilterConfig.from_file(path)
    assert back.word_count_range == (10, 100)
    assert back.min_unigram_entropy == 1.5
    assert back.max_dupe_ngram_frac[5] == 0.5
    assert back.max_dupe_ngram_frac[10] == 0.2
    assert back.perplexity_range == (1.0, 9.0)
    # untouched thresholds keep defaults
    assert back.max_top_ngram_frac == fl.DEFAULT_TOP_THRESHOLDS


def test_filter_config_rejects_unknown_tag():
    with pytest.raises(ValueError):
        fl.FilterConfig.from_tag_dict({"rps_doc_mystery_signal": 1})


def test_blocklist_bundle_from_dir_skips_comments(tmp_path):
    (tmp_path / "naughty_words.txt").write_text("# comment\nBadWord\n\n")
    bundle = fl.BlocklistBundle.from_dir(tmp_path)
    assert bundle.naughty_phrases == ("badword",)
    assert bundle.ut1_domains == frozenset()


def test_empty_document_signals():
    sig = fl.compute_signals("")
    assert sig.word_count == 0
    assert sig.unigram_entropy == 0.0
    assert sig.curly_bracket_ratio == 0.0
    assert not fl.apply_filters(sig).accepted
