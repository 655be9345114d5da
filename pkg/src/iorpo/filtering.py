"""Corpus quality filtering for long-form training documents.

A document is scored into a QualitySignals record (pure counting, no
thresholds) and then gated by apply_filters against a FilterConfig. Signals
and default thresholds:

    rule tag                          signal                        default gate
    rps_doc_word_count                whitespace word count         2048 < wc < 5024
    rps_doc_unigram_entropy           word entropy (nats)           >= 3.0
    rps_doc_frac_no_alph_words        words w/o any letter          < 0.3
    rps_doc_curly_bracket             '{'+'}' chars / chars         <= 0.0
    rps_doc_lorem_ipsum               'lorem ipsum' hits / chars    <= 0.0
    rps_lines_javascript_counts       lines containing 'javascript' <= 0
    rps_doc_frac_chars_dupe_{n}grams  duplicate n-gram char mass    <= 0.15/0.14/0.13/0.12/0.11/0.10 for n=5..10
    rps_doc_frac_chars_top_{n}gram    top n-gram char mass          <= 0.20/0.18/0.16 for n=2..4
    rps_doc_ldnoobw_words             blocklist phrase hits         <= 0
    rps_doc_ut1_blacklist             domain in blacklist           must be absent
    ccnet_language_score              optional, checked if present  > 0.65
    ccnet_perplexity                  optional, checked if present  35 < p < 350
    rps_doc_books_importance          optional, checked if present  > 0

Separately from accept/reject, downsample_topical flags documents from news
domains or with a religious word fraction above 0.0005 for downsampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from . import textkit

DUPE_NGRAM_SIZES = (5, 6, 7, 8, 9, 10)
TOP_NGRAM_SIZES = (2, 3, 4)

DEFAULT_DUPE_THRESHOLDS = {5: 0.15, 6: 0.14, 7: 0.13, 8: 0.12, 9: 0.11, 10: 0.10}
DEFAULT_TOP_THRESHOLDS = {2: 0.20, 3: 0.18, 4: 0.16}

RELIGIOUS_DOWNSAMPLE_FRAC = 0.0005


@dataclass
class QualitySignals:
    """Per-document quality measurements. Never applies thresholds."""

    word_count: int
    unigram_entropy: float
    frac_no_alpha: float
    curly_bracket_ratio: float
    lorem_ipsum_ratio: float
    javascript_line_hits: int
    dupe_ngram_fracs: dict[int, float]
    top_ngram_fracs: dict[int, float]
    blocklist_word_hits: int
    ut1_category_hit: bool
    news_domain_hit: bool
    religious_word_frac: float
    ccnet_language_score: float | None = None
    ccnet_perplexity: float | None = None
    books_importance: float | None = None


@dataclass
class FilterConfig:
    """Thresholds for apply_filters; every field maps to one rule tag."""

    word_count_range: tuple[int, int] = (2048, 5024)  # exclusive endpoints
    min_unigram_entropy: float = 3.0
    max_frac_no_alpha: float = 0.3  # strict <
    max_curly_bracket_ratio: float = 0.0
    max_lorem_ipsum_ratio: float = 0.0
    max_javascript_line_hits: int = 0
    max_dupe_ngram_frac: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_DUPE_THRESHOLDS)
    )
    max_top_ngram_frac: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_TOP_THRESHOLDS)
    )
    max_blocklist_word_hits: int = 0
    allow_ut1_hit: bool = False
    min_language_score: float = 0.65  # strict >
    perplexity_range: tuple[float, float] = (35.0, 350.0)  # exclusive endpoints
    min_books_importance: float = 0.0  # strict >

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_tag_dict(), indent=2) + "\n")

    def to_tag_dict(self) -> dict:
        d: dict = {
            "rps_doc_word_count": list(self.word_count_range),
            "rps_doc_unigram_entropy": self.min_unigram_entropy,
            "rps_doc_frac_no_alph_words": self.max_frac_no_alpha,
            "rps_doc_curly_bracket": self.max_curly_bracket_ratio,
            "rps_doc_lorem_ipsum": self.max_lorem_ipsum_ratio,
            "rps_lines_javascript_counts": self.max_javascript_line_hits,
            "rps_doc_ldnoobw_words": self.max_blocklist_word_hits,
            "rps_doc_ut1_blacklist": self.allow_ut1_hit,
            "ccnet_language_score": self.min_language_score,
            "ccnet_perplexity": list(self.perplexity_range),
            "rps_doc_books_importance": self.min_books_importance,
        }
        for n, v in self.max_dupe_ngram_frac.items():
            d[f"rps_doc_frac_chars_dupe_{n}grams"] = v
        for n, v in self.max_top_ngram_frac.items():
            d[f"rps_doc_frac_chars_top_{n}gram"] = v
        return d

    @classmethod
    def from_file(cls, path: str | Path) -> "FilterConfig":
        return cls.from_tag_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_tag_dict(cls, tags: Mapping) -> "FilterConfig":
        """Build a config from a tag->threshold mapping; unknown tags error,
        missing tags keep their defaults."""
        cfg = cls()
        dupe = dict(cfg.max_dupe_ngram_frac)
        top = dict(cfg.max_top_ngram_frac)
        for tag, value in tags.items():
            if tag == "rps_doc_word_count":
                cfg.word_count_range = (int(value[0]), int(value[1]))
            elif tag == "rps_doc_unigram_entropy":
                cfg.min_unigram_entropy = float(value)
            elif tag == "rps_doc_frac_no_alph_words":
                cfg.max_frac_no_alpha = float(value)
            elif tag == "rps_doc_curly_bracket":
                cfg.max_curly_bracket_ratio = float(value)
            elif tag == "rps_doc_lorem_ipsum":
                cfg.max_lorem_ipsum_ratio = float(value)
            elif tag == "rps_lines_javascript_counts":
                cfg.max_javascript_line_hits = int(value)
            elif tag == "rps_doc_ldnoobw_words":
                cfg.max_blocklist_word_hits = int(value)
            elif tag == "rps_doc_ut1_blacklist":
                cfg.allow_ut1_hit = bool(value)
            elif tag == "ccnet_language_score":
                cfg.min_language_score = float(value)
            elif tag == "ccnet_perplexity":
                cfg.perplexity_range = (float(value[0]), float(value[1]))
            elif tag == "rps_doc_books_importance":
                cfg.min_books_importance = float(value)
            elif tag.startswith("rps_doc_frac_chars_dupe_") and tag.endswith("grams"):
                n = int(tag[len("rps_doc_frac_chars_dupe_") : -len("grams")])
                dupe[n] = float(value)
            elif tag.startswith("rps_doc_frac_chars_top_") and tag.endswith("gram"):
                n = int(tag[len("rps_doc_frac_chars_top_") : -len("gram")])
                top[n] = float(value)
            else:
                raise ValueError(f"unknown filter rule tag: {tag!r}")
        cfg.max_dupe_ngram_frac = dupe
        cfg.max_top_ngram_frac = top
        return cfg


@dataclass
class FilterDecision:
    accepted: bool
    failed_rules: list[str]
    signals: QualitySignals


@dataclass
class BlocklistBundle:
    """Word/domain lists backing the blocklist-based signals.

    naughty_phrases: phrases (possibly multi-word) counted case-insensitively.
    ut1_domains / news_domains: domain names, matched exactly or as a
    dot-suffix of the source domain. religious_words: single words for the
    downsampling fraction.
    """

    naughty_phrases: tuple[str, ...] = ()
    ut1_domains: frozenset[str] = frozenset()
    news_domains: frozenset[str] = frozenset()
    religious_words: frozenset[str] = frozenset()

    @staticmethod
    def _read_list(path: Path) -> list[str]:
        if not path.exists():
            return []
        out = []
        for line in path.read_text().splitlines():
            line = line.strip().lower()
            if line and not line.startswith("#"):
                out.append(line)
        return out

    @classmethod
    def from_dir(cls, path: str | Path) -> "BlocklistBundle":
        """Load naughty_words.txt, ut1_domains.txt, news_domains.txt and
        religious_words.txt from a directory; missing files mean empty lists."""
        p = Path(path)
        return cls(
            naughty_phrases=tuple(cls._read_list(p / "naughty_words.txt")),
            ut1_domains=frozenset(cls._read_list(p / "ut1_domains.txt")),
            news_domains=frozenset(cls._read_list(p / "news_domains.txt")),
            religious_words=frozenset(cls._read_list(p / "religious_words.txt")),
        )

    @classmethod
    def fixture(cls) -> "BlocklistBundle":
        """The tiny lists shipped with the package (testing/demo scale)."""
        root = resources.files("iorpo").joinpath("data")
        with resources.as_file(root) as p:
            return cls.from_dir(p)


def _clean_word(tok: str) -> str:
    return tok.strip(".,;:!?\"'()[]{}<>*_`~").lower()


def _domain_in(domain: str | None, entries: frozenset[str]) -> bool:
    if not domain:
        return False
    d = domain.strip().lower()
    if d.startswith("www."):
        d = d[4:]
    return any(d == e or d.endswith("." + e) for e in entries)


def count_blocklist_hits(words: Iterable[str], phrases: Iterable[str]) -> int:
    """Whole-phrase, case-insensitive matches over punctuation-stripped words,
    counted by start position (overlapping occurrences all count)."""
    cleaned = [_clean_word(w) for w in words]
    hits = 0
    for phrase in phrases:
        target = tuple(phrase.split())
        if not target:
            continue
        span = len(target)
        for i in range(len(cleaned) - span + 1):
            if tuple(cleaned[i : i + span]) == target:
                hits += 1
    return hits


def religious_word_frac(words: list[str], religious: frozenset[str]) -> float:
    if not words:
        return 0.0
    hits = sum(1 for w in words if _clean_word(w) in religious)
    return hits / len(words)


def compute_signals(
    doc: str,
    blocklists: BlocklistBundle | None = None,
    source_domain: str | None = None,
    external: Mapping[str, float] | None = None,
) -> QualitySignals:
    """Measure every quality signal for one document.

    blocklists=None behaves like empty lists. source_domain drives the two
    domain signals; unknown domain leaves them False. external may carry
    precomputed upstream scores under keys ccnet_language_score /
    ccnet_perplexity / books_importance; absent keys stay None and are
    skipped by apply_filters.
    """
    bl = blocklists or BlocklistBundle()
    words = list(textkit.tokenize(doc, textkit.WORD))
    lowered = doc.lower()
    n_chars = len(doc)

    try:
        entropy = textkit.unigram_entropy(words)
    except ValueError:
        entropy = 0.0

    lorem_hits = lowered.count("lorem ipsum")
    js_lines = sum(1 for line in lowered.splitlines() if "javascript" in line)

    external = external or {}
    return QualitySignals(
        word_count=len(words),
        unigram_entropy=entropy,
        frac_no_alpha=textkit.frac_no_alpha_words(words),
        curly_bracket_ratio=(doc.count("{") + doc.count("}")) / n_chars if n_chars else 0.0,
        lorem_ipsum_ratio=lorem_hits / n_chars if n_chars else 0.0,
        javascript_line_hits=js_lines,
        dupe_ngram_fracs={n: textkit.frac_chars_dupe_ngrams(words, n) for n in DUPE_NGRAM_SIZES},
        top_ngram_fracs={n: textkit.frac_chars_top_ngram(words, n) for n in TOP_NGRAM_SIZES},
        blocklist_word_hits=count_blocklist_hits(words, bl.naughty_phrases),
        ut1_category_hit=_domain_in(source_domain, bl.ut1_domains),
        news_domain_hit=_domain_in(source_domain, bl.news_domains),
        religious_word_frac=religious_word_frac(words, bl.religious_words),
        ccnet_language_score=external.get("ccnet_language_score"),
        ccnet_perplexity=external.get("ccnet_perplexity"),
        books_importance=external.get("books_importance"),
    )


def apply_filters(signals: QualitySignals, config: FilterConfig | None = None) -> FilterDecision:
    """Gate one document. failed_rules lists every violated rule tag in the
    canonical order above; optional signals left at None are skipped."""
    cfg = config or FilterConfig()
    s = signals
    failed: list[str] = []

    lo, hi = cfg.word_count_range
    if not (lo < s.word_count < hi):
        failed.append("rps_doc_word_count")
    if not (s.unigram_entropy >= cfg.min_unigram_entropy):
        failed.append("rps_doc_unigram_entropy")
    if not (s.frac_no_alpha < cfg.max_frac_no_alpha):
        failed.append("rps_doc_frac_no_alph_words")
    if not (s.curly_bracket_ratio <= cfg.max_curly_bracket_ratio):
        failed.append("rps_doc_curly_bracket")
    if not (s.lorem_ipsum_ratio <= cfg.max_lorem_ipsum_ratio):
        failed.append("rps_doc_lorem_ipsum")
    if not (s.javascript_line_hits <= cfg.max_javascript_line_hits):
        failed.append("rps_lines_javascript_counts")
    for n in sorted(cfg.max_dupe_ngram_frac):
        if s.dupe_ngram_fracs.get(n, 0.0) > cfg.max_dupe_ngram_frac[n]:
            failed.append(f"rps_doc_frac_chars_dupe_{n}grams")
    for n in sorted(cfg.max_top_ngram_frac):
        if s.top_ngram_fracs.get(n, 0.0) > cfg.max_top_ngram_frac[n]:
            failed.append(f"rps_doc_frac_chars_top_{n}gram")
    if not (s.blocklist_word_hits <= cfg.max_blocklist_word_hits):
        failed.append("rps_doc_ldnoobw_words")
    if s.ut1_category_hit and not cfg.allow_ut1_hit:
        failed.append("rps_doc_ut1_blacklist")
    if s.ccnet_language_score is not None and not (s.ccnet_language_score > cfg.min_language_score):
        failed.append("ccnet_language_score")
    if s.ccnet_perplexity is not None:
        plo, phi = cfg.perplexity_range
        if not (plo < s.ccnet_perplexity < phi):
            failed.append("ccnet_perplexity")
    if s.books_importance is not None and not (s.books_importance > cfg.min_books_importance):
        failed.append("rps_doc_books_importance")

    return FilterDecision(accepted=not failed, failed_rules=failed, signals=s)


def downsample_topical(
    doc: str,
    source_domain: str | None,
    lists: BlocklistBundle,
) -> bool:
    """Keep (True) / drop (False) decision for topical downsampling.

    Drops documents from news domains and documents whose religious word
    fraction exceeds 0.0005; everything else is kept. Independent of the
    accept/reject filter gate.
    """
    if _domain_in(source_domain, lists.news_domains):
        return False
    words = list(textkit.tokenize(doc, textkit.WORD))
    return religious_word_frac(words, lists.religious_words) <= RELIGIOUS_DOWNSAMPLE_FRAC
