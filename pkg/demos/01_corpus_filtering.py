"""
Corpus quality filtering walkthrough
====================================

Builds a handful of synthetic documents, computes the per-document quality
signals, applies the threshold rules, and prints which documents survive and
why the rest were dropped.
"""

from pathlib import Path

from iorpo.filtering import (
    BlocklistBundle,
    FilterConfig,
    apply_filters,
    compute_signals,
    downsample_topical,
)

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# a clean document: thousands of distinct words, high entropy, no boilerplate
clean = " ".join(f"w{i:05d}" for i in range(2500))

# the same document with a repeated 200-word block spliced in twice
block = " ".join(f"dupe{i:04d}" for i in range(200))
repeated = " ".join([block, block] + [f"w{i:05d}" for i in range(2100)])

# too short to be useful training text
short = "just a few words of text"

# boilerplate tell-tales: template residue and placeholder latin
curly = clean + " config{x} object{y}"
lorem = clean + " Lorem ipsum dolor sit amet"

docs = {
    "clean": clean,
    "repeated-block": repeated,
    "short": short,
    "curly-braces": curly,
    "lorem-ipsum": lorem,
}

blocklists = BlocklistBundle.fixture()
config = FilterConfig()

print("document          accepted  failed rules")
print("-" * 72)
for name, text in docs.items():
    signals = compute_signals(text, blocklists=blocklists)
    decision = apply_filters(signals, config)
    failed = ", ".join(decision.failed_rules) or "-"
    print(f"{name:<18}{str(decision.accepted):<10}{failed}")

# a closer look at the signals for the repeated-block document: every
# duplicate-n-gram fraction jumps because one 200-gram occurs twice
signals = compute_signals(repeated, blocklists=blocklists)
print("\nrepeated-block duplicate n-gram character fractions:")
for n, frac in sorted(signals.dupe_ngram_fracs.items()):
    print(f"  {n}-grams: {frac:.4f}")

# topical downsampling is separate from the quality rules: a document can be
# perfectly clean and still be dropped for coming from a news domain
for domain in ("blog.example", "news.dailybugle.example"):
    keep = downsample_topical(clean, domain, blocklists)
    print(f"\ndownsample_topical({domain!r}) -> keep={keep}")

# thresholds are plain data: persist and reload them
config_path = out_dir / "filter_config.json"
config.to_file(config_path)
print(f"\nwrote threshold config -> {config_path}")
reloaded = FilterConfig.from_file(config_path)
print(f"reloaded word-count bounds: {reloaded.word_count_range}")
