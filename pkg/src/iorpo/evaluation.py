"""Evaluation harness: length and repetition metrics, specificity-pair
ranking, judge/preference prompting protocols, and annotation agreement.

All metric functions are pure and deterministic; anything sampled (which
constraints a specificity pair includes, the instruction order shown to a
preference judge) draws from an explicit seed.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dataset import Instruction, render_instruction_text
from .textkit import WORD, TokenSeq, tokenize
from .tinylm import SequenceScore

LABELS = ("yes", "no", "partially")


class MissingCorruptionError(ValueError):
    """A constraint selected for corruption has no corrupted_text."""


class MalformedVerdictError(ValueError):
    """Judge response lacks the delimited answer/reasoning/quote object."""


class NoPairableValuesError(ValueError):
    """No unit carries two or more labels, so agreement is undefined."""


# --------------------------------------------------------------------------
# length and repetition metrics


def length_stats(texts: Sequence[str], scheme: str = WORD) -> dict[str, float]:
    """mean / median / p10 / p90 of per-text token counts."""
    if not texts:
        raise ValueError("length_stats needs at least one text")
    counts = np.array([len(tokenize(t, scheme)) for t in texts], dtype=np.float64)
    return {
        "mean": float(counts.mean()),
        "median": float(np.median(counts)),
        "p10": float(np.percentile(counts, 10)),
        "p90": float(np.percentile(counts, 90)),
    }


def _window_counts(tokens: Sequence[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def detect_repetitions(
    seq: TokenSeq | Sequence[str], n: int, min_count: int = 3
) -> list[tuple[tuple[str, ...], int]]:
    """All n-grams occurring at least min_count times (overlapping starts
    count), sorted by descending count then lexicographically."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tokens = seq.tokens if isinstance(seq, TokenSeq) else tuple(seq)
    hits = [(g, c) for g, c in _window_counts(tokens, n).items() if c >= min_count]
    hits.sort(key=lambda gc: (-gc[1], gc[0]))
    return hits


def repetition_flag_rate(
    texts: Sequence[str], n: int, min_count: int = 3, scheme: str = WORD
) -> float:
    """Fraction of texts containing at least one flagged n-gram."""
    if not texts:
        raise ValueError("repetition_flag_rate needs at least one text")
    flagged = sum(
        1 for t in texts if detect_repetitions(tokenize(t, scheme), n, min_count)
    )
    return flagged / len(texts)


def segmented_repetition_rate(
    seq: TokenSeq | Sequence[str], n: int = 5, boundary: int = 2048, min_count: int = 3
) -> tuple[float, float]:
    """Repetition density before/after a token boundary.

    A window belongs to the segment of its start index; its n-gram count is
    taken over the whole text.  Each rate is the fraction of the segment's
    window starts whose n-gram occurs >= min_count times; a segment with no
    window starts yields 0.0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    tokens = seq.tokens if isinstance(seq, TokenSeq) else tuple(seq)
    counts = _window_counts(tokens, n)
    before_hits = before_total = after_hits = after_total = 0
    for i in range(len(tokens) - n + 1):
        repeated = counts[tuple(tokens[i : i + n])] >= min_count
        if i < boundary:
            before_total += 1
            before_hits += repeated
        else:
            after_total += 1
            after_hits += repeated
    before = before_hits / before_total if before_total else 0.0
    after = after_hits / after_total if after_total else 0.0
    return before, after


# --------------------------------------------------------------------------
# specificity pairs and ranking


_COUNT_SPECS = ("M", "M/2", "1")
_ALLOWED_SETTINGS = (("M", "M"), ("M", "M/2"), ("M", "1"), ("M/2", "M/2"), ("1", "1"))


@dataclass(frozen=True)
class SpecificitySetting:
    """How many constraints a pair includes and how many are corrupted.

    Both fields are count specs relative to an instruction's constraint
    count M; only the five studied combinations are constructible.
    """

    included: str
    corrupted: str

    def __post_init__(self):
        if (self.included, self.corrupted) not in _ALLOWED_SETTINGS:
            raise ValueError(
                f"setting ({self.included}, {self.corrupted}) is not one of "
                f"{_ALLOWED_SETTINGS}"
            )

    @classmethod
    def parse(cls, text: str) -> "SpecificitySetting":
        """Accepts 'M,M/2' or '(M, M/2)' style strings."""
        parts = [p.strip() for p in text.strip().strip("()").split(",")]
        if len(parts) != 2:
            raise ValueError(f"cannot parse setting from {text!r}")
        return cls(parts[0], parts[1])

    def resolve(self, m: int) -> tuple[int, int]:
        """Concrete (n_included, n_corrupted) for an instruction with M
        constraints; M/2 means floor(M/2) with a minimum of 1."""
        if m < 1:
            raise ValueError("M must be >= 1")

        def count(spec: str) -> int:
            if spec == "M":
                return m
            if spec == "M/2":
                return max(1, m // 2)
            return 1

        return count(self.included), count(self.corrupted)

    def __str__(self) -> str:
        return f"({self.included},{self.corrupted})"


FIVE_SETTINGS = tuple(SpecificitySetting(a, b) for a, b in _ALLOWED_SETTINGS)


def build_specificity_pair(
    instr: Instruction, setting: SpecificitySetting, seed: int
) -> tuple[str, str]:
    """Render a (faithful, corrupted) instruction pair for one setting.

    Seeded choices pick which constraints are included and, among those,
    which get their corrupted form in the second string.  Constraint order
    is preserved and the main goal is identical on both sides.
    """
    m = len(instr.constraints)
    n_inc, n_cor = setting.resolve(m)
    rng = random.Random(seed)
    included = sorted(rng.sample(range(m), n_inc))
    corrupted = set(rng.sample(included, n_cor))

    gold_texts, corrupt_texts = [], []
    for i in included:
        c = instr.constraints[i]
        gold_texts.append(c.text)
        if i in corrupted:
            if not c.corrupted_text:
                raise MissingCorruptionError(
                    f"constraint {i} has no corrupted form"
                )
            corrupt_texts.append(c.corrupted_text)
        else:
            corrupt_texts.append(c.text)
    x_w = render_instruction_text(instr.main_goal, gold_texts)
    x_l = render_instruction_text(instr.main_goal, corrupt_texts)
    return x_w, x_l


@dataclass(frozen=True)
class RankingRecord:
    example_id: str
    logps_w: float
    logps_l: float

    @property
    def correct(self) -> bool:
        # strict: a tie counts as incorrect
        return self.logps_w > self.logps_l


def ranking_accuracy(
    scorer: Callable[[str, str], SequenceScore],
    examples: Sequence,
    setting: SpecificitySetting,
    seed: int,
) -> tuple[float, list[RankingRecord]]:
    """Fraction of examples whose response scores strictly higher under the
    faithful instruction; scores are total (summed) log-probabilities."""
    if not examples:
        raise ValueError("ranking_accuracy needs at least one example")
    rng = random.Random(seed)
    records = []
    for ex in examples:
        pair_seed = rng.randrange(2**32)
        x_w, x_l = build_specificity_pair(ex.instruction, setting, pair_seed)
        records.append(
            RankingRecord(
                example_id=ex.id,
                logps_w=scorer(x_w, ex.y).sum_logp,
                logps_l=scorer(x_l, ex.y).sum_logp,
            )
        )
    accuracy = sum(r.correct for r in records) / len(records)
    return accuracy, records


# --------------------------------------------------------------------------
# judge protocol

JUDGE_PROMPT = '''You will be given a text and its corresponding instruction, which contains the text's main goal and a constraint. Determine whether the text satisfies the constraint (not the main goal). You should return your answer (Yes/No/Partially) along with your reasoning and a quote in the text that supports your reasoning (the quote should not contain any double quotation marks). Your answer should contain 3 fields: "answer", "reasoning", and "quote". DO NOT output anything else other than the response, which starts with "<<" and ending with ">>".

# Example 1: The text satisfies the constraint.
- Main goal: Write a first-person narrative describing a serene morning in a remote village.
- Constraint: You must not use the letter 'e'.
- Text: Dawn cracks with a yawn. On a hill, a hut sits, tranquil. Bright light climbs, casting gold on grass. In this calm morning, air is cool, birds sing softly. I stroll down paths, sipping hot cocoa, watching day start. Such is this dawn's charm, lifting spirits, as world awakens.
- Your response: <<"answer": "Yes", "reasoning": "The text does not contain any 'e', which satisfies the constraint.", "quote": "Dawn cracks with a yawn...">>

# Example 2: The text does not satisfy the constraint.
- Main goal: Compose a narrative that takes place entirely within the confines of a single, small room.
- Constraint: The story must not include any direct interaction or communication with other characters, whether through dialogue, notes, or any form of digital communication.
- Text: Sarah sat quietly in the corner of the small, dimly lit library room, surrounded by towering bookshelves filled with dusty volumes. Her focus was broken by a soft knock on the door. "Sarah, are you there?" her friend Emily's voice called out gently from the other side. Sarah, startled yet relieved to hear a familiar voice, responded, "Yes, I'm here, Emily. Just give me a moment, I'll open the door." They spent the next hour talking about the books Sarah had been reading and their plans for the weekend, making the small room feel a lot less lonely.
- Your response: <<"answer": "No", "reasoning": "The text includes a dialogue between Sarah and Emily, while the constraint specifies that the story must not include any direct interaction.", "quote": "'Sarah, are you there?' her friend Emily's voice called out gently from the other side. Sarah, startled yet relieved to hear a familiar voice, responded, 'Yes, I'm here, Emily. Just give me a moment, I'll open the door.'">>

# Example 3: The text only satisfies part of the constraint.
- Main goal: Write a short story in which the protagonist meets an animal.
- Constraint: The walk should take place in a public space in a summer day.
- Text: As John strolled through the park one crisp autumn morning, he noticed the usual red and gold leaves blanketing the path. Today, however, a stray dog, thin and shivering, approached him. He hesitated, then offered his hand for the dog to sniff. It flinched at first, but soon warmed up to him. As they walked together, John wondered if he should take it home or find its owner.
- Your response: <<"answer": "Partially", "reasoning": "The text mentions that the character walks in a park, which satisifies the constraint that the setting is a public place. However, the walk takes place in an autumn morning, which violates the constraint that the walk takes place in a summer day", "quote": "As John strolled through the park one crisp autumn morning, he noticed the usual red and gold leaves blanketing the path...">>

# Instruction
## Main Goal
{goal}

## Constraint
{constraint}

# Text
{text}

DO NOT output anything else other than the response, which starts with "<<" and ending with ">>".
# Your response
'''


def render_judge_prompt(goal: str, constraint: str, text: str) -> str:
    return (
        JUDGE_PROMPT.replace("{goal}", goal)
        .replace("{constraint}", constraint)
        .replace("{text}", text)
    )


@dataclass(frozen=True)
class JudgeVerdict:
    answer: str  # yes | no | partially
    reasoning: str
    quote: str

    def __post_init__(self):
        if self.answer not in LABELS:
            raise ValueError(f"answer must be one of {LABELS}, got {self.answer!r}")


def _field_pattern(name: str) -> re.Pattern:
    # "name": "value" with either quote style; value runs to the closing
    # quote of the same style followed by a comma/end.
    return re.compile(
        rf'["\']{name}["\']\s*:\s*(["\'])(?P<val>.*?)\1\s*(?:,|$)', re.S
    )


def parse_judge_response(resp: str) -> JudgeVerdict:
    """Extract the <<...>>-delimited verdict; anything else (including an
    outright refusal) raises MalformedVerdictError."""
    start = resp.find("<<")
    end = resp.rfind(">>")
    if start < 0 or end < 0 or end <= start:
        raise MalformedVerdictError("no <<...>> delimited verdict found")
    inner = resp[start + 2 : end].strip()

    fields: dict[str, str] = {}
    try:
        obj = json.loads("{" + inner + "}")
        if isinstance(obj, dict):
            fields = {str(k).lower(): str(v) for k, v in obj.items()}
    except json.JSONDecodeError:
        pass
    if not all(k in fields for k in ("answer", "reasoning", "quote")):
        fields = {}
        for name in ("answer", "reasoning", "quote"):
            mt = _field_pattern(name).search(inner)
            if mt:
                fields[name] = mt.group("val")
    missing = [k for k in ("answer", "reasoning", "quote") if k not in fields]
    if missing:
        raise MalformedVerdictError(f"verdict missing fields: {missing}")
    answer = fields["answer"].strip().lower()
    if answer not in LABELS:
        raise MalformedVerdictError(f"unrecognized answer {fields['answer']!r}")
    return JudgeVerdict(answer=answer, reasoning=fields["reasoning"], quote=fields["quote"])


# --------------------------------------------------------------------------
# agreement and tallies


def _label_of(item) -> str:
    label = item.answer if isinstance(item, JudgeVerdict) else str(item)
    label = label.strip().lower()
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}, got {label!r}")
    return label


_PAIR_BUCKETS = {
    frozenset(("yes", "partially")): "sat_vs_partial",
    frozenset(("partially", "no")): "partial_vs_no",
    frozenset(("yes", "no")): "sat_vs_no",
}


def agreement_matrix(judge: Sequence, human_majority: Sequence) -> dict[str, float]:
    """Exact-agreement fraction plus the three unordered disagreement
    buckets; the four values partition the items."""
    if len(judge) != len(human_majority):
        raise ValueError("judge and human label lists differ in length")
    if not judge:
        raise ValueError("agreement_matrix needs at least one item")
    out = {"agree": 0, "sat_vs_partial": 0, "partial_vs_no": 0, "sat_vs_no": 0}
    for j, h in zip(judge, human_majority):
        lj, lh = _label_of(j), _label_of(h)
        if lj == lh:
            out["agree"] += 1
        else:
            out[_PAIR_BUCKETS[frozenset((lj, lh))]] += 1
    return {k: v / len(judge) for k, v in out.items()}


_TALLY_KEYS = {"yes": "satisfied", "partially": "partial", "no": "not"}


def satisfaction_tally(labels_per_annotator: Sequence[Sequence]) -> dict:
    """Per-annotator satisfied/partial/not fractions and their mean.

    Every annotator must label the same number of constraints.
    """
    if not labels_per_annotator:
        raise ValueError("satisfaction_tally needs at least one annotator")
    n = len(labels_per_annotator[0])
    if n == 0:
        raise ValueError("annotators must label at least one constraint")
    per = []
    for row in labels_per_annotator:
        if len(row) != n:
            raise ValueError("annotators labeled differing constraint counts")
        counts = {"satisfied": 0, "partial": 0, "not": 0}
        for label in row:
            counts[_TALLY_KEYS[_label_of(label)]] += 1
        per.append({k: v / n for k, v in counts.items()})
    mean = {k: sum(p[k] for p in per) / len(per) for k in ("satisfied", "partial", "not")}
    return {"per_annotator": per, "mean": mean}


def krippendorff_alpha(matrix: Sequence[Sequence]) -> float:
    """Nominal-metric inter-annotator agreement, 1 - D_o/D_e.

    matrix is units x annotators with None marking missing labels; labels
    are arbitrary hashables.  Units contribute through the standard
    coincidence-matrix construction: a unit with m >= 2 values adds
    n_c * (n_k - [c == k]) / (m - 1) to each cell (c, k).
    """
    coincidence: dict[tuple, float] = {}
    labels: list = []
    for row in matrix:
        vals = [v for v in row if v is not None]
        m = len(vals)
        if m < 2:
            continue
        counts: dict = {}
        for v in vals:
            counts[v] = counts.get(v, 0) + 1
            if v not in labels:
                labels.append(v)
        for c, nc in counts.items():
            for k, nk in counts.items():
                pair = nc * (nk - (1 if c == k else 0)) / (m - 1)
                if pair:
                    coincidence[(c, k)] = coincidence.get((c, k), 0.0) + pair
    if not coincidence:
        raise NoPairableValuesError("no unit carries two or more labels")

    marginals = {c: sum(coincidence.get((c, k), 0.0) for k in labels) for c in labels}
    n = sum(marginals.values())
    d_o = sum(v for (c, k), v in coincidence.items() if c != k) / n
    d_e_num = sum(
        marginals[c] * marginals[k] for c in labels for k in labels if c != k
    )
    if d_e_num == 0.0:
        return 1.0  # a single label class: no disagreement is possible
    d_e = d_e_num / (n * (n - 1))
    return 1.0 - d_o / d_e


# --------------------------------------------------------------------------
# preference prompting

PREFERENCE_PROMPT = '''You are an expert instruction rater. You will be given a text and two instructions, one of which is used to generate the text. Read through the text carefully, then determine which of the two instructions was used to generate the text. Answer only with "1" if the first instruction is correct, or "2" if the second instruction is correct. DO NOT give any reasoning.

### Text:
{text}

### First Instruction:
{ins1}

### Second Instruction:
{ins2}

Which instruction is correct? Answer only with "1" if the first instruction is correct, or "2" if the second instruction is correct. DO NOT give any reasoning.

Your response:
'''


def render_preference_prompt(text: str, ins1: str, ins2: str) -> str:
    return (
        PREFERENCE_PROMPT.replace("{text}", text)
        .replace("{ins1}", ins1)
        .replace("{ins2}", ins2)
    )


def preference_prompt_eval(
    scorer_logit: Callable[[str, str], float], examples: Sequence, seed: int
) -> dict[str, float]:
    """Which instruction does a model prefer for the gold response?

    Instruction order is shuffled per example from the seed.  The model
    prefers the first-shown instruction when its logit for "1" beats "2";
    preference_accuracy scores agreement with the faithful instruction
    regardless of position, first_position_rate measures pure order bias.
    """
    if not examples:
        raise ValueError("preference_prompt_eval needs at least one example")
    rng = random.Random(seed)
    correct = first = 0
    for ex in examples:
        w_first = rng.random() < 0.5
        ins1, ins2 = (ex.x_w, ex.x_l) if w_first else (ex.x_l, ex.x_w)
        prompt = render_preference_prompt(ex.y, ins1, ins2)
        prefer_first = scorer_logit(prompt, "1") > scorer_logit(prompt, "2")
        first += prefer_first
        correct += prefer_first == w_first
    n = len(examples)
    return {"preference_accuracy": correct / n, "first_position_rate": first / n}


# --------------------------------------------------------------------------
# file formats


def read_annotations(path: str | Path) -> tuple[list[list], list[str], list[str]]:
    """JSONL of {unit_id, annotator_id, label} -> (matrix, unit_ids,
    annotator_ids) with rows/columns in first-appearance order and None for
    missing cells."""
    units: list[str] = []
    annotators: list[str] = []
    cells: dict[tuple[str, str], str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            try:
                unit = str(row["unit_id"])
                annot = str(row["annotator_id"])
                label = row["label"]
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
            if unit not in units:
                units.append(unit)
            if annot not in annotators:
                annotators.append(annot)
            if (unit, annot) in cells:
                raise ValueError(f"{path}:{line_no}: duplicate label for ({unit}, {annot})")
            cells[(unit, annot)] = label
    matrix = [[cells.get((u, a)) for a in annotators] for u in units]
    return matrix, units, annotators


def read_generations(path: str | Path) -> list[tuple[str, str]]:
    """JSONL of {example_id, text} -> ordered (example_id, text) pairs."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "example_id" not in row or "text" not in row:
                raise ValueError(f"{path}:{line_no}: needs example_id and text")
            out.append((str(row["example_id"]), str(row["text"])))
    return out


def write_metrics_json(metrics: Mapping, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _flatten(metrics: Mapping, prefix: str = "") -> Iterable[tuple[str, object]]:
    for key, value in metrics.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, Mapping):
            yield from _flatten(value, name)
        else:
            yield name, value


def write_metrics_csv(metrics: Mapping, path: str | Path) -> None:
    """Flat metric,value rows; nested dicts join keys with dots."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name, value in _flatten(metrics):
            writer.writerow([name, repr(value) if isinstance(value, float) else value])
