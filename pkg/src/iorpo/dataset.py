"""Construction of (x_w, x_l, y) training triplets from raw documents.

The pipeline: truncate a document to the response-length window, backtranslate
it into an instruction (main goal + ordered constraint list), minimally
corrupt every constraint with a second prompt, optionally label each
constraint by type and scope, then assemble, split, and serialize examples.

The canonical instruction wire form is
"{main_goal}\\n\\nConstraints:\\n" followed by one "- {constraint}" line per
constraint. Parsers are tolerant of the bullet and header variants models
actually produce; renderers always emit the canonical form.
"""

from __future__ import annotations

import dataclasses
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .gateway import Gateway

MIN_RESPONSE_WORDS = 2048
MAX_RESPONSE_WORDS = 5024

SOURCES = ("chapterbreak", "books3", "redpajama", "synthetic")

CONSTRAINT_TYPES = ("semantic", "stylistic", "mixed")
CONSTRAINT_SCOPES = ("broad", "specific")

# Sampling presets used when issuing the two dataset-construction prompts.
BACKTRANSLATION_SAMPLING = {"temperature": 0.6, "top_p": 0.9}
CORRUPTION_SAMPLING = {"temperature": 0.0, "top_p": 1.0}


class ParseError(ValueError):
    """Base class for model-output parsing failures."""


class MissingSectionError(ParseError):
    """No recognizable Main Instruction / Constraints header."""


class EmptyConstraintsError(ParseError):
    """Constraints section present but contains no bullets."""


class CountMismatchError(ParseError):
    """Corruption reply has a different number of pairs than constraints."""


class MalformedLineError(ParseError):
    """A corruption line could not be split into a distinct original/modified pair."""


class UnparseableLabelError(ParseError):
    """Classifier reply is not one of the allowed labels."""


@dataclass(frozen=True)
class Constraint:
    text: str
    corrupted_text: str | None = None
    ctype: str | None = None  # semantic | stylistic | mixed
    scope: str | None = None  # broad | specific

    def __post_init__(self):
        if not self.text:
            raise ValueError("constraint text must be non-empty")
        if self.corrupted_text is not None and self.corrupted_text == self.text:
            raise ValueError("corrupted_text must differ from text")
        if self.ctype is not None and self.ctype not in CONSTRAINT_TYPES:
            raise ValueError(f"unknown constraint type: {self.ctype!r}")
        if self.scope is not None and self.scope not in CONSTRAINT_SCOPES:
            raise ValueError(f"unknown constraint scope: {self.scope!r}")


@dataclass(frozen=True)
class Instruction:
    main_goal: str
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) < 1:
            raise ValueError("an instruction needs at least one constraint")


@dataclass(frozen=True)
class TrainingExample:
    id: str
    x_w: str
    x_l: str
    y: str
    source: str
    instruction: Instruction

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source: {self.source!r}")
        if self.x_w == self.x_l:
            raise ValueError("x_w and x_l must differ")
        if self.source != "synthetic":
            n = len(self.y.split())
            if not (MIN_RESPONSE_WORDS <= n <= MAX_RESPONSE_WORDS):
                raise ValueError(
                    f"response word count {n} outside "
                    f"[{MIN_RESPONSE_WORDS}, {MAX_RESPONSE_WORDS}]"
                )


def truncate_response(text: str) -> str | None:
    """Clamp a document into the response-length window.

    Under 2048 words: None (rejected). Over 5024 words: cut at the last
    sentence boundary ('.', '!' or '?' followed by whitespace or end of text)
    at or before the end of word 5024, falling back to a hard cut at that
    word when no boundary exists; returns None if the cut lands back under
    the minimum. In-range text passes through unchanged.
    """
    matches = list(re.finditer(r"\S+", text))
    n = len(matches)
    if n < MIN_RESPONSE_WORDS:
        return None
    if n <= MAX_RESPONSE_WORDS:
        return text
    limit = matches[MAX_RESPONSE_WORDS - 1].end()
    cut = None
    for i in range(limit - 1, -1, -1):
        if text[i] in ".!?" and (i + 1 >= len(text) or text[i + 1].isspace()):
            cut = i + 1
            break
    truncated = text[:cut] if cut is not None else text[:limit]
    if len(truncated.split()) < MIN_RESPONSE_WORDS:
        return None
    return truncated


def render_instruction_text(main_goal: str, constraint_texts: Sequence[str]) -> str:
    """Canonical instruction serialization (the wire form used everywhere)."""
    lines = "\n".join(f"- {c}" for c in constraint_texts)
    return f"{main_goal}\n\nConstraints:\n{lines}"


def gold_instruction_text(instr: Instruction) -> str:
    return render_instruction_text(instr.main_goal, [c.text for c in instr.constraints])


def corrupted_instruction_text(instr: Instruction) -> str:
    """Rendering with each constraint replaced by its corruption when one
    exists (constraints without one keep their original text)."""
    texts = [c.corrupted_text if c.corrupted_text is not None else c.text
             for c in instr.constraints]
    return render_instruction_text(instr.main_goal, texts)


BACKTRANSLATION_PROMPT = '''Assume the author of the provided text followed a detailed set of instructions to produce their work. Your task is to infer what those original instructions may have been by composing your own set of instructions that could recreate key aspects of the given text.

Your response must include:
1. An overarching instruction under the "Main Instruction" section that summarizes the goal of the instructions.
2. One bulleted list of specific constraints under the "Constraints" section that reflect the order of happenings/ideas in the original text. Constraints should focus on either stylistic elements (how something is communicated through tone, language, sentence structure), semantic elements (what topics, meanings, and concepts are included), or a combination of both. You should include specific elements from the text, but avoid using direct quotes. Aim for a fair balance of semantic, stylistic and mixed constraints.
   - Examples of stylistic constraints are "incorporate humor when discussing serious topics" or "use short, choppy sentences for emphasis."
   - Examples of semantic constraints are "describe a supportive mother and absent father" or "mention an impressionist painting with a leopard."
   - Mixed constraints blend stylistic and semantic elements, like "discuss impressionist art with an enthusiastic tone."

### Document:
{text}

### Your response:
'''

CORRUPTION_PROMPT = '''You are given an instruction text that includes a main instruction and a list of constraints. Your task is to make minimal edits to violate each constraint. Your resulting constraints should be coherent with one another and also with the main instruction.

[Examples]
Main Instruction: Write a story on the life and death of Bob, who is a run-of-the-mill blue-collar worker in Texas, USA.
Constraints:
- Use a first-person perspective that centers on the protagonist's perspective. → Use a third-person perspective that ensures a broad and neutral view of the narrative.
- Include cliffhangers at the end of each chapter to encourage readers to continue reading. → Do not include cliffhangers at the end of each chapter to encourage smooth readings.

[Provided Instruction]
{instructions}

When modifying the constraints, keep the following in mind:
1. Ensure that your resulting constraints are coherent with one another and also with the main instruction. However, the original and modified constraints should be mutually exclusive and difficult to achieve simultaneously.
2. Modify every constraint, but leave the main instruction unchanged.
3. Your response should contain the original main instruction, followed by each original constraint and your minimally modified version. Format each constraint as: Original constraint → Your modified constraint.

[Your response]
'''

CONSTRAINT_TYPE_PROMPT = '''You are a helpful assistant. You are given a constraint that you need to determine if it is a stylistic, semantic, or mixed constraint. Stylistic constraint emphasizes stylistic elements (how something is communicated through tone, language, sentence structure). Stylistic constraints focus on semantic elements (what topics, meanings, and concepts are included). Mixed constraints include both stylistic and semantic elements.

### Examples:
Constraint: Incorporate humor when discussing the morbid, gut-wrenching scene of the protagonist's death. Use short, choppy sentences to create a sense of urgency and panic.
Your response: Stylistic

Constraint: The story must end with the protagonist's death in a car accident.
Your response: Semantic

Constraint: Using a first-person perspective, write a story on the life and death of Bob, a blue-collar worker in Texas, USA.
Your response: Mixed

Constraint: Include cliffhangers at the end of each chapter to encourage readers to continue reading.
Your response: Stylistic

### Constraints:
Constraint: {constraint}

### Your response:
'''

CONSTRAINT_SCOPE_PROMPT = '''You are a helpful assistant. You are given a constraint that you need to determine if it is a specific or broad constraint. Specific constraints focus on an element that can be found in a specific part of the text. Broad constraints focus on an element that can be found throughout the text.

### Examples:
Constraint: Throughout the narrative, use a first-person perspective that centers on the protagonist's perspective.
Your response: Broad

Constraint: Include cliffhangers at the end of the first chapter to encourage readers to continue reading.
Your response: Specific

Constraint: Introduce a new character in the middle of the story to add depth to the narrative.
Your response: Specific

Constraint: Include cliffhangers at the end of each chapter to encourage readers to continue reading.
Your response: Broad

### Constraints:
Constraint: {constraint}

### Your response:
'''


def render_backtranslation_prompt(y: str) -> str:
    if not y:
        raise ValueError("document must be non-empty")
    return BACKTRANSLATION_PROMPT.replace("{text}", y)


def render_corruption_prompt(instr: Instruction) -> str:
    return CORRUPTION_PROMPT.replace("{instructions}", gold_instruction_text(instr))


# Header lines like "Main Instruction:", "**Main Instruction**", "1. Main
# Instruction", "### Constraints". Leading list/markdown decoration is
# stripped before the keyword.
_MAIN_HEADER = re.compile(
    r"^[\s>#*_\-\d.)]*main\s+instruction\b[\s:*_]*(?P<rest>.*)$", re.IGNORECASE
)
_CONSTRAINTS_HEADER = re.compile(
    r"^[\s>#*_\-\d.)]*constraints?\b[\s:*_]*$", re.IGNORECASE
)
_BULLET = re.compile(r"^\s*(?:[-*•‣▪]|\d+[.)])\s+(?P<body>.+?)\s*$")


def parse_backtranslation(response: str) -> Instruction:
    """Extract an Instruction from a backtranslation reply.

    Tolerates '-', '*', bullet-point and numbered constraint lists, and
    markdown/bold/numbered section headers. The main goal may sit on the
    header line after a colon or on the following lines.
    """
    lines = response.splitlines()
    main_idx = None
    cons_idx = None
    inline_goal = ""
    for i, line in enumerate(lines):
        if main_idx is None:
            m = _MAIN_HEADER.match(line)
            if m:
                main_idx = i
                inline_goal = m.group("rest").strip().strip("*_").strip()
                continue
        if main_idx is not None and _CONSTRAINTS_HEADER.match(line):
            cons_idx = i
            break
    if main_idx is None or cons_idx is None:
        raise MissingSectionError(
            "response lacks a recognizable Main Instruction / Constraints section"
        )

    goal_parts = [inline_goal] if inline_goal else []
    for line in lines[main_idx + 1 : cons_idx]:
        stripped = line.strip()
        if stripped:
            goal_parts.append(stripped)
    main_goal = " ".join(goal_parts).strip()
    if not main_goal:
        raise MissingSectionError("Main Instruction section is empty")

    constraints = []
    for line in lines[cons_idx + 1 :]:
        m = _BULLET.match(line)
        if m:
            body = m.group("body").strip().strip("*_").strip()
            if body:
                constraints.append(Constraint(text=body))
    if not constraints:
        raise EmptyConstraintsError("no constraint bullets found")
    return Instruction(main_goal=main_goal, constraints=tuple(constraints))


_ARROW = re.compile(r"→|->")


def parse_corruption(response: str, instr: Instruction) -> Instruction:
    """Pair 'original -> modified' lines with instr.constraints by order.

    The original half of each arrow line is informational only; corruptions
    attach positionally, per the prompt's modify-every-constraint-in-order
    directive. Raises CountMismatch when the number of arrow lines differs
    from the number of constraints, MalformedLine when a line has extra
    arrows, an empty half, or a modification identical to the original.
    """
    pairs: list[str] = []
    for raw in response.splitlines():
        if not _ARROW.search(raw):
            continue
        parts = [p.strip() for p in _ARROW.split(raw)]
        if len(parts) != 2:
            raise MalformedLineError(f"expected exactly one arrow: {raw!r}")
        orig, modified = parts
        bullet = _BULLET.match(orig)
        if bullet:
            orig = bullet.group("body").strip()
        elif set(orig) <= set("-*•‣▪ \t"):  # bullet marker with no content
            orig = ""
        if not orig or not modified:
            raise MalformedLineError(f"empty half in corruption line: {raw!r}")
        if orig == modified:
            raise MalformedLineError(f"modification identical to original: {raw!r}")
        pairs.append(modified)
    if len(pairs) != len(instr.constraints):
        raise CountMismatchError(
            f"{len(pairs)} corruption lines for {len(instr.constraints)} constraints"
        )
    updated = []
    for c, modified in zip(instr.constraints, pairs):
        if modified == c.text:
            raise MalformedLineError(
                f"modified constraint identical to the original constraint: {modified!r}"
            )
        updated.append(dataclasses.replace(c, corrupted_text=modified))
    return Instruction(main_goal=instr.main_goal, constraints=tuple(updated))


def render_corruption_response(instr: Instruction) -> str:
    """Well-formed corruption reply for an instruction whose constraints all
    carry corrupted_text (fixture/mock helper, inverse of parse_corruption)."""
    lines = [instr.main_goal]
    for c in instr.constraints:
        if c.corrupted_text is None:
            raise ValueError("every constraint needs corrupted_text")
        lines.append(f"- {c.text} → {c.corrupted_text}")
    return "\n".join(lines)


def render_backtranslation_response(instr: Instruction) -> str:
    """Well-formed backtranslation reply (fixture/mock helper, inverse of
    parse_backtranslation)."""
    lines = [f"Main Instruction: {instr.main_goal}", "Constraints:"]
    lines += [f"- {c.text}" for c in instr.constraints]
    return "\n".join(lines)


def classify_constraint(c: Constraint, kind: str, llm: Gateway) -> Constraint:
    """Label one constraint by type (semantic/stylistic/mixed) or scope
    (broad/specific) using a greedy single-word completion."""
    if kind == "type":
        prompt = CONSTRAINT_TYPE_PROMPT.replace("{constraint}", c.text)
        allowed = CONSTRAINT_TYPES
    elif kind == "scope":
        prompt = CONSTRAINT_SCOPE_PROMPT.replace("{constraint}", c.text)
        allowed = CONSTRAINT_SCOPES
    else:
        raise ValueError(f"kind must be 'type' or 'scope', got {kind!r}")
    reply = llm.complete_text(prompt, temperature=0.0, top_p=1.0, max_tokens=8)
    words = reply.strip().split()
    label = words[0].strip(".,;:!\"'*_").lower() if words else ""
    if label not in allowed:
        raise UnparseableLabelError(f"cannot parse label from {reply!r}")
    if kind == "type":
        return dataclasses.replace(c, ctype=label)
    return dataclasses.replace(c, scope=label)


@dataclass
class DiversityReport:
    """Mean per-instruction label fractions, split by label kind. Unlabeled
    constraints are excluded from denominators and counted separately."""

    type_fractions: dict[str, float] = field(default_factory=dict)
    scope_fractions: dict[str, float] = field(default_factory=dict)
    unlabeled_type: int = 0
    unlabeled_scope: int = 0


def _label_fractions(instructions: Iterable[Instruction], attr: str) -> tuple[dict, int]:
    per_instr: list[dict[str, float]] = []
    observed: set[str] = set()
    unlabeled = 0
    for instr in instructions:
        labels = [getattr(c, attr) for c in instr.constraints]
        unlabeled += sum(1 for v in labels if v is None)
        present = [v for v in labels if v is not None]
        if not present:
            continue
        fracs: dict[str, float] = {}
        for v in present:
            fracs[v] = fracs.get(v, 0.0) + 1.0 / len(present)
        per_instr.append(fracs)
        observed.update(fracs)
    means = {
        label: sum(f.get(label, 0.0) for f in per_instr) / len(per_instr)
        for label in sorted(observed)
    }
    return means, unlabeled


def diversity_report(instructions: Sequence[Instruction]) -> DiversityReport:
    type_fracs, unl_t = _label_fractions(instructions, "ctype")
    scope_fracs, unl_s = _label_fractions(instructions, "scope")
    return DiversityReport(
        type_fractions=type_fracs,
        scope_fractions=scope_fracs,
        unlabeled_type=unl_t,
        unlabeled_scope=unl_s,
    )


def select_constraints(instr: Instruction, mode: str, seed: int) -> Instruction:
    """Deterministic constraint subsetting.

    single: exactly one constraint, chosen uniformly. varying: k ~
    uniform{1..M} constraints without replacement, original order preserved.
    """
    rng = random.Random(seed)
    m = len(instr.constraints)
    if mode == "single":
        idxs = [rng.randrange(m)]
    elif mode == "varying":
        k = rng.randint(1, m)
        idxs = sorted(rng.sample(range(m), k))
    else:
        raise ValueError(f"mode must be 'single' or 'varying', got {mode!r}")
    return Instruction(
        main_goal=instr.main_goal,
        constraints=tuple(instr.constraints[i] for i in idxs),
    )


def split_dataset(examples: Sequence, seed: int) -> tuple[list, list, list]:
    """Seeded shuffle then 50/25/25 partition (val and test each get n//4,
    train gets the remainder). Disjoint, exhaustive, deterministic."""
    order = list(examples)
    random.Random(seed).shuffle(order)
    n = len(order)
    n_val = n // 4
    n_test = n // 4
    n_train = n - n_val - n_test
    return (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )


def render_chat(instruction: str, response: str | None = None) -> str:
    """The exact fine-tuning chat serialization; with no response the string
    ends after the assistant tag, ready for generation."""
    if response is None:
        return f"<|user|>\n{instruction}</s>\n\n<|assistant|>\n"
    return f"<|user|>\n{instruction}</s>\n\n<|assistant|>\n{response}</s>"


def example_to_json(ex: TrainingExample) -> dict:
    return {
        "id": ex.id,
        "source": ex.source,
        "main_goal": ex.instruction.main_goal,
        "constraints": [
            {"text": c.text, "corrupted": c.corrupted_text, "ctype": c.ctype, "scope": c.scope}
            for c in ex.instruction.constraints
        ],
        "y": ex.y,
        "x_w": ex.x_w,
        "x_l": ex.x_l,
    }


def example_from_json(obj: dict) -> TrainingExample:
    constraints = tuple(
        Constraint(
            text=c["text"],
            corrupted_text=c.get("corrupted"),
            ctype=c.get("ctype"),
            scope=c.get("scope"),
        )
        for c in obj["constraints"]
    )
    return TrainingExample(
        id=obj["id"],
        x_w=obj["x_w"],
        x_l=obj["x_l"],
        y=obj["y"],
        source=obj["source"],
        instruction=Instruction(main_goal=obj["main_goal"], constraints=constraints),
    )


def write_examples(examples: Iterable[TrainingExample], path: str | Path) -> None:
    """Dataset JSONL: UTF-8, no BOM, LF endings, one object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_json(ex), ensure_ascii=False))
            fh.write("\n")


def read_examples(path: str | Path) -> list[TrainingExample]:
    """Reads dataset JSONL; unknown extra fields are ignored."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(example_from_json(json.loads(line)))
    return out


def prepare_training_set(
    examples: Sequence[TrainingExample], mode: str, seed: int
) -> list[TrainingExample]:
    """Re-render each example around a seeded constraint subset.

    mode follows select_constraints. Gold rendering becomes x_w and the
    corrupted rendering x_l; examples whose selected subset carries no
    corruption (x_w would equal x_l) are dropped.
    """
    master = random.Random(seed)
    out = []
    for ex in examples:
        child_seed = master.randrange(2**32)
        sub = select_constraints(ex.instruction, mode, child_seed)
        x_w = gold_instruction_text(sub)
        x_l = corrupted_instruction_text(sub)
        if x_w == x_l:
            continue
        out.append(
            dataclasses.replace(ex, instruction=sub, x_w=x_w, x_l=x_l)
        )
    return out
