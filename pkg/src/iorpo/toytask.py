"""Synthetic constraint-following task for exercising the trainer end to end.

The task is deliberately tiny: instructions share one goal ("write a short
story") and differ only in which topic word the single constraint asks for.
The chosen response repeats the constrained topic and then tails off into
words drawn from the whole vocabulary, so a model that learns the task must
route probability mass toward the topic named in the instruction it was
conditioned on.

Two details keep the task well behaved for a fixed-window model:

* The goal line is exactly eight tokens long, so with the default context of
  eight no padding token ever appears inside a trained response window.
* Topic words are *down-weighted* when sampling the response tail.  The topic
  run at the front of each response already overrepresents topic tokens; if
  the tail overrepresented them too, gradient updates would systematically
  drain probability from scaffold words and the instruction text itself would
  drift as a side effect of training.
"""

from __future__ import annotations

import random

from .dataset import Constraint, Instruction, TrainingExample, render_instruction_text
from .objective import TrainerConfig

GOAL = "write a short story"

TOPICS = tuple(f"topic{i}" for i in range(10))

# Every non-topic token that can appear in an instruction or response.
SCAFFOLD = tuple(GOAL.split()) + ("Constraints:", "-", "use")

VOCABULARY = SCAFFOLD + TOPICS

# Relative weight of a topic token when sampling response tails.
_TOPIC_TAIL_WEIGHT = 0.25


def toy_vocabulary() -> list[str]:
    """All surface tokens used by the task, scaffold first."""
    return list(VOCABULARY)


def make_separation_corpus(
    n_train: int = 200,
    n_heldout: int = 40,
    seed: int = 0,
    topic_run: int = 6,
    tail_len: int = 10,
) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """Build a seeded (train, heldout) split of topic-constraint triplets.

    Each example pairs an instruction constraining one topic against the same
    instruction with the constraint corrupted to a different topic.  The
    response opens with ``topic_run`` copies of the correct topic and closes
    with ``tail_len`` tokens sampled from the full vocabulary.
    """
    if n_train <= 0 or n_heldout < 0:
        raise ValueError("corpus sizes must be positive")
    rng = random.Random(seed)
    weights = [
        _TOPIC_TAIL_WEIGHT if tok in TOPICS else 1.0 for tok in VOCABULARY
    ]
    examples = []
    for idx in range(n_train + n_heldout):
        topic_good, topic_bad = rng.sample(TOPICS, 2)
        constraint = Constraint(
            text=f"use {topic_good}",
            corrupted_text=f"use {topic_bad}",
        )
        tail = rng.choices(VOCABULARY, weights=weights, k=tail_len)
        examples.append(
            TrainingExample(
                id=f"toy-{idx:03d}",
                x_w=render_instruction_text(GOAL, [constraint.text]),
                x_l=render_instruction_text(GOAL, [constraint.corrupted_text]),
                y=" ".join([topic_good] * topic_run + tail),
                source="synthetic",
                instruction=Instruction(main_goal=GOAL, constraints=(constraint,)),
            )
        )
    return examples[:n_train], examples[n_train:]


def recommended_config(seed: int = 0, **overrides) -> TrainerConfig:
    """Trainer settings tuned for the separation corpus.

    A strong contrast weight with a matching learning-rate reduction makes
    the preference term dominate each update, which is what separates the
    two conditioning branches without dragging the instruction text along.
    The wider-than-default model gives the two branches room to diverge
    without interfering with each other.
    """
    settings = dict(
        seed=seed,
        learning_rate=0.1,
        lam=20.0,
        epochs=2,
        hidden_dim=64,
        embed_dim=24,
        log_every=10,
    )
    settings.update(overrides)
    return TrainerConfig(**settings)


def corpus_token_count(examples: list[TrainingExample]) -> int:
    """Number of distinct surface tokens across all fields of ``examples``."""
    seen: set[str] = set()
    for ex in examples:
        for text in (ex.x_w, ex.x_l, ex.y):
            seen.update(text.split())
    return len(seen)
