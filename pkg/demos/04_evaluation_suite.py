"""
Evaluation harness tour
=======================

Walks through the four evaluation surfaces: specificity-pair ranking,
LLM-as-judge verdict parsing, preference prompting, and inter-annotator
agreement statistics.
"""

import random

import iorpo.objective as obj
import iorpo.tinylm as tinylm
import iorpo.toytask as toytask
from iorpo.dataset import Constraint, Instruction
from iorpo.evaluation import (
    FIVE_SETTINGS,
    SpecificitySetting,
    agreement_matrix,
    build_specificity_pair,
    detect_repetitions,
    krippendorff_alpha,
    parse_judge_response,
    preference_prompt_eval,
    ranking_accuracy,
    render_judge_prompt,
    satisfaction_tally,
)

# ---------------------------------------------------------------------------
# 1. specificity pairs: how many constraints are shown, how many corrupted

instr = Instruction(
    main_goal="write a product announcement",
    constraints=tuple(
        Constraint(text=f"mention feature {i}", corrupted_text=f"omit feature {i}")
        for i in range(4)
    ),
)
print("five settings resolved for an instruction with M=4 constraints:")
for setting in FIVE_SETTINGS:
    n_inc, n_cor = setting.resolve(4)
    x_w, x_l = build_specificity_pair(instr, setting, seed=1)
    changed = sum(a != b for a, b in zip(x_w.splitlines(), x_l.splitlines()))
    print(f"  {str(setting):<10} include {n_inc}, corrupt {n_cor} "
          f"(pair differs on {changed} lines)")

# ---------------------------------------------------------------------------
# 2. ranking accuracy with a freshly trained toy model

train_set, heldout = toytask.make_separation_corpus(n_train=200, n_heldout=40, seed=0)
result = obj.train(train_set, toytask.recommended_config(seed=0))
scorer = tinylm.make_scorer(result.params, result.vocab, unknown="error")
accuracy, records = ranking_accuracy(scorer, heldout, SpecificitySetting("1", "1"), seed=0)
print(f"\nheld-out ranking accuracy (1,1): {accuracy:.2f}")
r = records[0]
print(f"example {r.example_id}: logps_w {r.logps_w:.2f} vs logps_l {r.logps_l:.2f} "
      f"-> correct={r.correct}")

# ---------------------------------------------------------------------------
# 3. judge protocol: render a prompt, parse the delimited verdict

prompt = render_judge_prompt(
    goal="write a short story",
    constraint="use the word moon",
    text="The moon hung low over the harbor.",
)
print(f"\njudge prompt is {len(prompt)} chars and ends with a response marker:")
print("  ..." + prompt.rstrip().splitlines()[-1])

reply = '<<"answer": "Yes", "reasoning": "The word appears.", "quote": "The moon hung low">>'
verdict = parse_judge_response(reply)
print(f"parsed verdict: answer={verdict.answer!r} quote={verdict.quote!r}")

# malformed replies are a first-class outcome, not a crash
try:
    parse_judge_response("As an AI, I would rather not say.")
except Exception as exc:
    print(f"refusal handling: {type(exc).__name__}: {exc}")

# ---------------------------------------------------------------------------
# 4. preference prompting with a rigged scorer (which instruction fits y?)

def marker_logit(prompt_text: str, token: str) -> float:
    # toy stand-in for a model logit: spot the corrupted instruction by eye
    first = prompt_text.index("### First Instruction:")
    bad = prompt_text.index("omit")
    prefer = "2" if first < bad < prompt_text.index("### Second Instruction:") else "1"
    return 1.0 if token == prefer else 0.0


class _Pair:
    def __init__(self, i):
        self.x_w = f"mention feature {i}"
        self.x_l = f"omit feature {i}"
        self.y = f"announcing feature {i}"


metrics = preference_prompt_eval(marker_logit, [_Pair(i) for i in range(12)], seed=3)
print(f"\npreference prompting: accuracy {metrics['preference_accuracy']:.2f}, "
      f"first-position rate {metrics['first_position_rate']:.2f}")

# ---------------------------------------------------------------------------
# 5. agreement statistics

labels = [["yes", "yes"], ["yes", "yes"], ["no", "no"], ["yes", "no"]]
print(f"\nkrippendorff alpha on a hand-checkable 4-unit fixture: "
      f"{krippendorff_alpha(labels):.4f} (exact value 8/15)")

rng = random.Random(0)
noise = [[rng.choice(("yes", "no", "partially")) for _ in range(3)] for _ in range(2000)]
print(f"alpha on independent random labels: {krippendorff_alpha(noise):+.4f} (≈ 0)")

judge = ["yes", "no", "partially", "yes"]
human = ["yes", "partially", "no", "no"]
print(f"judge-vs-human buckets: {agreement_matrix(judge, human)}")

tally = satisfaction_tally([["yes", "no", "partially", "yes"]])
print(f"satisfaction tally: {tally['mean']}")

# ---------------------------------------------------------------------------
# 6. repetition metrics on a degenerate generation

loopy = "the cat sat on the mat " * 4
reps = detect_repetitions(loopy.split(), n=3, min_count=3)
print(f"\nrepeated trigrams in a looping text: {len(reps)} "
      f"(most frequent: {' '.join(reps[0][0])!r} x{reps[0][1]})")
