"""
Instruction dataset construction walkthrough
============================================

Runs the two-stage prompting pipeline against a canned offline provider:
a gold response is backtranslated into an instruction (main goal plus
constraint list), the constraints are minimally corrupted, and the result is
serialized as a preference triplet (x_w, x_l, y) ready for training.
"""

import json
from pathlib import Path

import iorpo.dataset as ds
from iorpo.gateway import Gateway, MockProvider

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# the gold responses we want instructions for (synthetic, so no length gate)
responses = [
    "The lighthouse keeper counted the ships as the storm rolled in.",
    "Mara fixed the engine with a hairpin and a prayer, then drove north.",
]

# what a cooperative model would reply at each stage, keyed by exact prompt
instructions = [
    ds.Instruction(
        main_goal="write a short story set at a lighthouse",
        constraints=(
            ds.Constraint(text="mention a storm", corrupted_text="mention a drought"),
            ds.Constraint(text="count the ships", corrupted_text="count the birds"),
        ),
    ),
    ds.Instruction(
        main_goal="write a story about a resourceful mechanic",
        constraints=(
            ds.Constraint(text="fix the engine with a hairpin",
                          corrupted_text="fix the engine with a wrench"),
        ),
    ),
]
canned = {}
for y, instr in zip(responses, instructions):
    canned[ds.render_backtranslation_prompt(y)] = ds.render_backtranslation_response(instr)
    canned[ds.render_corruption_prompt(instr)] = ds.render_corruption_response(instr)

gateway = Gateway(MockProvider(canned), cache_dir=out_dir / "llm_cache")

# stage 1: backtranslate each response; stage 2: corrupt the constraints
examples = []
for i, y in enumerate(responses):
    reply = gateway.complete_text(
        ds.render_backtranslation_prompt(y), **ds.BACKTRANSLATION_SAMPLING
    )
    instr = ds.parse_backtranslation(reply)
    reply = gateway.complete_text(
        ds.render_corruption_prompt(instr), **ds.CORRUPTION_SAMPLING
    )
    instr = ds.parse_corruption(reply, instr)
    examples.append(
        ds.TrainingExample(
            id=f"demo-{i}",
            x_w=ds.gold_instruction_text(instr),
            x_l=ds.corrupted_instruction_text(instr),
            y=y,
            source="synthetic",
            instruction=instr,
        )
    )

print("gold instruction (x_w):")
print(examples[0].x_w)
print("\ncorrupted instruction (x_l):")
print(examples[0].x_l)

# the chat serialization used for fine-tuning is byte-stable
print("\nchat template:")
print(repr(ds.render_chat(examples[0].x_w, examples[0].y)))

# triplets round-trip through JSONL losslessly
path = out_dir / "triplets.jsonl"
ds.write_examples(examples, path)
reloaded = ds.read_examples(path)
print(f"\nwrote {len(examples)} triplets -> {path}")
print(f"round-trip intact: {[e.id for e in reloaded] == [e.id for e in examples]}")

# seeded splitting is deterministic: same seed, same membership
train, val, test = ds.split_dataset(examples * 10, seed=0)
print(f"split 20 examples -> train {len(train)} / val {len(val)} / test {len(test)}")

# every provider response was cached on disk; a rerun would hit zero calls
cache_files = sorted((out_dir / "llm_cache").glob("*.json"))
print(f"gateway cache entries: {len(cache_files)}")
example_entry = json.loads(cache_files[0].read_text())
print(f"cache entry keys: {sorted(example_entry)}")
