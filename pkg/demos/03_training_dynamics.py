"""
Preference training dynamics on the toy task
============================================

Trains the tiny fixed-window model on the synthetic constraint-following
corpus and shows the headline behavior of the instruction-contrast
objective: the response score under the faithful instruction pulls away
from its score under the corrupted one, while the instruction strings
themselves barely move.
"""

from pathlib import Path

import iorpo.objective as obj
import iorpo.svgplot as svgplot
import iorpo.tinylm as tinylm
import iorpo.toytask as toytask
from iorpo.evaluation import SpecificitySetting, ranking_accuracy

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# 200 training triplets plus 40 held-out ones, all over a 17-token vocabulary
train_set, heldout = toytask.make_separation_corpus(n_train=200, n_heldout=40, seed=0)
print(f"corpus: {len(train_set)} train / {len(heldout)} held-out triplets, "
      f"{toytask.corpus_token_count(train_set)} distinct tokens")
print("sample x_w:", train_set[0].x_w.replace("\n", " | "))
print("sample x_l:", train_set[0].x_l.replace("\n", " | "))
print("sample y:  ", train_set[0].y)

config = toytask.recommended_config(seed=0)
result = obj.train(train_set, config)

# the probe curve logs mean scores for four series at every few steps
first, last = result.curve[0], result.curve[-1]
gap0 = first.logps_y_given_xw - first.logps_y_given_xl
gap1 = last.logps_y_given_xw - last.logps_y_given_xl
print(f"\nresponse score gap logps(y|x_w) - logps(y|x_l):")
print(f"  step {first.step:>4}: {gap0:+.3f} nats")
print(f"  step {last.step:>4}: {gap1:+.3f} nats   (growth {gap1 - gap0:+.3f})")

drift_w = max(abs(pt.logps_xw - first.logps_xw) for pt in result.curve)
drift_l = max(abs(pt.logps_xl - first.logps_xl) for pt in result.curve)
print(f"instruction drift over the run: x_w {drift_w:.3f}, x_l {drift_l:.3f} "
      f"(both small next to the {gap1:.2f}-nat gap)")

# held-out check: does the trained model rank y higher under its own
# instruction than under the corrupted variant?
scorer = tinylm.make_scorer(result.params, result.vocab, unknown="error")
accuracy, records = ranking_accuracy(scorer, heldout, SpecificitySetting("1", "1"), seed=0)
print(f"held-out (1,1) ranking accuracy: {accuracy:.2f} over {len(records)} pairs")

# persist everything a report needs: curve CSV, chart, checkpoint, vocab
obj.write_curve_csv(result.curve, out_dir / "curve.csv")
svgplot.write_chart(svgplot.curve_panels(result.curve), out_dir / "curve.svg")
tinylm.save_model(result.params, out_dir / "toy_model.ckpt")
result.vocab.save(out_dir / "toy_vocab.json")
print(f"\nwrote curve.csv, curve.svg, toy_model.ckpt, toy_vocab.json -> {out_dir}")

# the checkpoint round-trips exactly
reloaded = tinylm.load_model(out_dir / "toy_model.ckpt")
same = (reloaded.to_vector() == result.params.to_vector()).all()
print(f"checkpoint round-trip exact: {bool(same)}")

# contrast with plain SFT on the same data: the gap barely opens
sft = obj.train(train_set, config, objective="sft")
sft_gap = sft.curve[-1].logps_y_given_xw - sft.curve[-1].logps_y_given_xl
print(f"\nSFT-only final gap for comparison: {sft_gap:+.3f} nats "
      f"(vs {gap1:+.3f} with the contrast term)")
