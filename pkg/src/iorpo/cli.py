"""Command-line interface.

Subcommands: filter, build, train, gradcheck, eval {length | repetition |
ranking | judge | agreement | preference}, report.  Options resolve with the
precedence CLI flags > --config file (flat JSON object keyed by option name)
> built-in defaults.  Exit codes: 0 success, 1 operational error (unreadable
inputs, gateway failures), 2 validation or gradcheck failure.  Commands only
write inside their --out-dir / --cache-dir.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
from pathlib import Path

from . import dataset as ds
from . import evaluation as ev
from . import gradcheck as gc
from . import objective as obj
from . import svgplot, tinylm
from .filtering import (
    BlocklistBundle,
    FilterConfig,
    apply_filters,
    compute_signals,
    downsample_topical,
)
from .gateway import Gateway, GatewayError, HttpProvider, MockProvider
from .textkit import BYTE, WORD

_EXIT_OK = 0
_EXIT_OPERATIONAL = 1
_EXIT_VALIDATION = 2


class _OperationalError(Exception):
    pass


class _ValidationError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise _OperationalError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise _ValidationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise _ValidationError("config file must hold a JSON object")
    return cfg


class _Options:
    """flags > config file > defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))

    def get(self, name: str, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            return self.config[name]
        return default

    def require_seed(self) -> int:
        seed = self.get("seed")
        if seed is None:
            raise _ValidationError("--seed is required (flag or config)")
        return int(seed)


def _out_dir(opts: _Options, default: str = "out") -> Path:
    out = Path(opts.get("out_dir", default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(msg: str) -> None:
    print(msg)


# --------------------------------------------------------------------------
# document loading shared by filter/build

_EXTERNAL_SIGNAL_KEYS = ("ccnet_language_score", "ccnet_perplexity", "books_importance")


def _load_docs(path_str: str) -> list[dict]:
    """Documents from a directory (one UTF-8 file each, sorted by name) or a
    JSONL file with {id?, text, source?, source_domain?, optional external
    signal fields}."""
    path = Path(path_str)
    docs = []
    if path.is_dir():
        for i, fp in enumerate(sorted(p for p in path.iterdir() if p.is_file())):
            docs.append({"id": fp.name, "text": fp.read_text(encoding="utf-8")})
    elif path.is_file():
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if "text" not in row:
                    raise _OperationalError(f"{path}: line {i + 1} lacks a text field")
                row.setdefault("id", f"doc-{i:05d}")
                docs.append(row)
    else:
        raise _OperationalError(f"input not found: {path}")
    return docs


# --------------------------------------------------------------------------
# filter

_SIGNAL_COLUMNS = (
    "word_count",
    "unigram_entropy",
    "frac_no_alpha",
    "curly_bracket_ratio",
    "lorem_ipsum_ratio",
    "javascript_line_hits",
    "blocklist_word_hits",
    "ut1_category_hit",
    "news_domain_hit",
    "religious_word_frac",
    "ccnet_language_score",
    "ccnet_perplexity",
    "books_importance",
)


def cmd_filter(opts: _Options) -> int:
    docs = _load_docs(opts.get("input") or _missing("--input"))
    out = _out_dir(opts)
    bl_dir = opts.get("blocklist_dir")
    blocklists = BlocklistBundle.from_dir(bl_dir) if bl_dir else BlocklistBundle.fixture()
    fc_path = opts.get("filter_config")
    config = FilterConfig.from_file(fc_path) if fc_path else FilterConfig()
    downsample = bool(opts.get("downsample", False))

    accepted_rows = []
    decision_rows = []
    rule_counts: dict[str, int] = {}
    for doc in docs:
        external = {k: doc[k] for k in _EXTERNAL_SIGNAL_KEYS if k in doc}
        signals = compute_signals(
            doc["text"],
            blocklists=blocklists,
            source_domain=doc.get("source_domain"),
            external=external or None,
        )
        decision = apply_filters(signals, config)
        failed = list(decision.failed_rules)
        if downsample and decision.accepted:
            if not downsample_topical(doc["text"], doc.get("source_domain"), blocklists):
                failed.append("topical_downsample")
        accepted = not failed
        if accepted:
            accepted_rows.append({"id": doc["id"], "text": doc["text"]})
        for rule in failed:
            rule_counts[rule] = rule_counts.get(rule, 0) + 1
        row = {
            "id": doc["id"],
            "accepted": accepted,
            "failed_rules": ";".join(failed),
        }
        for col in _SIGNAL_COLUMNS:
            row[col] = getattr(signals, col)
        for n, frac in sorted(signals.dupe_ngram_fracs.items()):
            row[f"dupe_{n}gram_frac"] = frac
        for n, frac in sorted(signals.top_ngram_fracs.items()):
            row[f"top_{n}gram_frac"] = frac
        decision_rows.append(row)

    with open(out / "accepted.jsonl", "w", encoding="utf-8") as fh:
        for row in accepted_rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    if decision_rows:
        with open(out / "decisions.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=list(decision_rows[0].keys()), lineterminator="\n"
            )
            writer.writeheader()
            writer.writerows(decision_rows)
    else:
        (out / "decisions.csv").write_text("id,accepted,failed_rules\n", encoding="utf-8")
    summary = {
        "total": len(docs),
        "accepted": len(accepted_rows),
        "rejected": len(docs) - len(accepted_rows),
        "rule_failure_counts": dict(sorted(rule_counts.items())),
    }
    ev.write_metrics_json(summary, out / "summary.json")
    _echo(f"filter: {summary['accepted']}/{summary['total']} documents accepted -> {out}")
    return _EXIT_OK


# --------------------------------------------------------------------------
# build


def _missing(flag: str):
    raise _ValidationError(f"{flag} is required")


def _make_gateway(opts: _Options) -> Gateway:
    provider_kind = opts.get("provider", "mock")
    cache_dir = opts.get("cache_dir")
    model = opts.get("model", "default-model")
    if provider_kind == "mock":
        canned = opts.get("canned")
        provider = MockProvider.from_file(canned) if canned else MockProvider()
    elif provider_kind == "http":
        url = opts.get("url") or _missing("--url (for --provider http)")
        provider = HttpProvider(
            url=url,
            shape=opts.get("shape", "prompt"),
            api_key_env=opts.get("api_key_env", "LLM_API_KEY"),
        )
    else:
        raise _ValidationError(f"unknown provider {provider_kind!r}")
    return Gateway(provider, cache_dir=cache_dir, model=model)


def cmd_build(opts: _Options) -> int:
    docs = _load_docs(opts.get("input") or _missing("--input"))
    out = _out_dir(opts)
    seed = opts.require_seed()
    mode = opts.get("constraint_mode", "all")
    if mode not in ("all", "single", "varying"):
        raise _ValidationError(f"unknown constraint mode {mode!r}")
    classify = bool(opts.get("classify", False))
    review_n = opts.get("review_sample")
    if review_n is not None and int(review_n) < 0:
        raise _ValidationError("--review-sample must be non-negative")
    gw = _make_gateway(opts)

    examples = []
    skipped = []
    built_path = out / "built.jsonl"
    with open(built_path, "w", encoding="utf-8") as built_fh:
        for doc in docs:
            doc_id = str(doc["id"])
            source = doc.get("source", "redpajama")
            y = ds.truncate_response(doc["text"]) if source != "synthetic" else doc["text"]
            if y is None:
                skipped.append({"id": doc_id, "reason": "below minimum length"})
                continue
            try:
                bt_text = gw.complete_text(
                    ds.render_backtranslation_prompt(y), **ds.BACKTRANSLATION_SAMPLING
                )
                instr = ds.parse_backtranslation(bt_text)
                corr_text = gw.complete_text(
                    ds.render_corruption_prompt(instr), **ds.CORRUPTION_SAMPLING
                )
                instr = ds.parse_corruption(corr_text, instr)
            except GatewayError as exc:
                skipped.append({"id": doc_id, "reason": f"gateway: {exc}"})
                continue
            except ds.ParseError as exc:
                skipped.append({"id": doc_id, "reason": f"parse: {exc}"})
                continue
            if classify:
                new_constraints = []
                for c in instr.constraints:
                    for kind in ("type", "scope"):
                        try:
                            c = ds.classify_constraint(c, kind, gw)
                        except (GatewayError, ds.ParseError):
                            pass  # labels are optional; keep the constraint
                    new_constraints.append(c)
                instr = ds.Instruction(instr.main_goal, tuple(new_constraints))
            ex = ds.TrainingExample(
                id=doc_id,
                x_w=ds.gold_instruction_text(instr),
                x_l=ds.corrupted_instruction_text(instr),
                y=y,
                source=source,
                instruction=instr,
            )
            examples.append(ex)
            built_fh.write(json.dumps(ds.example_to_json(ex), ensure_ascii=False) + "\n")

    # Dataset diagnostic, not a gate: mean whitespace-token length of the
    # gold instructions, for eyeballing against the target corpus shape.
    mean_instruction_tokens = (
        round(sum(len(ex.x_w.split()) for ex in examples) / len(examples), 2)
        if examples
        else 0.0
    )

    if review_n:
        # Sampled from the full built set, before any constraint-mode
        # reduction: the review targets what the corruption step produced.
        rows = [
            {
                "id": ex.id,
                "main_goal": ex.instruction.main_goal,
                "constraint": c.text,
                "corrupted": c.corrupted_text,
            }
            for ex in examples
            for c in ex.instruction.constraints
            if c.corrupted_text is not None
        ]
        picked = random.Random(seed).sample(rows, min(int(review_n), len(rows)))
        review_path = out / "review_sample.csv"
        with open(review_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=["id", "main_goal", "constraint", "corrupted"],
                lineterminator="\n",
            )
            writer.writeheader()
            writer.writerows(picked)
        _echo(f"review sample: {len(picked)} rows -> {review_path}")

    if mode != "all":
        examples = ds.prepare_training_set(examples, mode, seed)
    train, val, test = ds.split_dataset(examples, seed)
    ds.write_examples(train, out / "train.jsonl")
    ds.write_examples(val, out / "val.jsonl")
    ds.write_examples(test, out / "test.jsonl")
    report = {
        "input_docs": len(docs),
        "built": len(examples),
        "mean_instruction_tokens": mean_instruction_tokens,
        "skipped": skipped,
        "split_sizes": {"train": len(train), "val": len(val), "test": len(test)},
        "seed": seed,
        "constraint_mode": mode,
    }
    ev.write_metrics_json(report, out / "build_report.json")
    _echo(
        f"build: {len(examples)} examples "
        f"(train {len(train)} / val {len(val)} / test {len(test)}), "
        f"{len(skipped)} skipped -> {out}"
    )
    return _EXIT_OK


# --------------------------------------------------------------------------
# train


def cmd_train(opts: _Options) -> int:
    data_path = opts.get("dataset") or _missing("--dataset")
    out = _out_dir(opts)
    seed = opts.require_seed()
    objective_name = opts.get("objective", "iorpo")
    if objective_name not in ("iorpo", "sft"):
        raise _ValidationError(f"unknown objective {objective_name!r}")
    examples = ds.read_examples(data_path)
    if not examples:
        raise _OperationalError(f"no examples in {data_path}")
    cfg = obj.TrainerConfig(
        lam=float(opts.get("lam", obj.DEFAULT_LAMBDA)),
        learning_rate=float(opts.get("learning_rate", obj.DEFAULT_LEARNING_RATE)),
        epochs=int(opts.get("epochs", 2)),
        seed=seed,
        optimizer=opts.get("optimizer", "sgd"),
        log_every=int(opts.get("log_every", 10)),
        context=int(opts.get("context", 8)),
        embed_dim=int(opts.get("embed_dim", 16)),
        hidden_dim=int(opts.get("hidden_dim", 32)),
        probe_size=int(opts.get("probe_size", 32)),
        normalized=not bool(opts.get("unnormalized", False)),
    )
    result = obj.train(examples, cfg, objective=objective_name)
    tinylm.save_model(result.params, out / "model.ckpt")
    result.vocab.save(out / "vocab.json")
    obj.write_curve_csv(result.curve, out / "curve.csv")
    svgplot.write_chart(svgplot.curve_panels(result.curve), out / "curve.svg")
    last = result.curve[-1]
    gap = last.logps_y_given_xw - last.logps_y_given_xl
    _echo(
        f"train[{objective_name}]: {len(examples)} examples, {cfg.epochs} epochs, "
        f"final step {last.step}: l_sft {last.l_sft:.4f}, "
        f"y-score gap {gap:.4f} -> {out}"
    )
    return _EXIT_OK


# --------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(opts: _Options) -> int:
    reports = gc.run_gradcheck(
        instances=int(opts.get("instances", 20)),
        seed=int(opts.get("seed", 0)),
        step=float(opts.get("step", gc.DEFAULT_STEP)),
        tol=float(opts.get("tol", gc.DEFAULT_TOL)),
        fault=opts.get("fault"),
    )
    text = gc.format_report(reports)
    _echo(text)
    out_dir = opts.get("out_dir")
    if out_dir:
        out = _out_dir(opts)
        (out / "gradcheck.txt").write_text(text + "\n", encoding="utf-8")
        rows = [
            {
                "suite": r.suite,
                "instance": r.instance,
                "n_params": r.n_params,
                "rel_error": r.rel_error,
                "blocks": dict(r.block_errors),
            }
            for r in reports
        ]
        ev.write_metrics_json({"reports": rows}, out / "gradcheck.json")
    return _EXIT_OK if gc.all_passed(reports) else _EXIT_VALIDATION


# --------------------------------------------------------------------------
# eval subcommands


def _write_report(metrics: dict, out: Path, stem: str) -> None:
    ev.write_metrics_json(metrics, out / f"{stem}.json")
    ev.write_metrics_csv(metrics, out / f"{stem}.csv")


def _scheme(opts: _Options) -> str:
    scheme = opts.get("scheme", WORD)
    if scheme not in (WORD, BYTE):
        raise _ValidationError(f"scheme must be {WORD!r} or {BYTE!r}")
    return scheme


def cmd_eval_length(opts: _Options) -> int:
    gens = ev.read_generations(opts.get("generations") or _missing("--generations"))
    if not gens:
        raise _OperationalError("no generations to evaluate")
    out = _out_dir(opts)
    stats = ev.length_stats([t for _, t in gens], scheme=_scheme(opts))
    _write_report(stats, out, "length")
    _echo(
        f"length: n={len(gens)} mean={stats['mean']:.1f} median={stats['median']:.1f} "
        f"p10={stats['p10']:.1f} p90={stats['p90']:.1f} -> {out}"
    )
    return _EXIT_OK


def cmd_eval_repetition(opts: _Options) -> int:
    gens = ev.read_generations(opts.get("generations") or _missing("--generations"))
    if not gens:
        raise _OperationalError("no generations to evaluate")
    out = _out_dir(opts)
    n = int(opts.get("n", 5))
    min_count = int(opts.get("min_count", 3))
    boundary = int(opts.get("boundary", 2048))
    scheme = _scheme(opts)

    from .textkit import tokenize

    rows = []
    for ex_id, text in gens:
        tokens = tokenize(text, scheme)
        reps = ev.detect_repetitions(tokens, n, min_count)
        before, after = ev.segmented_repetition_rate(tokens, n, boundary, min_count)
        rows.append(
            {
                "example_id": ex_id,
                "flagged": bool(reps),
                "distinct_repeated_ngrams": len(reps),
                "before_rate": before,
                "after_rate": after,
            }
        )
    with open(out / "repetition_per_text.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    summary = {
        "n": n,
        "min_count": min_count,
        "boundary": boundary,
        "flag_rate": sum(r["flagged"] for r in rows) / len(rows),
        "mean_before_rate": sum(r["before_rate"] for r in rows) / len(rows),
        "mean_after_rate": sum(r["after_rate"] for r in rows) / len(rows),
    }
    _write_report(summary, out, "repetition")
    _echo(f"repetition: flag_rate={summary['flag_rate']:.3f} over {len(rows)} texts -> {out}")
    return _EXIT_OK


def _load_scorer(opts: _Options):
    model_path = opts.get("model_path") or _missing("--model")
    vocab_path = opts.get("vocab") or _missing("--vocab")
    m = tinylm.load_model(model_path)
    vocab = tinylm.Vocab.load(vocab_path)
    unknown = opts.get("unknown", "error")
    if unknown not in ("error", "pad"):
        raise _ValidationError("--unknown must be error or pad")
    return m, vocab, unknown


def cmd_eval_ranking(opts: _Options) -> int:
    examples = ds.read_examples(opts.get("dataset") or _missing("--dataset"))
    if not examples:
        raise _OperationalError("no examples to evaluate")
    out = _out_dir(opts)
    seed = opts.require_seed()
    m, vocab, unknown = _load_scorer(opts)
    scorer = tinylm.make_scorer(m, vocab, unknown=unknown)

    table = {}
    record_rows = []
    for setting in ev.FIVE_SETTINGS:
        try:
            accuracy, records = ev.ranking_accuracy(scorer, examples, setting, seed)
        except KeyError as exc:
            raise _ValidationError(
                f"{exc.args[0]}; the dataset holds tokens the model never saw "
                "(pass --unknown pad to score them as padding)"
            ) from exc
        table[str(setting)] = accuracy
        for r in records:
            record_rows.append(
                {
                    "setting": str(setting),
                    "example_id": r.example_id,
                    "logps_w": r.logps_w,
                    "logps_l": r.logps_l,
                    "correct": r.correct,
                }
            )
    with open(out / "ranking_records.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(record_rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(record_rows)
    _write_report({"n_examples": len(examples), "accuracy": table}, out, "ranking")
    pretty = "  ".join(f"{k}={v:.3f}" for k, v in table.items())
    _echo(f"ranking: {pretty} -> {out}")
    return _EXIT_OK


def cmd_eval_judge(opts: _Options) -> int:
    examples = ds.read_examples(opts.get("dataset") or _missing("--dataset"))
    gens = dict(ev.read_generations(opts.get("generations") or _missing("--generations")))
    out = _out_dir(opts)
    gw = _make_gateway(opts)

    counts = {"yes": 0, "no": 0, "partially": 0, "malformed": 0, "gateway_error": 0}
    rows = []
    for ex in examples:
        text = gens.get(ex.id)
        if text is None:
            continue
        for ci, c in enumerate(ex.instruction.constraints):
            prompt = ev.render_judge_prompt(ex.instruction.main_goal, c.text, text)
            row = {"example_id": ex.id, "constraint_index": ci}
            try:
                resp = gw.complete_text(prompt)
            except GatewayError as exc:
                counts["gateway_error"] += 1
                row["error"] = str(exc)
                rows.append(row)
                continue
            try:
                verdict = ev.parse_judge_response(resp)
            except ev.MalformedVerdictError as exc:
                counts["malformed"] += 1
                row["malformed"] = str(exc)
                rows.append(row)
                continue
            counts[verdict.answer] += 1
            row.update(
                {"answer": verdict.answer, "reasoning": verdict.reasoning, "quote": verdict.quote}
            )
            rows.append(row)
    with open(out / "verdicts.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    judged = counts["yes"] + counts["no"] + counts["partially"]
    summary = dict(counts)
    summary["judged"] = judged
    if judged:
        summary["satisfied_rate"] = counts["yes"] / judged
        summary["partial_rate"] = counts["partially"] / judged
        summary["not_rate"] = counts["no"] / judged
    _write_report(summary, out, "judge")
    _echo(f"judge: {judged} verdicts, {counts['malformed']} malformed -> {out}")
    return _EXIT_OK


def cmd_eval_agreement(opts: _Options) -> int:
    ann_path = opts.get("annotations") or _missing("--annotations")
    matrix, units, annotators = ev.read_annotations(ann_path)
    out = _out_dir(opts)
    metrics: dict = {
        "n_units": len(units),
        "n_annotators": len(annotators),
        "krippendorff_alpha": ev.krippendorff_alpha(matrix),
    }
    # satisfaction tally only applies to fully labeled yes/partially/no data
    columns = [[matrix[u][a] for u in range(len(units))] for a in range(len(annotators))]
    if all(all(v is not None for v in col) for col in columns):
        try:
            metrics["satisfaction"] = ev.satisfaction_tally(columns)
        except (ValueError, KeyError):
            pass

    judge_path = opts.get("judge")
    if judge_path:
        judge_labels = {}
        with open(judge_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                judge_labels[str(row["unit_id"])] = row["label"]
        judge_list, human_list = [], []
        for ui, unit in enumerate(units):
            if unit not in judge_labels:
                continue
            labels = [v for v in matrix[ui] if v is not None]
            if not labels:
                continue
            best = max(set(labels), key=labels.count)
            # a majority tie between labels leaves the unit out
            if labels.count(best) * 2 <= len(labels) and len(set(labels)) > 1:
                tied = [l for l in set(labels) if labels.count(l) == labels.count(best)]
                if len(tied) > 1:
                    continue
            judge_list.append(judge_labels[unit])
            human_list.append(best)
        if judge_list:
            metrics["agreement"] = ev.agreement_matrix(judge_list, human_list)
            metrics["compared_units"] = len(judge_list)
    _write_report(metrics, out, "agreement")
    _echo(f"agreement: alpha={metrics['krippendorff_alpha']:.4f} -> {out}")
    return _EXIT_OK


def cmd_eval_preference(opts: _Options) -> int:
    examples = ds.read_examples(opts.get("dataset") or _missing("--dataset"))
    if not examples:
        raise _OperationalError("no examples to evaluate")
    out = _out_dir(opts)
    seed = opts.require_seed()
    m, vocab, unknown = _load_scorer(opts)

    def scorer_logit(prompt: str, candidate: str) -> float:
        ctx = vocab.encode_text(prompt, unknown="pad")
        tid = vocab.encode([candidate], unknown="pad")
        return tinylm.seq_logprob(m, ctx, tid).sum_logp

    metrics = ev.preference_prompt_eval(scorer_logit, examples, seed)
    _write_report(metrics, out, "preference")
    _echo(
        f"preference: accuracy={metrics['preference_accuracy']:.3f} "
        f"first_position_rate={metrics['first_position_rate']:.3f} -> {out}"
    )
    return _EXIT_OK


def cmd_report(opts: _Options) -> int:
    out = _out_dir(opts)
    wrote = []
    curve_path = opts.get("curve")
    if curve_path:
        curve = obj.read_curve_csv(curve_path)
        if not curve:
            raise _OperationalError(f"no curve points in {curve_path}")
        svgplot.write_chart(svgplot.curve_panels(curve), out / "curve.svg")
        wrote.append("curve.svg")
    metric_files = opts.get("metrics") or []
    if metric_files:
        merged = {}
        for mf in metric_files:
            p = Path(mf)
            if not p.is_file():
                raise _OperationalError(f"metrics file not found: {p}")
            merged[p.stem] = json.loads(p.read_text(encoding="utf-8"))
        ev.write_metrics_json(merged, out / "report.json")
        ev.write_metrics_csv(merged, out / "report.csv")
        wrote.extend(["report.json", "report.csv"])
    if not wrote:
        raise _ValidationError("report needs --curve and/or --metrics")
    _echo(f"report: wrote {', '.join(wrote)} -> {out}")
    return _EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of default option values")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default: out)")


def _add_gateway_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=["mock", "http"], help="LLM provider (default mock)")
    p.add_argument("--canned", help="JSON file of canned mock responses")
    p.add_argument("--cache-dir", dest="cache_dir", help="response cache directory")
    p.add_argument("--model", help="model name sent to the provider")
    p.add_argument("--url", help="endpoint URL for --provider http")
    p.add_argument("--shape", choices=["prompt", "completions", "chat"], help="http payload shape")
    p.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iorpo",
        description="Corpus filtering, dataset construction, preference training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="apply corpus quality filters")
    p.add_argument("--input", help="corpus directory or JSONL file")
    p.add_argument("--blocklist-dir", dest="blocklist_dir", help="directory of blocklist files")
    p.add_argument("--filter-config", dest="filter_config", help="threshold config JSON")
    p.add_argument("--downsample", action="store_true", default=None,
                   help="also drop news-domain / religious-heavy documents")
    _add_common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("build", help="construct the instruction dataset")
    p.add_argument("--input", help="document directory or JSONL file")
    p.add_argument("--seed", type=int, help="seed for selection and splits")
    p.add_argument("--constraint-mode", dest="constraint_mode",
                   choices=["all", "single", "varying"], help="constraints kept per example")
    p.add_argument("--review-sample", dest="review_sample", type=int,
                   help="write a seeded random sample of N corrupted-constraint "
                        "rows to review_sample.csv for manual review")
    p.add_argument("--classify", action="store_true", default=None,
                   help="label constraint type/scope via the provider")
    _add_gateway_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train the tiny model")
    p.add_argument("--dataset", help="training JSONL")
    p.add_argument("--objective", choices=["iorpo", "sft"], help="training objective")
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float, help="preference term weight")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--context", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--probe-size", dest="probe_size", type=int)
    p.add_argument("--unnormalized", action="store_true", default=None,
                   help="use unnormalized sequence probabilities in the odds")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--fault", choices=["sign-flip"], help="inject a fault (negative control)")
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    pe = sub.add_parser("eval", help="evaluation metrics")
    esub = pe.add_subparsers(dest="which", required=True)

    p = esub.add_parser("length", help="token-length statistics")
    p.add_argument("--generations", help="JSONL of {example_id, text}")
    p.add_argument("--scheme", choices=[WORD, BYTE])
    _add_common(p)
    p.set_defaults(func=cmd_eval_length)

    p = esub.add_parser("repetition", help="n-gram repetition metrics")
    p.add_argument("--generations")
    p.add_argument("--n", type=int)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--boundary", type=int)
    p.add_argument("--scheme", choices=[WORD, BYTE])
    _add_common(p)
    p.set_defaults(func=cmd_eval_repetition)

    p = esub.add_parser("ranking", help="specificity ranking accuracy (all five settings)")
    p.add_argument("--dataset")
    p.add_argument("--model", dest="model_path", help="model checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--seed", type=int)
    p.add_argument("--unknown", choices=["error", "pad"],
                   help="out-of-vocabulary policy when scoring text the model "
                        "never saw (default: error)")
    _add_common(p)
    p.set_defaults(func=cmd_eval_ranking)

    p = esub.add_parser("judge", help="constraint-satisfaction judging via a provider")
    p.add_argument("--dataset")
    p.add_argument("--generations")
    _add_gateway_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval_judge)

    p = esub.add_parser("agreement", help="annotation agreement statistics")
    p.add_argument("--annotations", help="JSONL of {unit_id, annotator_id, label}")
    p.add_argument("--judge", help="JSONL of {unit_id, label} judge verdicts")
    _add_common(p)
    p.set_defaults(func=cmd_eval_agreement)

    p = esub.add_parser("preference", help="instruction preference prompting")
    p.add_argument("--dataset")
    p.add_argument("--model", dest="model_path")
    p.add_argument("--vocab")
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_eval_preference)

    p = sub.add_parser("report", help="render plots/reports from saved outputs")
    p.add_argument("--curve", help="curve CSV from train")
    p.add_argument("--metrics", nargs="*", help="metric JSON files to merge")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(_Options(args))
    except _ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except _OperationalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_OPERATIONAL
    except (OSError, json.JSONDecodeError, GatewayError, ds.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
