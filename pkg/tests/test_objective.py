"""Objective tests: scalar numerics, loss algebra, gradients, trainer."""

import math

import mpmath
import numpy as np
import pytest

from iorpo import objective as ob
from iorpo import tinylm as tl
from iorpo.dataset import Constraint, Instruction, TrainingExample


def _example(x_w="go left now", x_l="go right now", y="left left"):
    instr = Instruction("go", (Constraint("left", corrupted_text="right"),))
    return TrainingExample(
        id="e0", x_w=x_w, x_l=x_l, y=y, source="synthetic", instruction=instr
    )


def _setup(seed=0, **cfg_kw):
    ex = _example()
    vocab = tl.Vocab.from_texts([ex.x_w, ex.x_l, ex.y])
    m = tl.init_params(vocab.n_ids, context=3, embed_dim=4, hidden_dim=5, seed=seed)
    return m, vocab, ex


# ------------------------------------------------------------- scalar numerics

def test_log1mexp_matches_extended_precision():
    mpmath.mp.dps = 60
    for a in (-1e-12, -1e-6, -0.1, -0.5, -math.log(2), -1.0, -5.0, -50.0, -745.0):
        want = float(mpmath.log(1 - mpmath.exp(mpmath.mpf(a))))
        got = ob.log1mexp(a)
        assert got == pytest.approx(want, rel=1e-12), a
    with pytest.raises(ValueError):
        ob.log1mexp(0.0)
    with pytest.raises(ValueError):
        ob.log1mexp(0.5)


def test_softplus_stable_both_tails():
    assert ob.softplus(0.0) == pytest.approx(math.log(2), abs=1e-15)
    assert ob.softplus(-800.0) == 0.0
    assert ob.softplus(800.0) == 800.0
    assert ob.softplus(3.0) == pytest.approx(math.log1p(math.exp(3.0)), rel=1e-15)


def test_log_odds_identity_and_stability():
    # moderate regime: matches the naive formula
    for a in (-0.3, -1.0, -2.0):
        p = math.exp(a)
        assert ob.log_odds(a) == pytest.approx(math.log(p / (1 - p)), rel=1e-12)
    # extreme underflow stays finite (p rounds to 0 in float64)
    v = ob.log_odds(-745.0)
    assert math.isfinite(v)
    assert v == pytest.approx(-745.0, rel=1e-12)  # log-odds ~ a for tiny p
    with pytest.raises(ob.DegenerateProbabilityError):
        ob.log_odds(0.0)
    with pytest.raises(ob.DegenerateProbabilityError):
        ob.log_odds(0.5)


def test_seq_prob_is_length_normalized():
    s = tl.SequenceScore.from_sum(-6.0, 3)
    assert s.avg_logp == pytest.approx(-2.0)
    assert ob.seq_prob(s) == pytest.approx(math.exp(-2.0))
    # the unnormalized variant is exercised through breakdown_from_scores
    # (see test_breakdown_normalization_switch)


# ----------------------------------------------------------------- breakdowns

def test_breakdown_total_algebra_and_ln2():
    # equal scores -> log odds ratio 0 -> l_ior = ln 2
    s = tl.SequenceScore.from_sum(-4.0, 4)
    bd = ob.breakdown_from_scores(s, s, lam=0.7)
    assert bd.log_odds_ratio == 0.0
    assert bd.l_ior == pytest.approx(math.log(2), abs=1e-12)
    assert bd.total == pytest.approx(bd.l_sft + 0.7 * bd.l_ior, abs=1e-12)
    assert bd.l_sft == pytest.approx(1.0, abs=1e-15)  # -avg_logp of y|x_w


def test_breakdown_swap_negates_log_odds_ratio_exactly():
    w = tl.SequenceScore.from_sum(-3.0, 3)
    l = tl.SequenceScore.from_sum(-7.5, 3)
    fwd = ob.breakdown_from_scores(w, l)
    rev = ob.breakdown_from_scores(l, w)
    assert fwd.log_odds_ratio == -rev.log_odds_ratio  # exact float negation


def test_breakdown_normalization_switch_changes_odds_not_sft():
    w = tl.SequenceScore.from_sum(-3.0, 3)
    l = tl.SequenceScore.from_sum(-7.5, 3)
    norm = ob.breakdown_from_scores(w, l, normalized=True)
    raw = ob.breakdown_from_scores(w, l, normalized=False)
    assert norm.l_sft == raw.l_sft  # SFT ignores the switch
    assert norm.p_w == pytest.approx(math.exp(-1.0))
    assert raw.p_w == pytest.approx(math.exp(-3.0))
    assert norm.log_odds_ratio != raw.log_odds_ratio


def test_gradient_factors_definitions():
    w = tl.SequenceScore.from_sum(-2.0, 2)
    l = tl.SequenceScore.from_sum(-5.0, 2)
    bd = ob.breakdown_from_scores(w, l)
    fac = ob.gradient_factors(bd)
    r = bd.log_odds_ratio
    p_w, p_l = bd.p_w, bd.p_l
    assert fac.delta == pytest.approx(1 / (1 + math.exp(r)), rel=1e-12)
    assert fac.grad_w_scale == pytest.approx(fac.delta / (1 - p_w), rel=1e-12)
    assert fac.grad_l_scale == pytest.approx(fac.delta / (1 - p_l), rel=1e-12)


def test_degenerate_probability_rejected():
    perfect = tl.SequenceScore.from_sum(0.0, 2)  # p = 1
    ok = tl.SequenceScore.from_sum(-1.0, 2)
    with pytest.raises(ob.DegenerateProbabilityError):
        ob.breakdown_from_scores(perfect, ok)


# -------------------------------------------------------------------- losses

def test_iorpo_loss_matches_manual_composition():
    m, vocab, ex = _setup()
    enc = ob.encode_example(ex, vocab)
    sw = tl.seq_logprob(m, enc.x_w_ids, enc.y_ids)
    sl = tl.seq_logprob(m, enc.x_l_ids, enc.y_ids)
    want = ob.breakdown_from_scores(sw, sl, lam=0.4)
    got = ob.iorpo_loss(m, ex, lam=0.4, vocab=vocab)
    assert got == want


def test_iorpo_grad_matches_finite_differences_both_modes():
    m, vocab, ex = _setup(seed=1)
    theta = m.to_vector()
    for normalized in (True, False):
        bd, grad = ob.iorpo_grad(m, ex, lam=0.6, vocab=vocab, normalized=normalized)
        step = 1e-6
        fd = np.zeros_like(theta)
        for i in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[i] += step
            dn[i] -= step
            fd[i] = (
                ob.iorpo_loss(m.from_vector(up), ex, 0.6, vocab, normalized).total
                - ob.iorpo_loss(m.from_vector(dn), ex, 0.6, vocab, normalized).total
            ) / (2 * step)
        scale = max(np.abs(grad).max(), np.abs(fd).max(), 1e-12)
        assert np.abs(grad - fd).max() / scale < 1e-7


def test_lambda_zero_reduces_to_sft_gradient():
    m, vocab, ex = _setup(seed=2)
    bd, grad = ob.iorpo_grad(m, ex, lam=0.0, vocab=vocab)
    l_sft, g_sft = ob.sft_loss_grad(m, ex, vocab=vocab)
    assert bd.total == pytest.approx(l_sft, abs=1e-12)
    assert np.abs(grad - g_sft).max() <= 1e-12


def test_sft_loss_grad_is_mean_nll_of_gold_branch():
    m, vocab, ex = _setup(seed=3)
    enc = ob.encode_example(ex, vocab)
    sw = tl.seq_logprob(m, enc.x_w_ids, enc.y_ids)
    l_sft, g = ob.sft_loss_grad(m, ex, vocab=vocab)
    assert l_sft == pytest.approx(-sw.avg_logp, abs=1e-15)
    g_sum = tl.seq_logprob_grad(m, enc.x_w_ids, enc.y_ids)
    assert np.allclose(g, -g_sum / sw.n_tokens, atol=1e-15)


def test_encode_example_rejects_oov_by_default():
    ex = _example()
    vocab = tl.Vocab.from_texts([ex.x_w])  # y words missing
    with pytest.raises(KeyError):
        ob.encode_example(ex, vocab)
    enc = ob.encode_example(ex, vocab, unknown="pad")
    # the corrupted instruction holds the only OOV word in this fixture
    assert tl.PAD_ID in enc.x_l_ids


# ------------------------------------------------------------------- trainer

def _toy_dataset(n=8):
    out = []
    for i in range(n):
        a, b = f"t{i % 4}", f"t{(i + 1) % 4}"
        instr = Instruction("say", (Constraint(a, corrupted_text=b),))
        out.append(
            TrainingExample(
                id=f"d{i}",
                x_w=f"say {a}",
                x_l=f"say {b}",
                y=f"{a} {a}",
                source="synthetic",
                instruction=instr,
            )
        )
    return out


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        ob.TrainerConfig(lam=-0.1)
    with pytest.raises(ValueError):
        ob.TrainerConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        ob.TrainerConfig(epochs=-1)
    with pytest.raises(ValueError):
        ob.TrainerConfig(optimizer="lbfgs")
    with pytest.raises(ValueError):
        ob.TrainerConfig(log_every=0)


def test_train_is_deterministic_and_logs_expected_steps():
    data = _toy_dataset(8)
    cfg = ob.TrainerConfig(
        epochs=2, log_every=3, context=2, embed_dim=3, hidden_dim=4, seed=5,
        learning_rate=0.1,
    )
    r1 = ob.train(data, cfg)
    r2 = ob.train(data, cfg)
    assert np.array_equal(r1.params.to_vector(), r2.params.to_vector())
    steps = [p.step for p in r1.curve]
    # step 0, every 3rd step, and the final step (16) exactly once
    assert steps == [0, 3, 6, 9, 12, 15, 16]
    assert r1.curve[0].l_ior is not None


def test_train_epochs_zero_returns_initial_model():
    data = _toy_dataset(4)
    cfg = ob.TrainerConfig(epochs=0, context=2, embed_dim=3, hidden_dim=4, seed=1)
    res = ob.train(data, cfg)
    init = tl.init_params(
        res.vocab.n_ids, context=2, embed_dim=3, hidden_dim=4, seed=1, scale=0.1
    )
    assert np.array_equal(res.params.to_vector(), init.to_vector())
    assert [p.step for p in res.curve] == [0]


def test_train_sft_objective_leaves_l_ior_empty():
    data = _toy_dataset(4)
    cfg = ob.TrainerConfig(epochs=1, log_every=2, context=2, embed_dim=3, hidden_dim=4)
    res = ob.train(data, cfg, objective="sft")
    for pt in res.curve:
        assert pt.l_ior is None
        assert pt.total == pytest.approx(pt.l_sft)
    with pytest.raises(ValueError):
        ob.train(data, cfg, objective="dpo")
    with pytest.raises(ValueError):
        ob.train([], cfg)


def test_train_improves_gold_branch():
    data = _toy_dataset(8)
    cfg = ob.TrainerConfig(
        epochs=3, log_every=10, context=2, embed_dim=8, hidden_dim=16,
        learning_rate=0.3, lam=1.0,
    )
    res = ob.train(data, cfg)
    first, last = res.curve[0], res.curve[-1]
    assert last.logps_y_given_xw > first.logps_y_given_xw
    gap_first = first.logps_y_given_xw - first.logps_y_given_xl
    gap_last = last.logps_y_given_xw - last.logps_y_given_xl
    assert gap_last > gap_first


def test_adam_optimizer_runs_and_differs_from_sgd():
    data = _toy_dataset(6)
    base = dict(epochs=1, log_every=5, context=2, embed_dim=3, hidden_dim=4,
                learning_rate=0.05)
    sgd = ob.train(data, ob.TrainerConfig(optimizer="sgd", **base))
    adam = ob.train(data, ob.TrainerConfig(optimizer="adam", **base))
    assert not np.array_equal(sgd.params.to_vector(), adam.params.to_vector())


def test_explicit_vocab_is_respected():
    data = _toy_dataset(4)
    vocab = tl.Vocab.from_texts(
        [f"{e.x_w} {e.x_l} {e.y}" for e in data] + ["extra words here"]
    )
    cfg = ob.TrainerConfig(epochs=1, context=2, embed_dim=3, hidden_dim=4)
    res = ob.train(data, cfg, vocab=vocab)
    assert res.vocab is vocab
    assert res.params.vocab_size == vocab.n_ids


# ----------------------------------------------------------------- curve csv

def test_curve_csv_round_trip(tmp_path):
    data = _toy_dataset(5)
    cfg = ob.TrainerConfig(epochs=1, log_every=2, context=2, embed_dim=3, hidden_dim=4)
    res = ob.train(data, cfg)
    path = tmp_path / "curve.csv"
    ob.write_curve_csv(res.curve, path)

    header = path.read_text().splitlines()[0]
    assert header == ",".join(ob.CURVE_COLUMNS)
    back = ob.read_curve_csv(path)
    assert len(back) == len(res.curve)
    for a, b in zip(back, res.curve):
        assert a.step == b.step
        assert a.logps_y_given_xw == b.logps_y_given_xw  # repr round-trip exact
        assert a.l_ior == b.l_ior


def test_curve_csv_sft_leaves_l_ior_column_empty(tmp_path):
    data = _toy_dataset(4)
    cfg = ob.TrainerConfig(epochs=1, log_every=2, context=2, embed_dim=3, hidden_dim=4)
    res = ob.train(data, cfg, objective="sft")
    path = tmp_path / "curve.csv"
    ob.write_curve_csv(res.curve, path)
    rows = path.read_text().splitlines()[1:]
    ior_col = ob.CURVE_COLUMNS.index("l_ior")
    assert all(r.split(",")[ior_col] == "" for r in rows)
    back = ob.read_curve_csv(path)
    assert all(p.l_ior is None for p in back)
