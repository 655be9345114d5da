"""Tiny language model tests: scoring, analytic gradients, checkpoints."""

import json
import math

import numpy as np
import pytest

from iorpo import tinylm as tl


def _model(seed=0, vocab_size=7, context=3, embed_dim=4, hidden_dim=5):
    return tl.init_params(
        vocab_size, context=context, embed_dim=embed_dim, hidden_dim=hidden_dim, seed=seed
    )


# -------------------------------------------------------------------- params

def test_init_params_shapes_and_determinism():
    m = _model()
    assert m.emb.shape == (7, 4)
    assert m.w1.shape == (3 * 4, 5)
    assert m.b1.shape == (5,)
    assert m.w2.shape == (5, 7)
    assert m.b2.shape == (7,)
    assert np.all(m.b1 == 0) and np.all(m.b2 == 0)
    assert np.abs(m.emb).max() <= 0.1
    m2 = _model()
    assert np.array_equal(m.to_vector(), m2.to_vector())
    assert not np.array_equal(m.to_vector(), _model(seed=1).to_vector())


def test_vector_round_trip():
    m = _model()
    v = m.to_vector()
    assert v.shape == (m.n_params,)
    back = m.from_vector(v * 2.0)
    assert np.array_equal(back.w2, m.w2 * 2.0)
    assert np.array_equal(m.to_vector(), v)  # original untouched
    with pytest.raises(ValueError):
        m.from_vector(v[:-1])


def test_params_validation():
    m = _model()
    with pytest.raises(ValueError):
        tl.ModelParams(
            vocab_size=7,
            context=3,
            embed_dim=4,
            hidden_dim=5,
            emb=m.emb[:-1],  # wrong row count
            w1=m.w1,
            b1=m.b1,
            w2=m.w2,
            b2=m.b2,
        )


# ------------------------------------------------------------------- scoring

def test_seq_logprob_uniform_at_zero_params():
    m = _model()
    zero = m.from_vector(np.zeros(m.n_params))
    score = tl.seq_logprob(zero, [1, 2], [3, 4, 5])
    assert score.n_tokens == 3
    assert score.sum_logp == pytest.approx(3 * -math.log(7), abs=1e-12)
    assert score.avg_logp == pytest.approx(-math.log(7), abs=1e-12)


def test_seq_logprob_context_conditioning():
    m = _model(seed=2)
    a = tl.seq_logprob(m, [1, 2], [3])
    b = tl.seq_logprob(m, [4, 5], [3])
    assert a.sum_logp != b.sum_logp  # context matters


def test_seq_logprob_pads_short_context():
    m = _model(seed=3)
    # explicit PAD prefix must equal implicit padding
    implicit = tl.seq_logprob(m, [6], [1, 2])
    explicit = tl.seq_logprob(m, [tl.PAD_ID, tl.PAD_ID, 6], [1, 2])
    assert implicit.sum_logp == pytest.approx(explicit.sum_logp, abs=1e-15)


def test_seq_logprob_chain_rule_consistency():
    # scoring [a, b] equals scoring a then b with a extending the context
    m = _model(seed=4)
    joint = tl.seq_logprob(m, [1], [2, 3]).sum_logp
    step1 = tl.seq_logprob(m, [1], [2]).sum_logp
    step2 = tl.seq_logprob(m, [1, 2], [3]).sum_logp
    assert joint == pytest.approx(step1 + step2, abs=1e-12)


def test_seq_logprob_errors():
    m = _model()
    with pytest.raises(tl.EmptyTargetError):
        tl.seq_logprob(m, [1], [])
    with pytest.raises(tl.TokenOutOfRangeError):
        tl.seq_logprob(m, [1], [7])
    with pytest.raises(tl.TokenOutOfRangeError):
        tl.seq_logprob(m, [-1], [1])


def test_probabilities_normalize():
    m = _model(seed=5)
    total = sum(
        math.exp(tl.seq_logprob(m, [1, 2, 3], [t]).sum_logp) for t in range(7)
    )
    assert total == pytest.approx(1.0, abs=1e-12)


# ------------------------------------------------------------------ gradient

def test_seq_logprob_grad_matches_finite_differences():
    m = _model(seed=6)
    ctx, tgt = [1, 2], [3, 4, 5, 1]
    grad = tl.seq_logprob_grad(m, ctx, tgt)

    theta = m.to_vector()
    step = 1e-6
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += step
        down[i] -= step
        fd[i] = (
            tl.seq_logprob(m.from_vector(up), ctx, tgt).sum_logp
            - tl.seq_logprob(m.from_vector(down), ctx, tgt).sum_logp
        ) / (2 * step)
    scale = max(np.abs(grad).max(), np.abs(fd).max(), 1e-12)
    assert np.abs(grad - fd).max() / scale < 1e-7


def test_grad_zero_for_unused_embedding_rows():
    m = _model(seed=7)
    grad = tl.seq_logprob_grad(m, [1], [2])
    g_emb = grad[: 7 * 4].reshape(7, 4)
    # token 5 and 6 appear nowhere (context pads with 0)
    assert np.all(g_emb[5] == 0) and np.all(g_emb[6] == 0)
    assert np.any(g_emb[0] != 0)  # PAD participates via padding


# ------------------------------------------------------------------ generate

def test_generate_greedy_is_deterministic_and_bounded():
    m = _model(seed=8)
    out1 = tl.generate(m, [1, 2], 10)
    out2 = tl.generate(m, [1, 2], 10)
    assert out1 == out2
    assert len(out1) == 10
    assert all(0 <= t < 7 for t in out1)
    assert tl.generate(m, [1], 0) == []
    with pytest.raises(ValueError):
        tl.generate(m, [1], 3, mode="beam")


def test_generate_temperature_seeded():
    m = _model(seed=9)
    a = tl.generate(m, [1], 20, mode="temperature", temperature=1.0, seed=3)
    b = tl.generate(m, [1], 20, mode="temperature", temperature=1.0, seed=3)
    c = tl.generate(m, [1], 20, mode="temperature", temperature=1.0, seed=4)
    assert a == b
    assert a != c


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip_is_exact(tmp_path):
    m = _model(seed=10)
    path = tmp_path / "model.ckpt"
    tl.save_model(m, path)
    back = tl.load_model(path)
    assert back.vocab_size == m.vocab_size
    assert back.context == m.context
    assert np.array_equal(back.to_vector(), m.to_vector())

    header = json.loads(path.read_bytes().split(b"\n", 1)[0])
    assert header["format"] == tl.CHECKPOINT_FORMAT
    assert header["version"] == 1


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b'{"format": "other", "version": 1}\n')
    with pytest.raises(ValueError):
        tl.load_model(path)
    path.write_bytes(b"not json\n")
    with pytest.raises(ValueError):
        tl.load_model(path)


def test_checkpoint_bytes_are_deterministic(tmp_path):
    m = _model(seed=11)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    tl.save_model(m, p1)
    tl.save_model(m, p2)
    assert p1.read_bytes() == p2.read_bytes()


# --------------------------------------------------------------------- vocab

def test_vocab_assigns_ids_in_first_seen_order():
    v = tl.Vocab.from_texts(["b a", "a c"])
    assert v.encode_text("b a c") == [1, 2, 3]
    assert v.n_ids == 4  # PAD + 3 tokens
    assert v.decode([1, 2, 3]) == ["b", "a", "c"]


def test_vocab_unknown_token_policies():
    v = tl.Vocab.from_texts(["a b"])
    with pytest.raises(KeyError):
        v.encode_text("a z")
    assert v.encode_text("a z", unknown="pad") == [1, tl.PAD_ID]
    with pytest.raises(ValueError):
        v.encode_text("a", unknown="skip")


def test_vocab_save_load_round_trip(tmp_path):
    v = tl.Vocab.from_texts(["the quick fox", "the slow fox"])
    path = tmp_path / "vocab.json"
    v.save(path)
    back = tl.Vocab.load(path)
    assert back.encode_text("quick slow") == v.encode_text("quick slow")
    assert back.n_ids == v.n_ids


def test_make_scorer_end_to_end():
    v = tl.Vocab.from_texts(["go left", "go right"])
    m = tl.init_params(v.n_ids, context=2, embed_dim=3, hidden_dim=4, seed=0)
    scorer = tl.make_scorer(m, v, unknown="pad")
    score = scorer("go left", "go right")
    direct = tl.seq_logprob(m, v.encode_text("go left"), v.encode_text("go right"))
    assert score.sum_logp == direct.sum_logp
    assert score.n_tokens == 2
