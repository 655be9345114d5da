"""A fixed-window MLP language model with exact analytic gradients.

Position t of a target sequence is predicted from the k tokens immediately
preceding it in the concatenation context-then-target, left-padded with the
reserved PAD_ID when fewer than k are available:

    window ids -> embedding rows (k x e, concatenated) -> tanh(X W1 + b1)
               -> A W2 + b2 -> log softmax

Everything is float64. Parameters flatten in one canonical order: embedding
(V x e), hidden weights (k*e x h), hidden bias (h), output weights (h x V),
output bias (V), each row-major. Gradients are hand-derived backprop and are
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .textkit import WORD, tokenize

PAD_ID = 0

CHECKPOINT_FORMAT = "tiny-mlp-lm"
CHECKPOINT_VERSION = 1
_PARAM_ORDER = ("emb", "w1", "b1", "w2", "b2")


class EmptyTargetError(ValueError):
    """Scoring requires at least one target token."""


class TokenOutOfRangeError(ValueError):
    """A token id is negative or >= vocab_size."""


@dataclass
class ModelParams:
    vocab_size: int
    context: int
    embed_dim: int
    hidden_dim: int
    emb: np.ndarray  # (V, e)
    w1: np.ndarray   # (k*e, h)
    b1: np.ndarray   # (h,)
    w2: np.ndarray   # (h, V)
    b2: np.ndarray   # (V,)

    def __post_init__(self):
        v, k, e, h = self.vocab_size, self.context, self.embed_dim, self.hidden_dim
        if min(v, k, e, h) < 1:
            raise ValueError("all dimensions must be >= 1")
        expected = {
            "emb": (v, e),
            "w1": (k * e, h),
            "b1": (h,),
            "w2": (h, v),
            "b2": (v,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def n_params(self) -> int:
        return self.emb.size + self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def to_vector(self) -> np.ndarray:
        """Flatten in the canonical order (row-major per tensor)."""
        return np.concatenate([getattr(self, name).ravel() for name in _PARAM_ORDER])

    def from_vector(self, vec: np.ndarray) -> "ModelParams":
        """New ModelParams with the same dims and parameters taken from vec."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ValueError(f"expected vector of length {self.n_params}, got {vec.shape}")
        out = {}
        pos = 0
        for name in _PARAM_ORDER:
            arr = getattr(self, name)
            out[name] = vec[pos : pos + arr.size].reshape(arr.shape).copy()
            pos += arr.size
        return ModelParams(self.vocab_size, self.context, self.embed_dim, self.hidden_dim, **out)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.vocab_size, self.context, self.embed_dim, self.hidden_dim,
            self.emb.copy(), self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
        )


def init_params(
    vocab_size: int,
    context: int = 8,
    embed_dim: int = 16,
    hidden_dim: int = 32,
    seed: int = 0,
    scale: float = 0.1,
) -> ModelParams:
    """Seeded uniform(-scale, scale) weights, zero biases."""
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape)

    return ModelParams(
        vocab_size=vocab_size,
        context=context,
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        emb=u(vocab_size, embed_dim),
        w1=u(context * embed_dim, hidden_dim),
        b1=np.zeros(hidden_dim),
        w2=u(hidden_dim, vocab_size),
        b2=np.zeros(vocab_size),
    )


@dataclass(frozen=True)
class SequenceScore:
    sum_logp: float
    n_tokens: int
    avg_logp: float

    def __post_init__(self):
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be positive")

    @classmethod
    def from_sum(cls, sum_logp: float, n_tokens: int) -> "SequenceScore":
        return cls(sum_logp=sum_logp, n_tokens=n_tokens, avg_logp=sum_logp / n_tokens)


def _check_ids(m: ModelParams, ids: Sequence[int], what: str) -> np.ndarray:
    arr = np.asarray(list(ids), dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= m.vocab_size):
        raise TokenOutOfRangeError(f"{what} contains ids outside [0, {m.vocab_size})")
    return arr


def _windows(m: ModelParams, context: np.ndarray, target: np.ndarray) -> np.ndarray:
    """(T, k) int matrix; row t holds the k ids preceding target position t."""
    k = m.context
    full = np.concatenate([np.full(k, PAD_ID, dtype=np.int64), context, target])
    view = np.lib.stride_tricks.sliding_window_view(full, k)
    starts = context.size + np.arange(target.size)
    return view[starts]


def _forward(m: ModelParams, w: np.ndarray):
    """Returns (X, A, logp) for a window matrix: inputs, hidden activations,
    and the full (T, V) log-softmax table."""
    t = w.shape[0]
    x = m.emb[w].reshape(t, m.context * m.embed_dim)
    a = np.tanh(x @ m.w1 + m.b1)
    u = a @ m.w2 + m.b2
    mx = u.max(axis=1, keepdims=True)
    logz = mx + np.log(np.exp(u - mx).sum(axis=1, keepdims=True))
    return x, a, u - logz


def seq_logprob(m: ModelParams, context: Sequence[int], target: Sequence[int]) -> SequenceScore:
    """Teacher-forced sum of log P(target_t | last k tokens) over the target."""
    ctx = _check_ids(m, context, "context")
    tgt = _check_ids(m, target, "target")
    if tgt.size == 0:
        raise EmptyTargetError("target must contain at least one token")
    _, _, logp = _forward(m, _windows(m, ctx, tgt))
    total = float(logp[np.arange(tgt.size), tgt].sum())
    return SequenceScore.from_sum(total, int(tgt.size))


def seq_logprob_grad(
    m: ModelParams, context: Sequence[int], target: Sequence[int]
) -> np.ndarray:
    """Gradient of seq_logprob(...).sum_logp w.r.t. the flat parameter vector.

    d(sum_logp)/d(logits_t) = onehot(target_t) - softmax(logits_t); the rest
    is plain backprop through the linear-tanh-linear stack, with embedding
    gradients scattered back through the window index matrix.
    """
    ctx = _check_ids(m, context, "context")
    tgt = _check_ids(m, target, "target")
    if tgt.size == 0:
        raise EmptyTargetError("target must contain at least one token")
    w = _windows(m, ctx, tgt)
    x, a, logp = _forward(m, w)
    t = tgt.size

    s = -np.exp(logp)                      # (T, V): -softmax
    s[np.arange(t), tgt] += 1.0

    g_b2 = s.sum(axis=0)
    g_w2 = a.T @ s
    da = s @ m.w2.T
    dz = da * (1.0 - a * a)                # tanh'
    g_b1 = dz.sum(axis=0)
    g_w1 = x.T @ dz
    dx = (dz @ m.w1.T).reshape(t, m.context, m.embed_dim)
    g_emb = np.zeros_like(m.emb)
    np.add.at(g_emb, w, dx)

    return np.concatenate([g_emb.ravel(), g_w1.ravel(), g_b1.ravel(), g_w2.ravel(), g_b2.ravel()])


def generate(
    m: ModelParams,
    context: Sequence[int],
    max_new: int,
    mode: str = "greedy",
    temperature: float = 1.0,
    seed: int = 0,
) -> list[int]:
    """Autoregressive sampling. greedy breaks ties toward the lowest token id;
    temperature mode is seeded and reproducible."""
    if max_new < 0:
        raise ValueError("max_new must be >= 0")
    if mode not in ("greedy", "temperature"):
        raise ValueError(f"mode must be 'greedy' or 'temperature', got {mode!r}")
    if mode == "temperature" and temperature <= 0:
        raise ValueError("temperature must be > 0")
    ids = list(_check_ids(m, context, "context"))
    rng = np.random.default_rng(seed)
    out: list[int] = []
    for _ in range(max_new):
        window = np.asarray(([PAD_ID] * m.context + ids)[-m.context :], dtype=np.int64)
        _, _, logp = _forward(m, window[None, :])
        if mode == "greedy":
            nxt = int(np.argmax(logp[0]))
        else:
            probs = np.exp(logp[0] / temperature)
            probs /= probs.sum()
            nxt = int(rng.choice(m.vocab_size, p=probs))
        out.append(nxt)
        ids.append(nxt)
    return out


def save_model(m: ModelParams, path: str | Path) -> None:
    """Checkpoint = one JSON header line + flat little-endian float64 params
    in canonical order."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "vocab_size": m.vocab_size,
        "context": m.context,
        "embed_dim": m.embed_dim,
        "hidden_dim": m.hidden_dim,
        "pad_id": PAD_ID,
        "dtype": "<f8",
        "order": list(_PARAM_ORDER),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    blob += m.to_vector().astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def load_model(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError("not a model checkpoint (missing header line)")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unknown checkpoint format: {header.get('format')!r}")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {header.get('version')!r}")
    shell = ModelParams(
        vocab_size=header["vocab_size"],
        context=header["context"],
        embed_dim=header["embed_dim"],
        hidden_dim=header["hidden_dim"],
        emb=np.zeros((header["vocab_size"], header["embed_dim"])),
        w1=np.zeros((header["context"] * header["embed_dim"], header["hidden_dim"])),
        b1=np.zeros(header["hidden_dim"]),
        w2=np.zeros((header["hidden_dim"], header["vocab_size"])),
        b2=np.zeros(header["vocab_size"]),
    )
    vec = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    if vec.size != shell.n_params:
        raise ValueError(f"checkpoint holds {vec.size} parameters, expected {shell.n_params}")
    return shell.from_vector(vec.astype(np.float64))


class Vocab:
    """Token-string <-> id mapping. Id 0 is reserved for padding; real tokens
    get ids 1..len(vocab) in first-seen order."""

    def __init__(self, tokens: Iterable[str]):
        self._tokens: list[str] = []
        self._ids: dict[str, int] = {}
        for tok in tokens:
            if tok not in self._ids:
                self._ids[tok] = len(self._tokens) + 1
                self._tokens.append(tok)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self._ids

    @property
    def n_ids(self) -> int:
        """Model vocab_size: real tokens plus the pad id."""
        return len(self._tokens) + 1

    @classmethod
    def from_texts(cls, texts: Iterable[str], scheme: str = WORD) -> "Vocab":
        def all_tokens():
            for text in texts:
                yield from tokenize(text, scheme)

        return cls(all_tokens())

    def encode(self, tokens: Iterable[str], unknown: str = "error") -> list[int]:
        """unknown='error' raises on out-of-vocabulary tokens; 'pad' maps them
        to PAD_ID (toy-scale plumbing for free-text prompts)."""
        if unknown not in ("error", "pad"):
            raise ValueError(f"unknown policy must be 'error' or 'pad', got {unknown!r}")
        out = []
        for tok in tokens:
            tid = self._ids.get(tok)
            if tid is None:
                if unknown == "pad":
                    tid = PAD_ID
                else:
                    raise KeyError(f"token not in vocabulary: {tok!r}")
            out.append(tid)
        return out

    def encode_text(self, text: str, unknown: str = "error") -> list[int]:
        return self.encode(tokenize(text, WORD), unknown=unknown)

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if i == PAD_ID:
                out.append("<pad>")
            elif 1 <= i <= len(self._tokens):
                out.append(self._tokens[i - 1])
            else:
                raise KeyError(f"id not in vocabulary: {i}")
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"tokens": self._tokens}, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls(json.loads(Path(path).read_text(encoding="utf-8"))["tokens"])


def make_scorer(
    m: ModelParams, vocab: Vocab, unknown: str = "error"
) -> Callable[[str, str], SequenceScore]:
    """Bridge to the evaluation harness: (instruction_text, response_text) ->
    SequenceScore via whitespace tokenization and this vocabulary."""

    def scorer(instruction_text: str, response_text: str) -> SequenceScore:
        ctx = vocab.encode_text(instruction_text, unknown=unknown)
        tgt = vocab.encode_text(response_text, unknown=unknown)
        return seq_logprob(m, ctx, tgt)

    return scorer
