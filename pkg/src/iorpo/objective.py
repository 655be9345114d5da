"""Instruction-preference training objective and a small deterministic trainer.

An example carries one response ``y``, a faithful instruction ``x_w``, and a
corrupted instruction ``x_l``.  The loss rewards the model for holding higher
odds of producing ``y`` under the faithful instruction:

    total  = l_sft + lam * l_ior
    l_sft  = mean per-token NLL of y given x_w
    l_ior  = -log sigmoid(log_odds(y|x_w) - log_odds(y|x_l))
    odds(p) = p / (1 - p),  p = P(y|x)

``P(y|x)`` is the length-normalized sequence probability ``exp(mean token
log-prob)`` by default — the unnormalized product ``exp(sum)`` underflows for
long responses — with the unnormalized variant available behind the
``normalized`` switch for study.

All odds arithmetic stays in log space (log1mexp / softplus), so scores as
low as avg_logp = -745 stay finite.  The analytic gradient is assembled from
the factorization

    d l_ior / d theta = -delta * [ grad a_w / (1 - p_w) - grad a_l / (1 - p_l) ]

with delta = sigmoid(-log_odds_ratio) and a = log P; it is validated against
central finite differences of the loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tinylm
from .tinylm import ModelParams, SequenceScore, Vocab

_LN2 = math.log(2.0)

DEFAULT_LAMBDA = 0.4
# Reference full-scale runs use 5e-5; the tiny MLP needs a much larger step
# to move in a handful of epochs.
DEFAULT_LEARNING_RATE = 0.5


class DegenerateProbabilityError(ValueError):
    """Sequence probability is 1 (avg_logp >= 0), so odds are undefined."""


def log1mexp(a: float) -> float:
    """log(1 - exp(a)) for a < 0, stable across the whole range.

    Two branches: for a < -ln 2, exp(a) is small and log1p(-exp(a)) is exact;
    otherwise -expm1(a) avoids cancellation in 1 - exp(a).
    """
    if a >= 0:
        raise DegenerateProbabilityError(f"log1mexp requires a < 0, got {a}")
    if a < -_LN2:
        return math.log1p(-math.exp(a))
    return math.log(-math.expm1(a))


def softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow; equals -log sigmoid(-x)."""
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def seq_prob(score: SequenceScore) -> float:
    """Length-normalized sequence probability exp(avg_logp) in (0, 1)."""
    if score.avg_logp >= 0:
        raise DegenerateProbabilityError(
            f"avg_logp = {score.avg_logp} gives P >= 1; odds undefined"
        )
    return math.exp(score.avg_logp)


def log_odds(avg_logp: float) -> float:
    """log(p / (1-p)) for p = exp(avg_logp), never materializing p.

    Equals avg_logp - log(1 - exp(avg_logp)); finite even at avg_logp = -745
    where p itself is subnormal.
    """
    if avg_logp >= 0:
        raise DegenerateProbabilityError(
            f"avg_logp = {avg_logp} gives P >= 1; odds undefined"
        )
    return avg_logp - log1mexp(avg_logp)


@dataclass(frozen=True)
class LossBreakdown:
    """Every intermediate of one loss evaluation.

    log_p_w / log_p_l are the log-domain probabilities fed to the odds
    (avg_logp when normalized, sum_logp otherwise); p_w / p_l are their exp,
    kept for inspection and allowed to underflow to 0.0 in extreme cases
    while the log-domain fields stay exact.
    """

    l_sft: float
    log_p_w: float
    log_p_l: float
    p_w: float
    p_l: float
    log_odds_w: float
    log_odds_l: float
    log_odds_ratio: float
    l_ior: float
    lam: float
    total: float
    normalized: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.l_sft < 0 or self.l_ior < 0:
            raise ValueError("loss terms must be >= 0")
        for name in ("p_w", "p_l"):
            p = getattr(self, name)
            if not (0.0 <= p < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {p}")


def breakdown_from_scores(
    score_w: SequenceScore,
    score_l: SequenceScore,
    lam: float = DEFAULT_LAMBDA,
    normalized: bool = True,
) -> LossBreakdown:
    """Assemble the full loss from the two teacher-forced scores of y."""
    a_w = score_w.avg_logp if normalized else score_w.sum_logp
    a_l = score_l.avg_logp if normalized else score_l.sum_logp
    lo_w = log_odds(a_w)
    lo_l = log_odds(a_l)
    ratio = lo_w - lo_l
    l_sft = -score_w.avg_logp
    l_ior = softplus(-ratio)
    return LossBreakdown(
        l_sft=l_sft,
        log_p_w=a_w,
        log_p_l=a_l,
        p_w=math.exp(a_w),
        p_l=math.exp(a_l),
        log_odds_w=lo_w,
        log_odds_l=lo_l,
        log_odds_ratio=ratio,
        l_ior=l_ior,
        lam=lam,
        total=l_sft + lam * l_ior,
        normalized=normalized,
    )


@dataclass(frozen=True)
class GradientFactors:
    """delta = sigmoid(-log_odds_ratio) gates the preference update; each
    score gradient is further scaled by 1/(1-p) for its own sequence."""

    delta: float
    grad_w_scale: float  # delta / (1 - p_w)
    grad_l_scale: float  # delta / (1 - p_l)

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.grad_w_scale <= 0 or self.grad_l_scale <= 0:
            raise ValueError("gradient scales must be positive")


def gradient_factors(bd: LossBreakdown) -> GradientFactors:
    """Stable evaluation: delta = exp(-softplus(r)) and
    delta/(1-p) = exp(-softplus(r) - log1mexp(log p))."""
    r = bd.log_odds_ratio
    neg_sp = -softplus(r)
    return GradientFactors(
        delta=math.exp(neg_sp),
        grad_w_scale=math.exp(neg_sp - log1mexp(bd.log_p_w)),
        grad_l_scale=math.exp(neg_sp - log1mexp(bd.log_p_l)),
    )


@dataclass(frozen=True)
class EncodedExample:
    """A training example already mapped to token ids."""

    x_w_ids: tuple[int, ...]
    x_l_ids: tuple[int, ...]
    y_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "x_w_ids", tuple(int(i) for i in self.x_w_ids))
        object.__setattr__(self, "x_l_ids", tuple(int(i) for i in self.x_l_ids))
        object.__setattr__(self, "y_ids", tuple(int(i) for i in self.y_ids))
        if not self.y_ids:
            raise ValueError("y_ids must be non-empty")
        if not self.x_w_ids or not self.x_l_ids:
            raise ValueError("instruction ids must be non-empty")


def encode_example(ex, vocab: Vocab, unknown: str = "error") -> EncodedExample:
    """Encode a dataset example (x_w / x_l / y text fields) with vocab."""
    return EncodedExample(
        x_w_ids=tuple(vocab.encode_text(ex.x_w, unknown=unknown)),
        x_l_ids=tuple(vocab.encode_text(ex.x_l, unknown=unknown)),
        y_ids=tuple(vocab.encode_text(ex.y, unknown=unknown)),
    )


def _coerce(ex, vocab: Vocab | None) -> EncodedExample:
    if isinstance(ex, EncodedExample):
        return ex
    if vocab is None:
        raise TypeError("text examples need a vocab to encode with")
    return encode_example(ex, vocab)


def iorpo_loss(
    m: ModelParams,
    ex,
    lam: float = DEFAULT_LAMBDA,
    vocab: Vocab | None = None,
    normalized: bool = True,
) -> LossBreakdown:
    """Full loss of one example (EncodedExample, or text example + vocab)."""
    enc = _coerce(ex, vocab)
    score_w = tinylm.seq_logprob(m, enc.x_w_ids, enc.y_ids)
    score_l = tinylm.seq_logprob(m, enc.x_l_ids, enc.y_ids)
    return breakdown_from_scores(score_w, score_l, lam=lam, normalized=normalized)


def iorpo_grad(
    m: ModelParams,
    ex,
    lam: float = DEFAULT_LAMBDA,
    vocab: Vocab | None = None,
    normalized: bool = True,
) -> tuple[LossBreakdown, np.ndarray]:
    """(breakdown, flat gradient of the total loss).

    The preference part is assembled from GradientFactors; the returned
    vector is the gradient of the loss (descent steps subtract it) and is
    held to finite differences of iorpo_loss at 1e-6 relative.
    """
    enc = _coerce(ex, vocab)
    score_w = tinylm.seq_logprob(m, enc.x_w_ids, enc.y_ids)
    score_l = tinylm.seq_logprob(m, enc.x_l_ids, enc.y_ids)
    bd = breakdown_from_scores(score_w, score_l, lam=lam, normalized=normalized)

    g_sum_w = tinylm.seq_logprob_grad(m, enc.x_w_ids, enc.y_ids)
    g_sum_l = tinylm.seq_logprob_grad(m, enc.x_l_ids, enc.y_ids)
    n_w = float(score_w.n_tokens)
    n_l = float(score_l.n_tokens)

    fac = gradient_factors(bd)
    # d(log p)/d(sum logp): 1/n when length-normalized, 1 otherwise.
    dw = 1.0 / n_w if normalized else 1.0
    dl = 1.0 / n_l if normalized else 1.0

    coef_w = -1.0 / n_w - lam * fac.grad_w_scale * dw  # SFT + preference, via x_w
    coef_l = lam * fac.grad_l_scale * dl               # preference, via x_l
    return bd, coef_w * g_sum_w + coef_l * g_sum_l


def sft_loss_grad(
    m: ModelParams, ex, vocab: Vocab | None = None
) -> tuple[float, np.ndarray]:
    """Mean per-token NLL of y given x_w, and its flat gradient."""
    enc = _coerce(ex, vocab)
    score = tinylm.seq_logprob(m, enc.x_w_ids, enc.y_ids)
    grad = tinylm.seq_logprob_grad(m, enc.x_w_ids, enc.y_ids)
    return -score.avg_logp, grad / -float(score.n_tokens)


# --------------------------------------------------------------------------
# trainer


@dataclass(frozen=True)
class TrainerConfig:
    lam: float = DEFAULT_LAMBDA
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = 2
    seed: int = 0
    optimizer: str = "sgd"
    log_every: int = 10
    context: int = 8
    embed_dim: int = 16
    hidden_dim: int = 32
    init_scale: float = 0.1
    probe_size: int = 32
    normalized: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass(frozen=True)
class TrainingCurvePoint:
    """Probe-set means of the four score trails plus a loss snapshot.

    l_ior/loss are None for pure-SFT runs (the curve file leaves the column
    empty there).
    """

    step: int
    logps_y_given_xw: float
    logps_y_given_xl: float
    logps_xw: float
    logps_xl: float
    l_sft: float
    l_ior: float | None
    total: float
    loss: LossBreakdown | None = None


@dataclass
class TrainResult:
    params: ModelParams
    curve: list[TrainingCurvePoint]
    vocab: Vocab


def _probe_point(
    m: ModelParams, probe: Sequence[EncodedExample], step: int, cfg: TrainerConfig, objective: str
) -> TrainingCurvePoint:
    y_w, y_l, i_w, i_l = [], [], [], []
    for enc in probe:
        y_w.append(tinylm.seq_logprob(m, enc.x_w_ids, enc.y_ids).avg_logp)
        y_l.append(tinylm.seq_logprob(m, enc.x_l_ids, enc.y_ids).avg_logp)
        i_w.append(tinylm.seq_logprob(m, (), enc.x_w_ids).avg_logp)
        i_l.append(tinylm.seq_logprob(m, (), enc.x_l_ids).avg_logp)
    if objective == "iorpo":
        bd = iorpo_loss(m, probe[0], lam=cfg.lam, normalized=cfg.normalized)
        l_sft, l_ior, total, loss = bd.l_sft, bd.l_ior, bd.total, bd
    else:
        l_sft, _ = sft_loss_grad(m, probe[0])
        l_ior, total, loss = None, l_sft, None
    return TrainingCurvePoint(
        step=step,
        logps_y_given_xw=float(np.mean(y_w)),
        logps_y_given_xl=float(np.mean(y_l)),
        logps_xw=float(np.mean(i_w)),
        logps_xl=float(np.mean(i_l)),
        l_sft=l_sft,
        l_ior=l_ior,
        total=total,
        loss=loss,
    )


def train(
    dataset: Sequence,
    cfg: TrainerConfig = TrainerConfig(),
    objective: str = "iorpo",
    vocab: Vocab | None = None,
) -> TrainResult:
    """Seeded single-threaded training over the dataset.

    Builds the vocabulary from the example texts unless one is supplied,
    initializes a fresh model from cfg.seed, and performs one update per
    example with a fresh seeded shuffle each epoch.  The curve is logged at
    step 0, every log_every updates, and at the final step; logged values
    are means over a fixed probe subset (the first min(probe_size, n)
    examples in dataset order), with the loss snapshot taken on the first
    probe example.
    """
    if objective not in ("sft", "iorpo"):
        raise ValueError(f"objective must be 'sft' or 'iorpo', got {objective!r}")
    if not dataset:
        raise ValueError("dataset must be non-empty")

    if vocab is None:
        if isinstance(dataset[0], EncodedExample):
            raise TypeError("encoded datasets need an explicit vocab")
        texts = []
        for ex in dataset:
            texts.extend((ex.x_w, ex.x_l, ex.y))
        vocab = Vocab.from_texts(texts)
    encoded = [_coerce(ex, vocab) for ex in dataset]

    m = tinylm.init_params(
        vocab_size=vocab.n_ids,
        context=cfg.context,
        embed_dim=cfg.embed_dim,
        hidden_dim=cfg.hidden_dim,
        seed=cfg.seed,
        scale=cfg.init_scale,
    )
    probe = encoded[: max(1, min(cfg.probe_size, len(encoded)))]
    curve = [_probe_point(m, probe, 0, cfg, objective)]

    theta = m.to_vector()
    adam_m = np.zeros_like(theta)
    adam_v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    rng = np.random.default_rng(cfg.seed)
    step = 0
    total_steps = cfg.epochs * len(encoded)
    for _ in range(cfg.epochs):
        for idx in rng.permutation(len(encoded)):
            enc = encoded[int(idx)]
            if objective == "iorpo":
                _, grad = iorpo_grad(m, enc, lam=cfg.lam, normalized=cfg.normalized)
            else:
                _, grad = sft_loss_grad(m, enc)
            step += 1
            if cfg.optimizer == "sgd":
                theta -= cfg.learning_rate * grad
            else:
                adam_m = beta1 * adam_m + (1 - beta1) * grad
                adam_v = beta2 * adam_v + (1 - beta2) * grad * grad
                mhat = adam_m / (1 - beta1**step)
                vhat = adam_v / (1 - beta2**step)
                theta -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
            m = m.from_vector(theta)
            if step % cfg.log_every == 0 or step == total_steps:
                curve.append(_probe_point(m, probe, step, cfg, objective))
    return TrainResult(params=m, curve=curve, vocab=vocab)


CURVE_COLUMNS = (
    "step",
    "logps_y_xw",
    "logps_y_xl",
    "logps_xw",
    "logps_xl",
    "l_sft",
    "l_ior",
    "total",
)


def write_curve_csv(curve: Iterable[TrainingCurvePoint], path: str | Path) -> None:
    """One row per curve point; l_ior left empty for pure-SFT runs."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for pt in curve:
            writer.writerow(
                [
                    pt.step,
                    repr(pt.logps_y_given_xw),
                    repr(pt.logps_y_given_xl),
                    repr(pt.logps_xw),
                    repr(pt.logps_xl),
                    repr(pt.l_sft),
                    "" if pt.l_ior is None else repr(pt.l_ior),
                    repr(pt.total),
                ]
            )


def read_curve_csv(path: str | Path) -> list[TrainingCurvePoint]:
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(
                TrainingCurvePoint(
                    step=int(row["step"]),
                    logps_y_given_xw=float(row["logps_y_xw"]),
                    logps_y_given_xl=float(row["logps_y_xl"]),
                    logps_xw=float(row["logps_xw"]),
                    logps_xl=float(row["logps_xl"]),
                    l_sft=float(row["l_sft"]),
                    l_ior=float(row["l_ior"]) if row["l_ior"] != "" else None,
                    total=float(row["total"]),
                )
            )
    return points
