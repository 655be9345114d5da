"""Instruction-preference alignment toolkit.

Modules:
    textkit     deterministic tokenization and n-gram statistics
    filtering   corpus quality signals and threshold gating
    dataset     backtranslation/corruption dataset construction
    gateway     cached, retrying LLM client with a mock provider
    tinylm      fixed-window MLP language model with exact gradients
    objective   preference loss, analytic gradient, seeded trainer
    gradcheck   finite-difference gradient validation
    evaluation  length/repetition/ranking/judge/agreement metrics
    toytask     synthetic topic-separation corpus
    svgplot     deterministic SVG charts
    cli         the `iorpo` command
"""

from .objective import (
    DEFAULT_LAMBDA,
    EncodedExample,
    GradientFactors,
    LossBreakdown,
    TrainerConfig,
    TrainResult,
    breakdown_from_scores,
    gradient_factors,
    iorpo_grad,
    iorpo_loss,
    log1mexp,
    log_odds,
    seq_prob,
    sft_loss_grad,
    softplus,
    train,
)
from .tinylm import (
    PAD_ID,
    ModelParams,
    SequenceScore,
    Vocab,
    generate,
    init_params,
    load_model,
    make_scorer,
    save_model,
    seq_logprob,
    seq_logprob_grad,
)

__all__ = [
    "DEFAULT_LAMBDA",
    "EncodedExample",
    "GradientFactors",
    "LossBreakdown",
    "ModelParams",
    "PAD_ID",
    "SequenceScore",
    "TrainResult",
    "TrainerConfig",
    "Vocab",
    "breakdown_from_scores",
    "generate",
    "gradient_factors",
    "init_params",
    "iorpo_grad",
    "iorpo_loss",
    "load_model",
    "log1mexp",
    "log_odds",
    "make_scorer",
    "save_model",
    "seq_logprob",
    "seq_logprob_grad",
    "seq_prob",
    "sft_loss_grad",
    "softplus",
    "train",
]

__version__ = "0.1.0"
