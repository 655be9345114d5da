"""Finite-difference validation of every hand-written gradient.

Central differences with a configurable step are compared against the
analytic gradients of the sequence scorer, the SFT loss, and the preference
loss on randomized tiny instances.  The error measure is vector-level:

    max_i |a_i - f_i| / max(||a||_inf, ||f||_inf, 1e-12)

A deliberate ``fault="sign-flip"`` mode negates the analytic vector first,
serving as the negative control for the CLI's nonzero-exit path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import objective, tinylm

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-6


def fd_gradient(fn: Callable[[np.ndarray], float], theta: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a time."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros_like(theta)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = step
        out[i] = (fn(theta + bump) - fn(theta - bump)) / (2.0 * step)
    return out


def max_rel_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    if analytic.shape != fd.shape:
        raise ValueError("gradient shapes differ")
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(fd).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - fd).max(initial=0.0) / scale)


@dataclass(frozen=True)
class GradCheckReport:
    suite: str
    instance: int
    n_params: int
    rel_error: float
    tol: float
    block_errors: tuple[tuple[str, float], ...] = ()

    @property
    def passed(self) -> bool:
        return self.rel_error < self.tol


def _block_slices(m: tinylm.ModelParams) -> list[tuple[str, slice]]:
    sizes = [
        ("emb", m.emb.size),
        ("w1", m.w1.size),
        ("b1", m.b1.size),
        ("w2", m.w2.size),
        ("b2", m.b2.size),
    ]
    out, pos = [], 0
    for name, size in sizes:
        out.append((name, slice(pos, pos + size)))
        pos += size
    return out


def block_rel_errors(
    m: tinylm.ModelParams, analytic: np.ndarray, fd: np.ndarray
) -> tuple[tuple[str, float], ...]:
    """Relative error computed within each parameter tensor separately."""
    return tuple(
        (name, max_rel_error(analytic[sl], fd[sl])) for name, sl in _block_slices(m)
    )


def _random_ids(rng: np.random.Generator, vocab_size: int, lo: int, hi: int) -> tuple[int, ...]:
    n = int(rng.integers(lo, hi + 1))
    return tuple(int(v) for v in rng.integers(0, vocab_size, size=n))


def _random_model(rng: np.random.Generator) -> tinylm.ModelParams:
    return tinylm.init_params(
        vocab_size=int(rng.integers(5, 10)),
        context=int(rng.integers(2, 5)),
        embed_dim=int(rng.integers(3, 6)),
        hidden_dim=int(rng.integers(4, 7)),
        seed=int(rng.integers(0, 2**31)),
    )


def run_gradcheck(
    instances: int = 20,
    seed: int = 0,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
    fault: str | None = None,
    suites: Sequence[str] = ("lm_score", "sft", "iorpo"),
) -> list[GradCheckReport]:
    """Run the named finite-difference suites on `instances` random cases each.

    lm_score: gradient of the raw sum of target log-probs.
    sft:      gradient of the mean per-token NLL.
    iorpo:    gradient of the full preference loss (alternating the
              length-normalization switch across instances).
    """
    if fault not in (None, "sign-flip"):
        raise ValueError(f"unknown fault {fault!r}")
    flip = -1.0 if fault == "sign-flip" else 1.0
    rng = np.random.default_rng(seed)
    reports: list[GradCheckReport] = []

    for suite in suites:
        for i in range(instances):
            m = _random_model(rng)
            if suite == "lm_score":
                ctx = _random_ids(rng, m.vocab_size, 0, 5)
                tgt = _random_ids(rng, m.vocab_size, 1, 6)
                analytic = tinylm.seq_logprob_grad(m, ctx, tgt)

                def fn(vec, m=m, ctx=ctx, tgt=tgt):
                    return tinylm.seq_logprob(m.from_vector(vec), ctx, tgt).sum_logp

            else:
                enc = objective.EncodedExample(
                    x_w_ids=_random_ids(rng, m.vocab_size, 1, 5),
                    x_l_ids=_random_ids(rng, m.vocab_size, 1, 5),
                    y_ids=_random_ids(rng, m.vocab_size, 1, 6),
                )
                if suite == "sft":
                    _, analytic = objective.sft_loss_grad(m, enc)

                    def fn(vec, m=m, enc=enc):
                        return objective.sft_loss_grad(m.from_vector(vec), enc)[0]

                elif suite == "iorpo":
                    lam = float(rng.uniform(0.1, 1.0))
                    normalized = bool(i % 2 == 0)
                    _, analytic = objective.iorpo_grad(m, enc, lam=lam, normalized=normalized)

                    def fn(vec, m=m, enc=enc, lam=lam, normalized=normalized):
                        return objective.iorpo_loss(
                            m.from_vector(vec), enc, lam=lam, normalized=normalized
                        ).total

                else:
                    raise ValueError(f"unknown suite {suite!r}")

            fd = fd_gradient(fn, m.to_vector(), step=step)
            reports.append(
                GradCheckReport(
                    suite=suite,
                    instance=i,
                    n_params=m.n_params,
                    rel_error=max_rel_error(flip * analytic, fd),
                    tol=tol,
                    block_errors=block_rel_errors(m, flip * analytic, fd),
                )
            )
    return reports


def all_passed(reports: Sequence[GradCheckReport]) -> bool:
    return all(r.passed for r in reports)


def format_report(reports: Sequence[GradCheckReport]) -> str:
    """One line per suite plus the worst relative error per parameter block."""
    lines = []
    for suite in sorted({r.suite for r in reports}):
        rs = [r for r in reports if r.suite == suite]
        worst = max(r.rel_error for r in rs)
        status = "pass" if all(r.passed for r in rs) else "FAIL"
        lines.append(
            f"{status}  {suite}: {len(rs)} instances, "
            f"max rel error {worst:.3e} (tol {rs[0].tol:g})"
        )
        blocks: dict[str, float] = {}
        for r in rs:
            for name, err in r.block_errors:
                blocks[name] = max(blocks.get(name, 0.0), err)
        for name, err in blocks.items():
            lines.append(f"        {name}: {err:.3e}")
    return "\n".join(lines)
