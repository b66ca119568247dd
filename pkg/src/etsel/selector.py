"""Selection stage: score each candidate by query attention, keep the best.

For every candidate the scorer projects query rows and (instruction +
visual) rows through the supplied Q/K weights, takes row-softmax of the
scaled dot products, averages the attention maps over heads, reduces each
visual column to its maximum over the query rows, and sums those maxima.
The candidate with the highest sum wins; ties go to the smallest index.

Scoring cost depends only on (candidate count, query length, token budget,
hidden dim, key dim, heads) -- never on the original frame count. All math
runs at 64-bit with max-subtracted softmax, so reports are bit-identical
across runs and thread schedules.

In the default proxy mode the candidate's raw embeddings stand in for its
hidden features; external mode instead ingests per-candidate hidden-state
matrices exported from a real model's shallow layer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .explorer import CandidateSubsequence, SearchSpace, generate_search_space
from .tensor_store import AttentionContext, Budget, FrameTokenGrid


@dataclass(frozen=True)
class CandidateHidden:
    """Hidden-feature rows for one candidate, ordered as its token list."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"hidden rows must be rank 2, got rank {arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValidationError("hidden rows contain NaN or Inf")
        object.__setattr__(self, "rows", arr)

    @property
    def n_tokens(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class CandidateScoreRow:
    n_key_frames: int
    key_token_count: int
    delta_token_count: int
    score: Optional[float]

    def to_dict(self) -> dict:
        return {
            "n_s": self.n_key_frames,
            "key_tokens": self.key_token_count,
            "delta_tokens": self.delta_token_count,
            "score": self.score,
        }


@dataclass(frozen=True)
class ScoreReport:
    """Per-candidate scores, the chosen index (1-based) and stage timings."""

    method: str
    scores: tuple[float, ...]
    selected: int
    candidates: tuple[CandidateScoreRow, ...]
    timing_ms: dict
    skipped: tuple[tuple[int, str], ...] = field(default_factory=tuple)
    pass_through: bool = False
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "method": self.method,
            "scores": list(self.scores),
            "selected": self.selected,
            "candidates": [row.to_dict() for row in self.candidates],
            "skipped": [[n, reason] for n, reason in self.skipped],
            "pass_through": self.pass_through,
            "warnings": list(self.warnings),
        }
        if include_timing:
            out["timing_ms"] = dict(self.timing_ms)
        return out


def proxy_hidden(candidate: CandidateSubsequence, grid: FrameTokenGrid) -> CandidateHidden:
    """Gather the candidate's raw embeddings as stand-in hidden features."""
    refs = np.asarray(candidate.tokens, dtype=np.int64)
    rows = grid.data[refs[:, 0] - 1, refs[:, 1] - 1, refs[:, 2] - 1]
    return CandidateHidden(rows.astype(np.float64))


def _split_heads(mat: np.ndarray, heads: int, key_dim: int) -> np.ndarray:
    # (rows, heads*key_dim) -> (heads, rows, key_dim)
    return mat.reshape(mat.shape[0], heads, key_dim).transpose(1, 0, 2)


def project_qk(
    ctx: AttentionContext, visual_hidden: CandidateHidden
) -> tuple[np.ndarray, np.ndarray]:
    """Project queries and (instruction, visual) keys into per-head slices.

    Returns Q of shape (heads, n_query, key_dim) and K of shape
    (heads, n_instruction + n_visual, key_dim); key rows keep
    instruction-first order.
    """
    hv = visual_hidden.rows
    if hv.shape[1] != ctx.wk.shape[1]:
        raise DomainError(
            f"visual hidden dim {hv.shape[1]} does not match wk input dim {ctx.wk.shape[1]}"
        )
    q2 = ctx.query @ ctx.wq.T
    if ctx.instruction is not None:
        keys_in = np.concatenate([ctx.instruction, hv], axis=0)
    else:
        keys_in = hv
    k2 = keys_in @ ctx.wk.T
    return (
        _split_heads(q2, ctx.heads, ctx.key_dim),
        _split_heads(k2, ctx.heads, ctx.key_dim),
    )


def attention_scores(q: np.ndarray, k: np.ndarray, key_dim: int) -> np.ndarray:
    """Row-softmax of scaled dot products, per head.

    Shape (heads, n_query, n_keys); every row sums to 1. Computed at 64-bit
    with max subtraction for overflow safety and cross-platform determinism.
    """
    logits = (q @ k.transpose(0, 2, 1)) / np.sqrt(float(key_dim))
    logits -= logits.max(axis=-1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=-1, keepdims=True)
    return logits


def visual_token_scores(scores: np.ndarray, n_instruction: int, n_visual: int) -> np.ndarray:
    """Head-averaged attention maxed over the query rows, visual columns only.

    Instruction columns shape the softmax denominators but are excluded here;
    each returned entry lies in (0, 1].
    """
    if scores.shape[-1] != n_instruction + n_visual:
        raise DomainError(
            f"score matrix has {scores.shape[-1]} key columns, expected "
            f"{n_instruction} instruction + {n_visual} visual"
        )
    head_mean = scores.mean(axis=0)
    return head_mean[:, n_instruction:].max(axis=0)


def candidate_score(visual_scores: np.ndarray) -> float:
    """Sum of the per-visual-token scores; lies in [0, n_visual]."""
    return float(np.asarray(visual_scores, dtype=np.float64).sum())


def select_best(scores: Sequence[float]) -> int:
    """1-based index of the maximum score; ties break to the smallest index."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise DomainError("cannot select from an empty score list")
    if not np.isfinite(arr).all():
        raise ValidationError("scores contain NaN or Inf")
    return int(np.argmax(arr)) + 1


def score_candidate(
    ctx: AttentionContext, hidden: CandidateHidden
) -> float:
    """Full scoring chain for one candidate's hidden rows."""
    q, k = project_qk(ctx, hidden)
    att = attention_scores(q, k, ctx.key_dim)
    vis = visual_token_scores(att, ctx.n_instruction, hidden.n_tokens)
    return candidate_score(vis)


def run_selection(
    grid: FrameTokenGrid,
    ctx: AttentionContext,
    budget: Budget,
    n_candidates: Optional[int] = None,
    mode: str = "proxy",
    candidate_hidden: Optional[Sequence[np.ndarray]] = None,
) -> tuple[ScoreReport, SearchSpace]:
    """Explore the search space, score every candidate, pick the winner.

    `mode` is "proxy" (raw embeddings as hidden features) or "external"
    (caller supplies one hidden matrix per generated candidate, in candidate
    order). Returns the report plus the search space it scored.
    """
    if mode not in ("proxy", "external"):
        raise DomainError(f"unknown scoring mode '{mode}'")
    n = n_candidates if n_candidates is not None else budget.default_space_size()

    t0 = time.perf_counter()
    space = generate_search_space(grid, budget.tokens, n)
    t1 = time.perf_counter()

    if mode == "external":
        if candidate_hidden is None or len(candidate_hidden) != len(space.candidates):
            got = 0 if candidate_hidden is None else len(candidate_hidden)
            raise DomainError(
                f"external mode needs one hidden matrix per candidate: got {got}, "
                f"expected {len(space.candidates)}"
            )

    scores = []
    rows = []
    for m, cand in enumerate(space.candidates):
        if mode == "proxy":
            hidden = proxy_hidden(cand, grid)
        else:
            hidden = CandidateHidden(np.asarray(candidate_hidden[m], dtype=np.float64))
            if hidden.n_tokens != cand.token_count:
                raise ValidationError(
                    f"candidate {m + 1} hidden matrix has {hidden.n_tokens} rows, "
                    f"expected {cand.token_count}"
                )
        score = score_candidate(ctx, hidden)
        if not (0.0 <= score <= cand.token_count + 1e-9):
            raise ValidationError(
                f"candidate {m + 1} score {score} outside [0, {cand.token_count}]"
            )
        scores.append(score)
        rows.append(
            CandidateScoreRow(
                n_key_frames=cand.n_key_frames,
                key_token_count=cand.key_token_count,
                delta_token_count=cand.delta_token_count,
                score=score,
            )
        )
    t2 = time.perf_counter()

    report = ScoreReport(
        method="ours",
        scores=tuple(scores),
        selected=select_best(scores),
        candidates=tuple(rows),
        timing_ms={"explore": (t1 - t0) * 1e3, "select": (t2 - t1) * 1e3},
        skipped=space.skipped,
    )
    return report, space
