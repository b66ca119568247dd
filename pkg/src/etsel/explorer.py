"""Exploration stage: build candidate token subsequences under a budget.

Key frames are placed uniformly (the first frame is always one) and keep
their full token grid; the frames between consecutive key frames form
intervals whose tokens compete for the remaining budget by cosine
dissimilarity against the co-located token of the interval's key frame.
Varying the key-frame count from 1 to n yields a search space of candidates
trading static detail against temporal change.

Everything here is a pure function of the grid; identical inputs produce
bit-identical candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError
from .tensor_store import FrameTokenGrid, TokenRef


@dataclass(frozen=True)
class IntervalSpec:
    """One key frame plus the run of delta frames that follows it."""

    index: int
    key_frame: int
    delta_frames: tuple[int, ...]

    @property
    def n_delta(self) -> int:
        return len(self.delta_frames)


@dataclass(frozen=True)
class CandidateSubsequence:
    """One explored allocation: key-frame set plus an ordered token list."""

    n_key_frames: int
    key_indices: tuple[int, ...]
    tokens: tuple[TokenRef, ...]
    key_token_count: int
    delta_token_count: int

    @property
    def token_count(self) -> int:
        return len(self.tokens)

    def flat_indices(self, rows: int, cols: int) -> np.ndarray:
        """Row-major flat index per token: (t-1)*rows*cols + (h-1)*cols + (w-1)."""
        refs = np.asarray(self.tokens, dtype=np.int64)
        return (refs[:, 0] - 1) * rows * cols + (refs[:, 1] - 1) * cols + (refs[:, 2] - 1)

    def to_dict(self) -> dict:
        return {
            "n_s": self.n_key_frames,
            "key_indices": list(self.key_indices),
            "key_tokens": self.key_token_count,
            "delta_tokens": self.delta_token_count,
            "tokens": [list(ref) for ref in self.tokens],
        }


@dataclass(frozen=True)
class SearchSpace:
    """Candidates ordered by key-frame count, plus the infeasible counts skipped."""

    candidates: tuple[CandidateSubsequence, ...]
    skipped: tuple[tuple[int, str], ...]


def key_frame_indices(total_frames: int, n_key: int) -> list[int]:
    """Uniformly spread key-frame indices; the first frame is always selected.

    Index k (0-based) lands on frame floor(k * total_frames / n_key) + 1.
    """
    if n_key < 1 or n_key > total_frames:
        raise DomainError(
            f"key-frame count must be in [1, {total_frames}], got {n_key}"
        )
    return [(k * total_frames) // n_key + 1 for k in range(n_key)]


def extract_key_tokens(grid: FrameTokenGrid, key_indices: list[int]) -> list[TokenRef]:
    """All tokens of the given frames, sorted by (t, h, w)."""
    refs = []
    for t in sorted(key_indices):
        if t < 1 or t > grid.frames:
            raise DomainError(f"key frame {t} outside grid with {grid.frames} frames")
        for h in range(1, grid.rows + 1):
            for w in range(1, grid.cols + 1):
                refs.append(TokenRef(t, h, w))
    return refs


def token_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine dissimilarity 1 - cos(a, b), clamped to [0, 2].

    A zero-norm vector is treated as equally dissimilar to everything
    (distance 1); bit-identical nonzero vectors give exactly 0.
    """
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise DomainError(f"vectors differ in length: {va.shape[0]} vs {vb.shape[0]}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 1.0
    if np.array_equal(va, vb):
        return 0.0
    cos = float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))
    return 1.0 - cos


def partition_intervals(total_frames: int, key_indices: list[int]) -> list[IntervalSpec]:
    """Split the frame range into one interval per key frame.

    Interval i owns the frames strictly between key i and key i+1 (the last
    interval extends to the final frame).
    """
    keys = sorted(key_indices)
    intervals = []
    for i, key in enumerate(keys):
        end = keys[i + 1] - 1 if i + 1 < len(keys) else total_frames
        deltas = tuple(range(key + 1, end + 1))
        intervals.append(IntervalSpec(index=i + 1, key_frame=key, delta_frames=deltas))
    return intervals


def delta_scores(grid: FrameTokenGrid, interval: IntervalSpec) -> np.ndarray:
    """Per-token change score against the interval's key frame.

    Returns an array of shape (n_delta, rows, cols) where entry
    (j-1, h-1, w-1) is the cosine dissimilarity between the token at
    (delta_frames[j-1], h, w) and the co-located key-frame token.
    """
    key = grid.data[interval.key_frame - 1].astype(np.float64)
    if interval.n_delta == 0:
        return np.zeros((0, grid.rows, grid.cols), dtype=np.float64)
    frame_ids = np.asarray(interval.delta_frames, dtype=np.int64) - 1
    frames = grid.data[frame_ids].astype(np.float64)

    dots = np.einsum("hwd,jhwd->jhw", key, frames)
    key_norm = np.linalg.norm(key, axis=-1)
    frame_norm = np.linalg.norm(frames, axis=-1)
    denom = key_norm[None, :, :] * frame_norm

    cos = np.zeros_like(dots)
    np.divide(dots, denom, out=cos, where=denom > 0.0)
    np.clip(cos, -1.0, 1.0, out=cos)
    scores = 1.0 - cos
    # Bit-identical nonzero tokens score exactly 0, mirroring token_distance.
    identical = np.all(frames == key[None, :, :, :], axis=-1) & (denom > 0.0)
    scores[identical] = 0.0
    return scores


def select_delta_tokens(
    scores: np.ndarray, interval: IntervalSpec, quota: int
) -> list[TokenRef]:
    """Top-`quota` tokens of the interval by score, descending.

    Ties break toward the earlier (frame, row, col). A quota above the
    interval's capacity is capped. The returned refs are sorted by (t, h, w).
    """
    if quota < 0:
        raise DomainError(f"quota must be >= 0, got {quota}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 3 or scores.shape[0] != interval.n_delta:
        raise DomainError(
            f"score map shape {scores.shape} does not cover the interval's "
            f"{interval.n_delta} delta frames"
        )
    flat = scores.ravel()
    take = min(quota, flat.size)
    if take == 0:
        return []
    order = np.argsort(-flat, kind="stable")[:take]
    picked = np.sort(order)
    j_idx, h_idx, w_idx = np.unravel_index(picked, scores.shape)
    return [
        TokenRef(interval.delta_frames[j], int(h) + 1, int(w) + 1)
        for j, h, w in zip(j_idx, h_idx, w_idx)
    ]


def allocate_quotas(
    token_budget: int, intervals: list[IntervalSpec], tokens_per_frame: int
) -> list[int]:
    """Split the non-key token budget uniformly across intervals.

    Each interval starts at floor(total/n) with the remainder granted one
    token each to the earliest intervals; an interval capped by its capacity
    hands the shortfall round-robin (in index order) to intervals with room.
    """
    n = len(intervals)
    if n == 0:
        raise DomainError("cannot allocate quotas over zero intervals")
    key_total = n * tokens_per_frame
    delta_total = token_budget - key_total
    if delta_total < 0:
        raise InfeasibleError(
            f"budget {token_budget} cannot cover {n} key frames of "
            f"{tokens_per_frame} tokens each"
        )
    base, rem = divmod(delta_total, n)
    quotas = [base + (1 if i < rem else 0) for i in range(n)]
    caps = [iv.n_delta * tokens_per_frame for iv in intervals]

    overflow = 0
    for i in range(n):
        if quotas[i] > caps[i]:
            overflow += quotas[i] - caps[i]
            quotas[i] = caps[i]
    while overflow > 0:
        granted = False
        for i in range(n):
            if overflow == 0:
                break
            if quotas[i] < caps[i]:
                quotas[i] += 1
                overflow -= 1
                granted = True
        if not granted:
            raise InfeasibleError(
                f"interval capacity {sum(caps)} below delta budget {delta_total}"
            )
    return quotas


def build_candidate(
    grid: FrameTokenGrid, n_key: int, token_budget: int
) -> CandidateSubsequence:
    """Assemble the candidate for one key-frame count.

    Key tokens and the per-interval top-change tokens are merged in original
    (t, h, w) order; the result holds exactly `token_budget` tokens.
    """
    if token_budget > grid.total_tokens:
        raise DomainError(
            f"token budget {token_budget} exceeds grid tokens {grid.total_tokens}"
        )
    key_idx = key_frame_indices(grid.frames, n_key)
    per_frame = grid.tokens_per_frame
    if n_key * per_frame > token_budget:
        raise InfeasibleError(
            f"{n_key} key frames need {n_key * per_frame} tokens, budget is {token_budget}"
        )
    key_refs = extract_key_tokens(grid, key_idx)
    intervals = partition_intervals(grid.frames, key_idx)
    quotas = allocate_quotas(token_budget, intervals, per_frame)

    delta_refs: list[TokenRef] = []
    for interval, quota in zip(intervals, quotas):
        if quota == 0:
            continue
        scores = delta_scores(grid, interval)
        delta_refs.extend(select_delta_tokens(scores, interval, quota))

    tokens = sorted(key_refs + delta_refs)
    return CandidateSubsequence(
        n_key_frames=n_key,
        key_indices=tuple(key_idx),
        tokens=tuple(tokens),
        key_token_count=len(key_refs),
        delta_token_count=len(delta_refs),
    )


def generate_search_space(
    grid: FrameTokenGrid, token_budget: int, n_candidates: int
) -> SearchSpace:
    """One candidate per feasible key-frame count in {1..n_candidates}.

    Counts whose key tokens alone exceed the budget, or that exceed the frame
    count, are skipped and reported. An empty space is an error.
    """
    if n_candidates < 1:
        raise DomainError(f"candidate count must be >= 1, got {n_candidates}")
    per_frame = grid.tokens_per_frame
    candidates = []
    skipped = []
    for n_key in range(1, n_candidates + 1):
        if n_key > grid.frames:
            skipped.append((n_key, "key-frame count exceeds frame count"))
            continue
        if n_key * per_frame > token_budget:
            skipped.append((n_key, "key tokens alone exceed the token budget"))
            continue
        candidates.append(build_candidate(grid, n_key, token_budget))
    if not candidates:
        raise InfeasibleError(
            f"no feasible key-frame count in 1..{n_candidates} for budget {token_budget}"
        )
    return SearchSpace(candidates=tuple(candidates), skipped=tuple(skipped))
