"""Comparison strategies sharing the explorer's candidate contract.

Each baseline emits exactly the budgeted number of tokens, sorted by
(t, h, w) with no duplicates, so the harness can A/B them against the
explore/select pipeline.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .explorer import CandidateSubsequence, extract_key_tokens, key_frame_indices
from .tensor_store import FrameTokenGrid, TokenRef


def original_uniform(grid: FrameTokenGrid, frame_budget: int) -> CandidateSubsequence:
    """Uniform frame sampling within the budget: full token grids, no deltas."""
    if frame_budget < 1 or frame_budget > grid.frames:
        raise DomainError(
            f"frame budget must be in [1, {grid.frames}], got {frame_budget}"
        )
    key_idx = key_frame_indices(grid.frames, frame_budget)
    refs = extract_key_tokens(grid, key_idx)
    return CandidateSubsequence(
        n_key_frames=frame_budget,
        key_indices=tuple(key_idx),
        tokens=tuple(refs),
        key_token_count=len(refs),
        delta_token_count=0,
    )


def retrieval_prune(
    grid: FrameTokenGrid, query_embedding: np.ndarray, frame_budget: int
) -> CandidateSubsequence:
    """Keep the frames most similar to the query embedding, in temporal order.

    Frame embeddings are the mean over each frame's token grid; similarity is
    cosine with zero-norm vectors scoring 0. Ties keep the earlier frame. The
    result is invariant under positive scaling of the query.
    """
    if frame_budget < 1 or frame_budget > grid.frames:
        raise DomainError(
            f"frame budget must be in [1, {grid.frames}], got {frame_budget}"
        )
    q = np.asarray(query_embedding, dtype=np.float64).ravel()
    if q.shape[0] != grid.dim:
        raise DomainError(
            f"query embedding length {q.shape[0]} does not match grid dim {grid.dim}"
        )
    frame_emb = grid.data.astype(np.float64).mean(axis=(1, 2))
    norms = np.linalg.norm(frame_emb, axis=1)
    qn = np.linalg.norm(q)
    sims = np.zeros(grid.frames, dtype=np.float64)
    if qn > 0.0:
        denom = norms * qn
        np.divide(frame_emb @ q, denom, out=sims, where=denom > 0.0)

    order = np.argsort(-sims, kind="stable")[:frame_budget]
    kept = sorted(int(i) + 1 for i in order)
    refs = extract_key_tokens(grid, kept)
    return CandidateSubsequence(
        n_key_frames=frame_budget,
        key_indices=tuple(kept),
        tokens=tuple(refs),
        key_token_count=len(refs),
        delta_token_count=0,
    )


def similarity_prune(grid: FrameTokenGrid, token_budget: int) -> CandidateSubsequence:
    """Drop the tokens most similar to their predecessor in the same position.

    Each token at (t, h, w) with t > 1 gets a redundancy score: cosine
    similarity to the token at (t-1, h, w). First-frame tokens score -inf so
    they are always retained. The highest-redundancy tokens are dropped until
    the budget is met; ties keep the earlier (t, h, w).
    """
    if token_budget < 1 or token_budget > grid.total_tokens:
        raise DomainError(
            f"token budget must be in [1, {grid.total_tokens}], got {token_budget}"
        )
    data = grid.data.astype(np.float64)
    redundancy = np.full((grid.frames, grid.rows, grid.cols), -np.inf)
    if grid.frames > 1:
        cur = data[1:]
        prev = data[:-1]
        dots = np.einsum("thwd,thwd->thw", cur, prev)
        denom = np.linalg.norm(cur, axis=-1) * np.linalg.norm(prev, axis=-1)
        sims = np.zeros_like(dots)
        np.divide(dots, denom, out=sims, where=denom > 0.0)
        np.clip(sims, -1.0, 1.0, out=sims)
        redundancy[1:] = sims

    # Keep the lowest-redundancy tokens; stable sort on the (t, h, w)-ordered
    # ravel makes ties keep the earliest token.
    flat = redundancy.ravel()
    keep = np.sort(np.argsort(flat, kind="stable")[:token_budget])
    t_idx, h_idx, w_idx = np.unravel_index(keep, redundancy.shape)
    refs = [TokenRef(int(t) + 1, int(h) + 1, int(w) + 1) for t, h, w in zip(t_idx, h_idx, w_idx)]

    per_frame = grid.tokens_per_frame
    frame_counts = np.bincount(t_idx, minlength=grid.frames)
    full_frames = tuple(int(t) + 1 for t in np.nonzero(frame_counts == per_frame)[0])
    key_count = len(full_frames) * per_frame
    return CandidateSubsequence(
        n_key_frames=len(full_frames),
        key_indices=full_frames,
        tokens=tuple(refs),
        key_token_count=key_count,
        delta_token_count=token_budget - key_count,
    )
