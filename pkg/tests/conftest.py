"""Shared synthetic-instance builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from etsel import FrameTokenGrid, save_tensor


def random_grid(rng, frames=8, rows=2, cols=2, dim=4, scale=1.0) -> FrameTokenGrid:
    data = rng.normal(size=(frames, rows, cols, dim)).astype(np.float32) * scale
    return FrameTokenGrid(data.astype(np.float32))


def write_instance(
    out_dir: Path,
    rng,
    name: str = "inst",
    grid: FrameTokenGrid | None = None,
    frames: int = 8,
    rows: int = 2,
    cols: int = 2,
    dim: int = 4,
    n_query: int = 3,
    n_instruction: int = 2,
    heads: int = 1,
    key_dim: int | None = None,
    frame_budget: int = 4,
    space_size: int | None = None,
    method: str = "ours",
    with_query_embedding: bool = True,
    extra: dict | None = None,
) -> Path:
    """Write a full synthetic instance (tensors + manifest) and return the manifest path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if grid is None:
        grid = random_grid(rng, frames, rows, cols, dim)
    d = grid.dim
    if key_dim is None:
        key_dim = d // heads if d % heads == 0 else d
    proj = heads * key_dim

    save_tensor(grid.data, out_dir / f"{name}_frames.ets")
    save_tensor(rng.normal(size=(n_query, d)), out_dir / f"{name}_hq.ets")
    save_tensor(rng.normal(size=(proj, d)), out_dir / f"{name}_wq.ets")
    save_tensor(rng.normal(size=(proj, d)), out_dir / f"{name}_wk.ets")

    manifest = {
        "frames": f"{name}_frames.ets",
        "query_hidden": f"{name}_hq.ets",
        "instruction_hidden": None,
        "wq": f"{name}_wq.ets",
        "wk": f"{name}_wk.ets",
        "heads": heads,
        "d_k": key_dim,
        "frame_budget": frame_budget,
        "space_size": space_size,
        "method": method,
        "query_embedding": None,
    }
    if n_instruction > 0:
        save_tensor(rng.normal(size=(n_instruction, d)), out_dir / f"{name}_hi.ets")
        manifest["instruction_hidden"] = f"{name}_hi.ets"
    if with_query_embedding:
        save_tensor(rng.normal(size=(d,)), out_dir / f"{name}_qe.ets")
        manifest["query_embedding"] = f"{name}_qe.ets"
    if extra:
        manifest.update(extra)

    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def write_corpus(out_dir: Path, count: int, seed: int, method: str = "ours") -> Path:
    """A directory of `count` varied instances, deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        frames = int(rng.integers(6, 20))
        rows = int(rng.integers(1, 3))
        cols = int(rng.integers(1, 3))
        dim = int(rng.integers(3, 9))
        budget = int(rng.integers(2, max(3, frames // 2 + 1)))
        write_instance(
            out_dir,
            rng,
            name=f"inst_{i:03d}",
            frames=frames,
            rows=rows,
            cols=cols,
            dim=dim,
            n_query=int(rng.integers(1, 4)),
            n_instruction=int(rng.integers(0, 3)),
            frame_budget=budget,
            method=method,
        )
    return out_dir


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
