"""Instance runner, batch experiment driver and timing bench.

Outputs are a pure function of (manifest bytes, flags): report and summary
files are byte-identical across reruns. Wall-clock timings are therefore
segregated into their own files (timing.json per instance, timings.csv per
batch) which are excluded from determinism diffs.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import original_uniform, retrieval_prune, similarity_prune
from .errors import DomainError, EtselError, SchemaError
from .explorer import CandidateSubsequence, extract_key_tokens
from .selector import CandidateScoreRow, ScoreReport, run_selection
from .tensor_store import (
    VALID_METHODS,
    Instance,
    InstanceManifest,
    load_instance,
    load_tensor,
    parse_manifest,
)

THREADS_ENV = "ETSEL_THREADS"

# Fixed column order for batch CSV output; floats use 6 significant digits.
SUMMARY_COLUMNS = (
    "instance",
    "method",
    "status",
    "error_code",
    "pass_through",
    "selected",
    "n_key_frames",
    "key_tokens",
    "delta_tokens",
    "key_delta_ratio",
    "score",
)
TIMING_COLUMNS = ("instance", "explore_ms", "select_ms")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _ratio(key_tokens: int, delta_tokens: int) -> str:
    if key_tokens == 0 and delta_tokens == 0:
        return "0:0"
    g = math.gcd(key_tokens, delta_tokens)
    return f"{key_tokens // g}:{delta_tokens // g}"


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def worker_count() -> int:
    """Parallelism cap: ETSEL_THREADS if set, else min(8, cpu count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise DomainError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _identity_candidate(instance: Instance) -> CandidateSubsequence:
    grid = instance.grid
    all_frames = list(range(1, grid.frames + 1))
    refs = extract_key_tokens(grid, all_frames)
    return CandidateSubsequence(
        n_key_frames=grid.frames,
        key_indices=tuple(all_frames),
        tokens=tuple(refs),
        key_token_count=len(refs),
        delta_token_count=0,
    )


def _baseline_report(
    method: str, candidate: CandidateSubsequence, build_ms: float, instance: Instance
) -> ScoreReport:
    row = CandidateScoreRow(
        n_key_frames=candidate.n_key_frames,
        key_token_count=candidate.key_token_count,
        delta_token_count=candidate.delta_token_count,
        score=None,
    )
    return ScoreReport(
        method=method,
        scores=(),
        selected=1,
        candidates=(row,),
        timing_ms={"explore": build_ms, "select": 0.0},
        pass_through=instance.pass_through,
        warnings=instance.warnings,
    )


def feasible_candidate_count(instance: Instance) -> int:
    """How many key-frame counts in {1..space_size} the budget and grid allow."""
    grid, budget = instance.grid, instance.budget
    by_budget = budget.tokens // grid.tokens_per_frame
    return max(0, min(instance.space_size, grid.frames, by_budget))


def _load_external_hidden(instance: Instance) -> list[np.ndarray]:
    if instance.visual_hidden_dir is None:
        raise SchemaError("external mode requires the manifest key 'visual_hidden'")
    count = feasible_candidate_count(instance)
    mats = []
    for m in range(1, count + 1):
        path = instance.visual_hidden_dir / f"hv_{m:03d}.ets"
        if not path.exists():
            raise SchemaError(f"external mode: missing hidden tensor {path}")
        mats.append(load_tensor(path))
    return mats


def dispatch_instance(
    instance: Instance, mode: str = "proxy"
) -> tuple[ScoreReport, list[CandidateSubsequence]]:
    """Run the instance's method, returning the report and its candidates."""
    if instance.pass_through:
        cand = _identity_candidate(instance)
        report = _baseline_report(instance.method, cand, 0.0, instance)
        return report, [cand]

    grid, budget = instance.grid, instance.budget
    if instance.method == "ours":
        hidden = None
        if mode == "external":
            hidden = _load_external_hidden(instance)
        report, space = run_selection(
            grid,
            instance.context,
            budget,
            n_candidates=instance.space_size,
            mode=mode,
            candidate_hidden=hidden,
        )
        if instance.warnings:
            report = replace(report, warnings=instance.warnings)
        return report, list(space.candidates)

    t0 = time.perf_counter()
    if instance.method == "original":
        cand = original_uniform(grid, budget.frames)
    elif instance.method == "retrieval":
        if instance.query_embedding is None:
            raise SchemaError("retrieval method requires the manifest key 'query_embedding'")
        cand = retrieval_prune(grid, instance.query_embedding, budget.frames)
    elif instance.method == "similarity":
        cand = similarity_prune(grid, budget.tokens)
    else:
        raise SchemaError(f"unknown method '{instance.method}'")
    build_ms = (time.perf_counter() - t0) * 1e3
    return _baseline_report(instance.method, cand, build_ms, instance), [cand]


def _apply_overrides(
    manifest: InstanceManifest,
    method: Optional[str],
    frame_budget: Optional[int],
    space_size: Optional[int],
    space_frac: Optional[tuple[int, int]] = None,
) -> InstanceManifest:
    if method is not None:
        if method not in VALID_METHODS:
            raise SchemaError(f"unknown method '{method}' (expected one of {VALID_METHODS})")
        manifest = replace(manifest, method=method)
    if frame_budget is not None:
        if frame_budget < 1:
            raise DomainError(f"frame budget must be >= 1, got {frame_budget}")
        # Explicit budget override invalidates a stale default space size.
        manifest = replace(manifest, frame_budget=frame_budget)
    if space_size is not None:
        if space_size < 1:
            raise DomainError(f"space size must be >= 1, got {space_size}")
        manifest = replace(manifest, space_size=space_size)
    elif space_frac is not None:
        num, den = space_frac
        manifest = replace(manifest, space_size=max(1, manifest.frame_budget * num // den))
    return manifest


def run_instance(
    manifest_path: str | Path,
    method: Optional[str] = None,
    frame_budget: Optional[int] = None,
    space_size: Optional[int] = None,
    mode: str = "proxy",
    space_frac: Optional[tuple[int, int]] = None,
) -> tuple[ScoreReport, list[CandidateSubsequence], Instance]:
    """Load a manifest (with optional overrides) and run its method."""
    manifest = parse_manifest(manifest_path)
    manifest = _apply_overrides(manifest, method, frame_budget, space_size, space_frac)
    instance = load_instance(manifest)
    report, candidates = dispatch_instance(instance, mode=mode)
    return report, candidates, instance


def write_instance_outputs(
    out_dir: str | Path,
    report: ScoreReport,
    candidates: list[CandidateSubsequence],
    instance: Instance,
) -> None:
    """Write report.json / candidates.json / timing.json under out_dir.

    timing.json carries the wall-clock stage times; report.json stays
    timing-free so reruns are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid, budget = instance.grid, instance.budget
    report_obj = report.to_dict(include_timing=False)
    report_obj["grid"] = {
        "frames": grid.frames,
        "rows": grid.rows,
        "cols": grid.cols,
        "dim": grid.dim,
    }
    report_obj["budget"] = {"frames": budget.frames, "tokens": budget.tokens}
    _dump_json(report_obj, out / "report.json")
    _dump_json(
        {
            "space_size": instance.space_size,
            "candidates": [c.to_dict() for c in candidates],
        },
        out / "candidates.json",
    )
    _dump_json({"timing_ms": dict(report.timing_ms)}, out / "timing.json")


@dataclass(frozen=True)
class BatchRow:
    instance: str
    method: str
    status: str
    error_code: Optional[str] = None
    pass_through: bool = False
    selected: Optional[int] = None
    n_key_frames: Optional[int] = None
    key_tokens: Optional[int] = None
    delta_tokens: Optional[int] = None
    key_delta_ratio: Optional[str] = None
    score: Optional[float] = None
    explore_ms: float = 0.0
    select_ms: float = 0.0

    def summary_values(self) -> list[str]:
        vals = [
            self.instance,
            self.method,
            self.status,
            self.error_code,
            self.pass_through,
            self.selected,
            self.n_key_frames,
            self.key_tokens,
            self.delta_tokens,
            self.key_delta_ratio,
            self.score,
        ]
        return [_fmt(v) for v in vals]

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "method": self.method,
            "status": self.status,
            "error_code": self.error_code,
            "pass_through": self.pass_through,
            "selected": self.selected,
            "n_key_frames": self.n_key_frames,
            "key_tokens": self.key_tokens,
            "delta_tokens": self.delta_tokens,
            "key_delta_ratio": self.key_delta_ratio,
            "score": self.score,
        }


@dataclass(frozen=True)
class BatchSummary:
    rows: tuple[BatchRow, ...]
    aggregate: dict

    @property
    def n_errors(self) -> int:
        return sum(1 for r in self.rows if r.status == "error")


def _row_for(manifest_path: Path, **overrides) -> BatchRow:
    instance_id = manifest_path.stem
    try:
        report, _, _ = run_instance(manifest_path, **overrides)
    except EtselError as exc:
        return BatchRow(
            instance=instance_id,
            method=overrides.get("method") or "?",
            status="error",
            error_code=exc.code,
        )
    chosen = report.candidates[report.selected - 1]
    return BatchRow(
        instance=instance_id,
        method=report.method,
        status="ok",
        pass_through=report.pass_through,
        selected=report.selected,
        n_key_frames=chosen.n_key_frames,
        key_tokens=chosen.key_token_count,
        delta_tokens=chosen.delta_token_count,
        key_delta_ratio=_ratio(chosen.key_token_count, chosen.delta_token_count),
        score=chosen.score,
        explore_ms=report.timing_ms.get("explore", 0.0),
        select_ms=report.timing_ms.get("select", 0.0),
    )


def _aggregate(rows: tuple[BatchRow, ...]) -> dict:
    ok = [r for r in rows if r.status == "ok"]
    agg = {
        "instances": len(rows),
        "ok": len(ok),
        "errors": len(rows) - len(ok),
    }
    selected = [r.selected for r in ok if r.selected is not None]
    agg["mean_selected"] = float(np.mean(selected)) if selected else None
    fractions = [
        r.key_tokens / (r.key_tokens + r.delta_tokens)
        for r in ok
        if r.key_tokens is not None and (r.key_tokens + r.delta_tokens) > 0
    ]
    agg["mean_key_fraction"] = float(np.mean(fractions)) if fractions else None
    scores = [r.score for r in ok if r.score is not None]
    if scores:
        arr = np.asarray(scores, dtype=np.float64)
        agg["score"] = {
            "mean": float(arr.mean()),
            "p50": float(np.percentile(arr, 50)),
            "p90": float(np.percentile(arr, 90)),
        }
    else:
        agg["score"] = None
    return agg


def run_batch(
    manifest_dir: str | Path,
    out_dir: Optional[str | Path] = None,
    method: Optional[str] = None,
    frame_budget: Optional[int] = None,
    space_size: Optional[int] = None,
    mode: str = "proxy",
    space_frac: Optional[tuple[int, int]] = None,
    workers: Optional[int] = None,
) -> BatchSummary:
    """Run every manifest in a directory; per-instance failures become rows.

    Instances may execute in parallel (capped by ETSEL_THREADS); rows are
    always emitted in instance-id order, so output bytes are independent of
    the schedule.
    """
    manifest_dir = Path(manifest_dir)
    manifests = sorted(manifest_dir.glob("*.json"), key=lambda p: p.stem)
    if not manifests:
        raise DomainError(f"no manifest files (*.json) in {manifest_dir}")
    n_workers = workers if workers is not None else worker_count()
    overrides = dict(
        method=method,
        frame_budget=frame_budget,
        space_size=space_size,
        mode=mode,
        space_frac=space_frac,
    )
    if n_workers == 1 or len(manifests) == 1:
        rows = [_row_for(p, **overrides) for p in manifests]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(lambda p: _row_for(p, **overrides), manifests))
    rows = tuple(sorted(rows, key=lambda r: r.instance))
    summary = BatchSummary(rows=rows, aggregate=_aggregate(rows))
    if out_dir is not None:
        write_batch_outputs(out_dir, summary)
    return summary


def write_batch_outputs(out_dir: str | Path, summary: BatchSummary) -> None:
    """summary.csv + summary.json (deterministic) and timings.csv (excluded)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [",".join(SUMMARY_COLUMNS)]
    lines += [",".join(row.summary_values()) for row in summary.rows]
    (out / "summary.csv").write_text("\n".join(lines) + "\n")

    _dump_json(
        {"rows": [r.to_dict() for r in summary.rows], "aggregate": summary.aggregate},
        out / "summary.json",
    )

    tlines = [",".join(TIMING_COLUMNS)]
    tlines += [
        ",".join([r.instance, _fmt(r.explore_ms), _fmt(r.select_ms)])
        for r in summary.rows
    ]
    (out / "timings.csv").write_text("\n".join(tlines) + "\n")


SWEEP_FRACTIONS = (("quarter", (1, 4)), ("half", (1, 2)), ("full", (1, 1)))


def run_sweep(
    manifest_dir: str | Path,
    out_dir: str | Path,
    **kwargs,
) -> dict[str, BatchSummary]:
    """Batch run at space sizes of a quarter, half and all of the frame budget."""
    if kwargs.get("space_size") is not None:
        raise DomainError("--space-size and --sweep are mutually exclusive")
    results = {}
    for name, frac in SWEEP_FRACTIONS:
        results[name] = run_batch(
            manifest_dir,
            out_dir=Path(out_dir) / f"space_{name}",
            space_frac=frac,
            **kwargs,
        )
    return results


def bench_timing(
    manifest_path: str | Path,
    repeats: int = 10,
    method: Optional[str] = None,
    frame_budget: Optional[int] = None,
    space_size: Optional[int] = None,
    mode: str = "proxy",
) -> dict:
    """Mean/stddev wall time per stage over `repeats` runs (one warmup first).

    Candidate generation ("explore") and scoring ("select") are timed
    separately; tensor loading is excluded.
    """
    if repeats < 1:
        raise DomainError(f"repeats must be >= 1, got {repeats}")
    manifest = parse_manifest(manifest_path)
    manifest = _apply_overrides(manifest, method, frame_budget, space_size)
    instance = load_instance(manifest)

    dispatch_instance(instance, mode=mode)  # warmup
    runs = []
    for _ in range(repeats):
        report, _ = dispatch_instance(instance, mode=mode)
        runs.append(
            {
                "explore_ms": report.timing_ms.get("explore", 0.0),
                "select_ms": report.timing_ms.get("select", 0.0),
            }
        )
    table = {"repeats": repeats, "stages": {}, "runs": runs}
    for stage in ("explore_ms", "select_ms"):
        vals = np.asarray([r[stage] for r in runs], dtype=np.float64)
        table["stages"][stage] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=0)),
        }
    return table
