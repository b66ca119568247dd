"""Command-line front end.

Subcommands: run (one manifest), batch (directory of manifests), bench
(stage timings), explore (candidate dump without scoring), info (version
and feature introspection). Every failure prints a one-object JSON error
with a stable code; exit codes: 0 ok, 1 error, 2 batch with failed rows.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import DomainError, EtselError
from .explorer import generate_search_space
from .harness import (
    bench_timing,
    run_batch,
    run_instance,
    run_sweep,
    write_instance_outputs,
)
from .tensor_store import MAGIC, VALID_METHODS, Budget, FrameTokenGrid


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=VALID_METHODS, default=None,
                   help="override the manifest's method")
    p.add_argument("--budget-frames", type=int, default=None, dest="frame_budget",
                   help="override the manifest's frame budget")
    p.add_argument("--space-size", type=int, default=None,
                   help="candidate count n (default: half the frame budget)")
    p.add_argument("--mode", choices=("proxy", "external"), default="proxy",
                   help="hidden-feature source for scoring")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etsel",
        description="Budget-constrained video-token selection engine",
    )
    parser.add_argument("--version", action="version", version=f"etsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one instance manifest")
    p_run.add_argument("manifest", type=Path)
    _add_common(p_run)
    p_run.add_argument("--out", type=Path, default=None,
                       help="directory for report.json / candidates.json / timing.json")

    p_batch = sub.add_parser("batch", help="run every manifest in a directory")
    p_batch.add_argument("manifest_dir", type=Path)
    _add_common(p_batch)
    p_batch.add_argument("--out", type=Path, required=True,
                         help="directory for summary.csv / summary.json / timings.csv")
    p_batch.add_argument("--sweep", action="store_true",
                         help="run at space sizes 1/4, 1/2 and 1x of the frame budget")
    p_batch.add_argument("--workers", type=int, default=None,
                         help="parallel instances (default: ETSEL_THREADS or cpu-based)")

    p_bench = sub.add_parser("bench", help="time the explore and select stages")
    p_bench.add_argument("manifest", type=Path)
    _add_common(p_bench)
    p_bench.add_argument("--repeats", type=int, default=10,
                         help="timed repetitions after one warmup (default 10)")
    p_bench.add_argument("--out", type=Path, default=None,
                         help="file for the timing table JSON")

    p_explore = sub.add_parser(
        "explore", help="dump the candidate search space for a frames tensor"
    )
    p_explore.add_argument("frames", type=Path, help="ETS1 frame-grid tensor")
    p_explore.add_argument("--budget-frames", type=int, required=True, dest="frame_budget")
    p_explore.add_argument("--space-size", type=int, default=None)
    p_explore.add_argument("--out", type=Path, default=None,
                           help="directory for candidates.json")

    sub.add_parser("info", help="print version and feature introspection JSON")
    return parser


def _cmd_run(args) -> int:
    report, candidates, instance = run_instance(
        args.manifest,
        method=args.method,
        frame_budget=args.frame_budget,
        space_size=args.space_size,
        mode=args.mode,
    )
    if args.out is not None:
        write_instance_outputs(args.out, report, candidates, instance)
    _print_json(report.to_dict(include_timing=False))
    return 0


def _cmd_batch(args) -> int:
    kwargs = dict(
        method=args.method,
        frame_budget=args.frame_budget,
        space_size=args.space_size,
        mode=args.mode,
        workers=args.workers,
    )
    if args.sweep:
        summaries = run_sweep(args.manifest_dir, args.out, **kwargs)
        _print_json({name: s.aggregate for name, s in summaries.items()})
        failed = any(s.n_errors for s in summaries.values())
    else:
        summary = run_batch(args.manifest_dir, out_dir=args.out, **kwargs)
        _print_json(summary.aggregate)
        failed = summary.n_errors > 0
    return 2 if failed else 0


def _cmd_bench(args) -> int:
    table = bench_timing(
        args.manifest,
        repeats=args.repeats,
        method=args.method,
        frame_budget=args.frame_budget,
        space_size=args.space_size,
        mode=args.mode,
    )
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    _print_json(table)
    return 0


def _cmd_explore(args) -> int:
    grid = FrameTokenGrid.load(args.frames)
    budget = Budget.from_frames(args.frame_budget, grid)
    n = args.space_size if args.space_size is not None else budget.default_space_size()
    if budget.tokens > grid.total_tokens:
        raise DomainError(
            f"token budget {budget.tokens} exceeds grid tokens {grid.total_tokens}; "
            "nothing to explore"
        )
    space = generate_search_space(grid, budget.tokens, n)
    dump = {
        "space_size": n,
        "grid": {"frames": grid.frames, "rows": grid.rows, "cols": grid.cols, "dim": grid.dim},
        "budget": {"frames": budget.frames, "tokens": budget.tokens},
        "candidates": [c.to_dict() for c in space.candidates],
        "skipped": [[ns, reason] for ns, reason in space.skipped],
    }
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "candidates.json").write_text(
            json.dumps(dump, indent=2, sort_keys=True) + "\n"
        )
        _print_json({"candidates": len(space.candidates), "skipped": len(space.skipped)})
    else:
        _print_json(dump)
    return 0


def _cmd_info(_args) -> int:
    _print_json(
        {
            "name": "etsel",
            "version": __version__,
            "tensor_format": {"magic": MAGIC.decode("ascii"), "dtype": "f32", "layout": "row-major"},
            "methods": list(VALID_METHODS),
            "modes": ["proxy", "external"],
            "commands": ["run", "batch", "bench", "explore", "info"],
        }
    )
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "batch": _cmd_batch,
    "bench": _cmd_bench,
    "explore": _cmd_explore,
    "info": _cmd_info,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except EtselError as exc:
        _print_json(exc.to_json())
        return 1
    except Exception as exc:  # never a bare crash: structured error, stable code
        _print_json({"error": {"code": "internal", "message": f"{type(exc).__name__}: {exc}"}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
