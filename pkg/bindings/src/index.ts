/**
 * Scripting-side entry points for the etsel engine.
 *
 * Grids and scorer inputs come in as BoundArrayViews (zero-copy over the
 * caller's buffers), go over the wire as ETS1 tensor files plus a manifest,
 * and come back as parsed reports with token refs flattened into gather
 * indices. No state is retained between calls.
 */

import { mkdtempSync, readFileSync, rmSync, mkdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { EngineError, InvalidInputError } from "./errors.js";
import { writeTensor } from "./ets1.js";
import { EngineOptions, runEngine } from "./runner.js";
import { BoundArrayView, requireRank } from "./view.js";

export { EngineError, InvalidInputError } from "./errors.js";
export { readTensor, writeTensor } from "./ets1.js";
export { engineCommand, engineInfo, runEngine } from "./runner.js";
export type { EngineInfo, EngineOptions } from "./runner.js";
export { BoundArrayView, requireRank, shapeElements } from "./view.js";
export type { FromBytesOptions, Shape } from "./view.js";

export const BINDINGS_VERSION = "0.1.0";

export type Method = "ours" | "original" | "retrieval" | "similarity";
export type ScoringMode = "proxy" | "external";

export interface SelectionRequest {
  /** Encoded video grid, rank 4: (frames, rows, cols, dim). */
  frames: BoundArrayView;
  /** Query hidden rows, rank 2: (n_query, hidden). */
  queryHidden: BoundArrayView;
  /** Optional instruction hidden rows, rank 2. */
  instructionHidden?: BoundArrayView | null;
  /** Q/K projection weights, rank 2: (heads*dK, hidden). */
  wq: BoundArrayView;
  wk: BoundArrayView;
  heads: number;
  dK: number;
  frameBudget: number;
  /** Candidate count; engine default is half the frame budget. */
  spaceSize?: number | null;
  method?: Method;
  mode?: ScoringMode;
  /** External mode: one hidden matrix per generated candidate, in order. */
  visualHidden?: BoundArrayView[];
  /** Retrieval baseline input, rank 1: (dim). */
  queryEmbedding?: BoundArrayView | null;
}

export interface CandidateResult {
  nKeyFrames: number;
  keyIndices: number[];
  keyTokens: number;
  deltaTokens: number;
  score: number | null;
  /** Row-major gather indices into the flattened (t, h, w) token sequence. */
  tokenRefs: Int32Array;
}

export interface SelectionResult {
  method: string;
  scores: number[];
  /** 1-based index of the winning candidate. */
  selected: number;
  candidates: CandidateResult[];
  /** Gather indices of the winning candidate. */
  selectedTokenRefs: Int32Array;
  skipped: [number, string][];
  passThrough: boolean;
  warnings: string[];
  timingMs: { explore: number; select: number };
  grid: { frames: number; rows: number; cols: number; dim: number };
  budget: { frames: number; tokens: number };
}

interface ReportJson {
  method: string;
  scores: number[];
  selected: number;
  candidates: { n_s: number; key_tokens: number; delta_tokens: number; score: number | null }[];
  skipped: [number, string][];
  pass_through: boolean;
  warnings: string[];
  grid: { frames: number; rows: number; cols: number; dim: number };
  budget: { frames: number; tokens: number };
}

interface CandidatesJson {
  space_size: number;
  candidates: {
    n_s: number;
    key_indices: number[];
    key_tokens: number;
    delta_tokens: number;
    tokens: [number, number, number][];
  }[];
}

export function flattenTokenRefs(
  tokens: [number, number, number][],
  rows: number,
  cols: number,
): Int32Array {
  const out = new Int32Array(tokens.length);
  tokens.forEach(([t, h, w], i) => {
    out[i] = (t - 1) * rows * cols + (h - 1) * cols + (w - 1);
  });
  return out;
}

function readJson<T>(path: string): T {
  return JSON.parse(readFileSync(path, "utf8")) as T;
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "etsel-bind-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function checkPositiveInt(value: number, name: string): void {
  if (!Number.isInteger(value) || value < 1) {
    throw new InvalidInputError(`${name} must be a positive integer, got ${value}`);
  }
}

function writeManifest(dir: string, req: SelectionRequest): string {
  requireRank(req.frames, 4, "frames grid");
  requireRank(req.queryHidden, 2, "query hidden");
  requireRank(req.wq, 2, "wq");
  requireRank(req.wk, 2, "wk");
  checkPositiveInt(req.heads, "heads");
  checkPositiveInt(req.dK, "dK");
  checkPositiveInt(req.frameBudget, "frameBudget");
  if (req.spaceSize != null) checkPositiveInt(req.spaceSize, "spaceSize");

  writeTensor(join(dir, "frames.ets"), req.frames);
  writeTensor(join(dir, "hq.ets"), req.queryHidden);
  writeTensor(join(dir, "wq.ets"), req.wq);
  writeTensor(join(dir, "wk.ets"), req.wk);

  const manifest: Record<string, unknown> = {
    frames: "frames.ets",
    query_hidden: "hq.ets",
    instruction_hidden: null,
    wq: "wq.ets",
    wk: "wk.ets",
    heads: req.heads,
    d_k: req.dK,
    frame_budget: req.frameBudget,
    space_size: req.spaceSize ?? null,
    method: req.method ?? "ours",
    query_embedding: null,
  };
  if (req.instructionHidden) {
    requireRank(req.instructionHidden, 2, "instruction hidden");
    writeTensor(join(dir, "hi.ets"), req.instructionHidden);
    manifest.instruction_hidden = "hi.ets";
  }
  if (req.queryEmbedding) {
    requireRank(req.queryEmbedding, 1, "query embedding");
    writeTensor(join(dir, "qe.ets"), req.queryEmbedding);
    manifest.query_embedding = "qe.ets";
  }
  if (req.visualHidden && req.visualHidden.length > 0) {
    const hvDir = join(dir, "hv");
    mkdirSync(hvDir);
    req.visualHidden.forEach((view, i) => {
      requireRank(view, 2, `visual hidden ${i + 1}`);
      writeTensor(join(hvDir, `hv_${String(i + 1).padStart(3, "0")}.ets`), view);
    });
    manifest.visual_hidden = "hv";
  }
  const path = join(dir, "manifest.json");
  writeFileSync(path, JSON.stringify(manifest, null, 2));
  return path;
}

/**
 * Run the full explore/select pipeline on in-memory arrays.
 *
 * Structurally identical to the CLI's report output; token refs come back as
 * gather index arrays usable directly in the host pipeline.
 */
export function bindRunSelection(
  req: SelectionRequest,
  options: EngineOptions = {},
): SelectionResult {
  return withTempDir((dir) => {
    const manifestPath = writeManifest(dir, req);
    const outDir = join(dir, "out");
    const args = ["run", manifestPath, "--out", outDir];
    if (req.mode) args.push("--mode", req.mode);
    runEngine(args, options);

    const report = readJson<ReportJson>(join(outDir, "report.json"));
    const dump = readJson<CandidatesJson>(join(outDir, "candidates.json"));
    const timing = readJson<{ timing_ms: { explore: number; select: number } }>(
      join(outDir, "timing.json"),
    );
    const { rows, cols } = report.grid;
    if (dump.candidates.length !== report.candidates.length) {
      throw new EngineError(
        "engine_failed",
        `report lists ${report.candidates.length} candidates, dump has ${dump.candidates.length}`,
      );
    }
    const candidates: CandidateResult[] = dump.candidates.map((cand, i) => ({
      nKeyFrames: cand.n_s,
      keyIndices: cand.key_indices,
      keyTokens: cand.key_tokens,
      deltaTokens: cand.delta_tokens,
      score: report.candidates[i]?.score ?? null,
      tokenRefs: flattenTokenRefs(cand.tokens, rows, cols),
    }));
    const chosen = candidates[report.selected - 1];
    if (!chosen) {
      throw new EngineError("engine_failed", `selected index ${report.selected} out of range`);
    }
    return {
      method: report.method,
      scores: report.scores,
      selected: report.selected,
      candidates,
      selectedTokenRefs: chosen.tokenRefs,
      skipped: report.skipped,
      passThrough: report.pass_through,
      warnings: report.warnings,
      timingMs: timing.timing_ms,
      grid: report.grid,
      budget: report.budget,
    };
  });
}

/**
 * Build the candidate search space without scoring.
 *
 * Returns one gather index array per feasible key-frame count, flattened in
 * (t, h, w) row-major order.
 */
export function bindBuildCandidates(
  frames: BoundArrayView,
  frameBudget: number,
  spaceSize?: number | null,
  options: EngineOptions = {},
): Int32Array[] {
  requireRank(frames, 4, "frames grid");
  checkPositiveInt(frameBudget, "frameBudget");
  if (spaceSize != null) checkPositiveInt(spaceSize, "spaceSize");
  return withTempDir((dir) => {
    const framesPath = join(dir, "frames.ets");
    writeTensor(framesPath, frames);
    const outDir = join(dir, "out");
    const args = ["explore", framesPath, "--budget-frames", String(frameBudget), "--out", outDir];
    if (spaceSize != null) args.push("--space-size", String(spaceSize));
    runEngine(args, options);
    const dump = readJson<CandidatesJson>(join(outDir, "candidates.json"));
    const rows = frames.shape[1] as number;
    const cols = frames.shape[2] as number;
    return dump.candidates.map((cand) => flattenTokenRefs(cand.tokens, rows, cols));
  });
}
