/**
 * Engine CLI invocation. The engine command defaults to `etsel` on PATH and
 * can be overridden with the ETSEL_CLI environment variable or per call
 * (e.g. "python3 -m etsel.cli").
 */

import { spawnSync } from "node:child_process";

import { EngineError } from "./errors.js";

export interface EngineOptions {
  /** Command tokens used to launch the engine CLI. */
  command?: string[];
}

export function engineCommand(options: EngineOptions = {}): string[] {
  if (options.command && options.command.length > 0) {
    return options.command;
  }
  const fromEnv = process.env.ETSEL_CLI;
  if (fromEnv && fromEnv.trim().length > 0) {
    return fromEnv.trim().split(/\s+/);
  }
  return ["etsel"];
}

export function runEngine(args: string[], options: EngineOptions = {}): string {
  const [cmd, ...prefix] = engineCommand(options);
  const proc = spawnSync(cmd as string, [...prefix, ...args], {
    encoding: "utf8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.error) {
    throw new EngineError("engine_unavailable", `cannot launch engine: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    // engine failures arrive as one structured JSON object on stdout
    try {
      const parsed = JSON.parse(proc.stdout);
      if (parsed?.error?.code) {
        throw new EngineError(parsed.error.code, parsed.error.message ?? "engine error");
      }
    } catch (err) {
      if (err instanceof EngineError) throw err;
    }
    throw new EngineError(
      "engine_failed",
      `engine exited with status ${proc.status}: ${proc.stderr.slice(0, 500)}`,
    );
  }
  return proc.stdout;
}

export interface EngineInfo {
  name: string;
  version: string;
  tensor_format: { magic: string; dtype: string; layout: string };
  methods: string[];
  modes: string[];
  commands: string[];
}

export function engineInfo(options: EngineOptions = {}): EngineInfo {
  return JSON.parse(runEngine(["info"], options)) as EngineInfo;
}
