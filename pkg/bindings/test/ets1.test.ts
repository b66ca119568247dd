import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { BoundArrayView, readTensor, writeTensor } from "../src/index.js";
import { randomView } from "./helpers.js";

let dir: string;

beforeEach(() => {
  dir = mkdtempSync(join(tmpdir(), "ets1-test-"));
});

afterEach(() => {
  rmSync(dir, { recursive: true, force: true });
});

describe("ETS1 read/write", () => {
  it("round-trips bit-exactly", () => {
    for (let i = 0; i < 25; i++) {
      const rank = 1 + (i % 4);
      const shape = Array.from({ length: rank }, (_, d) => 1 + ((i + d) % 5));
      const view = randomView(shape, 100 + i);
      const path = join(dir, `rt_${i}.ets`);
      writeTensor(path, view);
      const back = readTensor(path);
      expect(back.shape).toEqual(view.shape);
      expect(Buffer.from(back.data.buffer, back.data.byteOffset, back.data.byteLength)).toEqual(
        Buffer.from(view.data.buffer, view.data.byteOffset, view.data.byteLength),
      );
    }
  });

  it("writes the documented header layout", () => {
    const path = join(dir, "h.ets");
    writeTensor(path, BoundArrayView.fromValues([1, 2, 3, 4, 5, 6], [2, 3]));
    const raw = readFileSync(path);
    expect(raw.subarray(0, 4).toString("ascii")).toBe("ETS1");
    expect(raw.readUInt32LE(4)).toBe(2);
    expect(raw.readUInt32LE(8)).toBe(2);
    expect(raw.readUInt32LE(12)).toBe(3);
    expect(raw.byteLength).toBe(4 + 4 + 8 + 6 * 4);
    expect(raw.readFloatLE(16)).toBe(1);
  });

  it("rejects bad magic", () => {
    const path = join(dir, "bad.ets");
    writeFileSync(path, Buffer.from("NOPE0000"));
    expect(() => readTensor(path)).toThrowError(
      expect.objectContaining({ code: "bad_format" }),
    );
  });

  it("rejects payload length mismatch", () => {
    const path = join(dir, "short.ets");
    const good = join(dir, "good.ets");
    writeTensor(good, BoundArrayView.fromValues([1, 2, 3, 4], [4]));
    const raw = readFileSync(good);
    writeFileSync(path, raw.subarray(0, raw.byteLength - 4));
    expect(() => readTensor(path)).toThrowError(
      expect.objectContaining({ code: "corrupt_tensor" }),
    );
  });

  it("rejects non-finite payloads", () => {
    const path = join(dir, "nan.ets");
    const buf = Buffer.alloc(4 + 4 + 4 + 8);
    buf.write("ETS1", 0, "ascii");
    buf.writeUInt32LE(1, 4);
    buf.writeUInt32LE(2, 8);
    buf.writeFloatLE(1.5, 12);
    buf.writeFloatLE(Number.NaN, 16);
    writeFileSync(path, buf);
    expect(() => readTensor(path)).toThrowError(
      expect.objectContaining({ code: "invalid_value" }),
    );
  });
});
