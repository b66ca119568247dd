/**
 * ETS1 tensor file reader/writer (the engine's interchange format).
 *
 * Layout: "ETS1" magic, little-endian u32 ndim, ndim u32 dims, then the f32
 * payload in row-major order. Writes stream straight from the view's buffer
 * on little-endian hosts; big-endian hosts take a byte-swapping slow path.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { endianness } from "node:os";

import { EngineError } from "./errors.js";
import { BoundArrayView, shapeElements } from "./view.js";

const MAGIC = Buffer.from("ETS1", "ascii");

export function writeTensor(path: string, view: BoundArrayView): void {
  const ndim = view.shape.length;
  const header = Buffer.alloc(8 + 4 * ndim);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(ndim, 4);
  view.shape.forEach((dim, i) => header.writeUInt32LE(dim, 8 + 4 * i));

  let payload: Buffer;
  if (endianness() === "LE") {
    payload = Buffer.from(view.data.buffer, view.data.byteOffset, view.data.byteLength);
  } else {
    payload = Buffer.alloc(view.data.byteLength);
    view.data.forEach((value, i) => payload.writeFloatLE(value, 4 * i));
  }
  writeFileSync(path, Buffer.concat([header, payload]));
}

export function readTensor(path: string): BoundArrayView {
  const raw = readFileSync(path);
  if (raw.byteLength < 8 || !raw.subarray(0, 4).equals(MAGIC)) {
    throw new EngineError("bad_format", `${path}: missing ETS1 magic`);
  }
  const ndim = raw.readUInt32LE(4);
  if (ndim < 1 || ndim > 8) {
    throw new EngineError("corrupt_tensor", `${path}: implausible rank ${ndim}`);
  }
  const headerEnd = 8 + 4 * ndim;
  if (raw.byteLength < headerEnd) {
    throw new EngineError("bad_format", `${path}: truncated dim header`);
  }
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    shape.push(raw.readUInt32LE(8 + 4 * i));
  }
  const count = shapeElements(shape);
  if (raw.byteLength - headerEnd !== 4 * count) {
    throw new EngineError(
      "corrupt_tensor",
      `${path}: dims [${shape.join(", ")}] declare ${count} elements, payload holds ` +
        `${(raw.byteLength - headerEnd) / 4}`,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = raw.readFloatLE(headerEnd + 4 * i);
    if (!Number.isFinite(data[i])) {
      throw new EngineError("invalid_value", `${path}: tensor contains NaN or Inf`);
    }
  }
  return BoundArrayView.fromTypedArray(data, shape);
}
