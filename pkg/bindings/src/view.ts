/**
 * Zero-copy array views handed to the engine boundary.
 *
 * A BoundArrayView pairs a shape with a contiguous float32 buffer. Built from
 * a Float32Array it always shares the caller's buffer (no copy, hundreds of
 * MB stay put); built from raw bytes it shares when 4-byte aligned and
 * otherwise copies or rejects per the caller's flag.
 */

import { InvalidInputError } from "./errors.js";

export type Shape = readonly number[];

export function shapeElements(shape: Shape): number {
  let n = 1;
  for (const dim of shape) {
    if (!Number.isInteger(dim) || dim < 0) {
      throw new InvalidInputError(`shape dims must be non-negative integers, got ${dim}`);
    }
    n *= dim;
  }
  return n;
}

export interface FromBytesOptions {
  /** Copy misaligned buffers instead of rejecting them (default: reject). */
  allowCopy?: boolean;
}

export class BoundArrayView {
  readonly shape: number[];
  readonly dtype = "float32" as const;
  readonly data: Float32Array;
  /** True when `data` shares the source's ArrayBuffer. */
  readonly zeroCopy: boolean;

  private constructor(shape: Shape, data: Float32Array, zeroCopy: boolean) {
    const expected = shapeElements(shape);
    if (data.length !== expected) {
      throw new InvalidInputError(
        `shape [${shape.join(", ")}] needs ${expected} elements, buffer holds ${data.length}`,
      );
    }
    this.shape = [...shape];
    this.data = data;
    this.zeroCopy = zeroCopy;
  }

  get size(): number {
    return this.data.length;
  }

  /** Wrap a typed array without copying; the view aliases the caller's buffer. */
  static fromTypedArray(arr: Float32Array, shape: Shape): BoundArrayView {
    return new BoundArrayView(shape, arr, true);
  }

  /**
   * Wrap raw bytes. 4-byte-aligned sources become zero-copy views; misaligned
   * sources are copied when `allowCopy`, rejected otherwise.
   */
  static fromBytes(
    source: Uint8Array,
    shape: Shape,
    options: FromBytesOptions = {},
  ): BoundArrayView {
    const expected = shapeElements(shape) * 4;
    if (source.byteLength !== expected) {
      throw new InvalidInputError(
        `shape [${shape.join(", ")}] needs ${expected} bytes, got ${source.byteLength}`,
      );
    }
    if (source.byteOffset % 4 === 0) {
      const view = new Float32Array(source.buffer, source.byteOffset, source.byteLength / 4);
      return new BoundArrayView(shape, view, true);
    }
    if (!options.allowCopy) {
      throw new InvalidInputError(
        `buffer offset ${source.byteOffset} is not 4-byte aligned; pass allowCopy to copy`,
        "misaligned_buffer",
      );
    }
    const copy = new Uint8Array(source.byteLength);
    copy.set(source);
    return new BoundArrayView(shape, new Float32Array(copy.buffer), false);
  }

  /** Copy plain numbers into a fresh view (convenience for small inputs). */
  static fromValues(values: ArrayLike<number>, shape: Shape): BoundArrayView {
    return new BoundArrayView(shape, Float32Array.from(values), false);
  }
}

export function requireRank(view: BoundArrayView, rank: number, role: string): void {
  if (view.shape.length !== rank) {
    throw new InvalidInputError(
      `${role} must be rank ${rank}, got rank ${view.shape.length}`,
    );
  }
  for (const dim of view.shape) {
    if (dim < 1) {
      throw new InvalidInputError(`${role} dims must all be >= 1, got [${view.shape.join(", ")}]`);
    }
  }
}
