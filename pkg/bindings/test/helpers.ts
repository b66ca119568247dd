/** Seeded data generators shared by the binding tests. */

import { BoundArrayView } from "../src/index.js";

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function gaussian(rand: () => number): () => number {
  return () => {
    let u = 0;
    let v = 0;
    while (u === 0) u = rand();
    while (v === 0) v = rand();
    return Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
  };
}

export function randomView(shape: number[], seed: number): BoundArrayView {
  const next = gaussian(mulberry32(seed));
  const data = new Float32Array(shape.reduce((a, b) => a * b, 1));
  for (let i = 0; i < data.length; i++) data[i] = next();
  return BoundArrayView.fromTypedArray(data, shape);
}

export interface RandomInstance {
  frames: BoundArrayView;
  queryHidden: BoundArrayView;
  instructionHidden: BoundArrayView | null;
  wq: BoundArrayView;
  wk: BoundArrayView;
  heads: number;
  dK: number;
  frameBudget: number;
}

export function randomInstance(seed: number): RandomInstance {
  const rand = mulberry32(seed * 2654435761 + 1);
  const frames = 6 + Math.floor(rand() * 11);
  const rows = 1 + Math.floor(rand() * 2);
  const cols = 1 + Math.floor(rand() * 2);
  const dim = 3 + Math.floor(rand() * 4);
  const frameBudget = 2 + Math.floor(rand() * Math.min(4, frames - 1));
  const nQuery = 1 + Math.floor(rand() * 3);
  const nInstruction = Math.floor(rand() * 3);
  return {
    frames: randomView([frames, rows, cols, dim], seed + 11),
    queryHidden: randomView([nQuery, dim], seed + 13),
    instructionHidden: nInstruction > 0 ? randomView([nInstruction, dim], seed + 17) : null,
    wq: randomView([dim, dim], seed + 19),
    wk: randomView([dim, dim], seed + 23),
    heads: 1,
    dK: dim,
    frameBudget,
  };
}
