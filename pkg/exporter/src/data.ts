/** Dataset loading plus the synthetic tasks used by tests and demos. */

import * as fs from "node:fs";

import { Dataset } from "./train.js";
import { Rng } from "./rng.js";

/** JSON file: {"x": [[...flat sample...], ...], "y": [...], "numClasses": K} */
export function loadDataset(path: string): Dataset {
  const doc = JSON.parse(fs.readFileSync(path, "utf-8"));
  if (!Array.isArray(doc.x) || !Array.isArray(doc.y) || doc.x.length !== doc.y.length) {
    throw new Error(`${path}: expected x/y arrays of equal length`);
  }
  const numClasses = Number(doc.numClasses);
  if (!Number.isInteger(numClasses) || numClasses < 2) {
    throw new Error(`${path}: numClasses must be an integer >= 2`);
  }
  return {
    x: doc.x.map((row: number[]) => Float64Array.from(row)),
    y: Int32Array.from(doc.y),
    numClasses,
  };
}

/**
 * Two Gaussian blobs at +/- mu * e1 in dim dimensions.  separation
 * controls mu; labelNoise flips that fraction of labels, which is how the
 * "hard" variant of a task gets its irreducible test error.
 */
export function gaussianBlobs(
  m: number,
  dim: number,
  separation: number,
  labelNoise: number,
  seed: number,
): Dataset {
  const rng = new Rng(seed, "blobs");
  const x: Float64Array[] = [];
  const y = new Int32Array(m);
  for (let i = 0; i < m; i++) {
    const label = i % 2;
    const row = rng.fillGauss(new Float64Array(dim));
    row[0] += label === 0 ? separation : -separation;
    x.push(row);
    y[i] = rng.next() < labelNoise ? 1 - label : label;
  }
  return { x, y, numClasses: 2 };
}

/**
 * Tiny image task for the conv nets: one channel, size x size, class 0
 * puts a bright 3x3 blob in the top half, class 1 in the bottom half,
 * plus pixel noise.
 */
export function blobImages(m: number, size: number, noise: number, seed: number): Dataset {
  const rng = new Rng(seed, "images");
  const x: Float64Array[] = [];
  const y = new Int32Array(m);
  const half = Math.floor(size / 2);
  for (let i = 0; i < m; i++) {
    const label = i % 2;
    const img = rng.fillGauss(new Float64Array(size * size), noise);
    const top = label === 0 ? rng.int(half - 2) : half + rng.int(half - 2);
    const left = rng.int(size - 2);
    for (let dh = 0; dh < 3; dh++) {
      for (let dw = 0; dw < 3; dw++) {
        img[(top + dh) * size + (left + dw)] += 2.0;
      }
    }
    x.push(img);
    y[i] = label;
  }
  return { x, y, numClasses: 2 };
}
