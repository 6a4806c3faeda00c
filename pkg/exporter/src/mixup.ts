/**
 * Label-wise mixup accuracy.
 *
 * Each sample is mixed with a random partner OF THE SAME LABEL,
 * x' = lam * x_i + (1 - lam) * x_j with lam ~ Beta(alpha, alpha), and the
 * model is scored on whether it still predicts that label.  One mixed
 * input per sample per round; alpha defaults to 1 (uniform coefficient).
 */

import { Net } from "./nets.js";
import { Dataset } from "./train.js";
import { Rng } from "./rng.js";

export interface MixupOptions {
  rounds?: number;
  alpha?: number;
}

export function mixupAccuracy(net: Net, data: Dataset, seed: number, opts: MixupOptions = {}): number {
  const rounds = opts.rounds ?? 1;
  const alpha = opts.alpha ?? 1;
  const m = data.x.length;
  if (m === 0) throw new Error("mixup accuracy needs a nonempty dataset");

  const byLabel = new Map<number, number[]>();
  for (let i = 0; i < m; i++) {
    const lab = data.y[i];
    const bucket = byLabel.get(lab);
    if (bucket) bucket.push(i);
    else byLabel.set(lab, [i]);
  }

  const rng = new Rng(seed, "mixup");
  const mixed = new Float64Array(net.inDim);
  let correct = 0;
  let total = 0;
  for (let round = 0; round < rounds; round++) {
    for (let i = 0; i < m; i++) {
      const bucket = byLabel.get(data.y[i])!;
      const j = bucket[rng.int(bucket.length)];
      const lam = rng.beta(alpha);
      const xi = data.x[i];
      const xj = data.x[j];
      for (let d = 0; d < mixed.length; d++) mixed[d] = lam * xi[d] + (1 - lam) * xj[d];
      const scores = net.scores(mixed);
      let best = 0;
      for (let k = 1; k < scores.length; k++) if (scores[k] > scores[best]) best = k;
      if (best === data.y[i]) correct++;
      total++;
    }
  }
  return correct / total;
}
