/** Plain SGD with softmax cross-entropy, per-sample backprop. */

import { Net, backwardInput, backwardParams } from "./nets.js";
import { Rng } from "./rng.js";

export interface Dataset {
  x: Float64Array[]; // one flat vector per sample
  y: Int32Array;
  numClasses: number;
}

export function softmax(scores: Float64Array): Float64Array {
  let max = -Infinity;
  for (let j = 0; j < scores.length; j++) if (scores[j] > max) max = scores[j];
  const p = new Float64Array(scores.length);
  let z = 0;
  for (let j = 0; j < scores.length; j++) {
    p[j] = Math.exp(scores[j] - max);
    z += p[j];
  }
  for (let j = 0; j < scores.length; j++) p[j] /= z;
  return p;
}

export interface TrainOptions {
  steps: number;
  lr: number;
  batchSize: number;
  seed: number;
  logEvery?: number;
}

/** Minibatch SGD; returns the running average loss of the last 50 steps. */
export function trainSgd(net: Net, data: Dataset, opts: TrainOptions): number {
  const { steps, lr, batchSize, seed } = opts;
  const m = data.x.length;
  const rng = new Rng(seed, "sgd");
  const gws = net.layers.map((l) => new Float64Array(l.w.length));
  const gbs = net.layers.map((l) => new Float64Array(l.b.length));
  const recent: number[] = [];

  for (let step = 0; step < steps; step++) {
    gws.forEach((g) => g.fill(0));
    gbs.forEach((g) => g.fill(0));
    let batchLoss = 0;
    for (let s = 0; s < batchSize; s++) {
      const idx = rng.int(m);
      const trace = net.forward(data.x[idx]);
      const scores = trace.acts[net.layers.length];
      const p = softmax(scores);
      const y = data.y[idx];
      batchLoss += -Math.log(Math.max(p[y], 1e-12));

      // dL/dscores = p - onehot(y), then backprop layer by layer
      let g: Float64Array = Float64Array.from(p);
      g[y] -= 1;
      for (let i = net.layers.length - 1; i >= 0; i--) {
        backwardParams(net.layers[i], g, trace.pres[i], trace.acts[i], gws[i], gbs[i]);
        if (i > 0) g = backwardInput(net.layers[i], g, trace.pres[i]);
      }
    }
    const scale = lr / batchSize;
    net.layers.forEach((layer, i) => {
      for (let j = 0; j < layer.w.length; j++) layer.w[j] -= scale * gws[i][j];
      for (let j = 0; j < layer.b.length; j++) layer.b[j] -= scale * gbs[i][j];
    });
    recent.push(batchLoss / batchSize);
    if (recent.length > 50) recent.shift();
    if (opts.logEvery && step % opts.logEvery === 0) {
      console.log(`step ${step} loss ${(batchLoss / batchSize).toFixed(4)}`);
    }
  }
  return recent.reduce((a, b) => a + b, 0) / recent.length;
}

export function accuracy(net: Net, data: Dataset): number {
  let correct = 0;
  for (let i = 0; i < data.x.length; i++) {
    const scores = net.scores(data.x[i]);
    let best = 0;
    for (let j = 1; j < scores.length; j++) if (scores[j] > scores[best]) best = j;
    if (best === data.y[i]) correct++;
  }
  return correct / data.x.length;
}
