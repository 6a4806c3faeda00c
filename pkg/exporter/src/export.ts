/**
 * Dump extraction: run a net over a dataset and write the analysis-format
 * directory with per-sample features, scores and margin-gradient norms.
 *
 * Gradients are taken in feature space at each selected layer: the margin
 * rho = f_y - f_ystar is backpropagated from the scores down to that
 * layer's post-activation output, one sample at a time.  Ties in the
 * runner-up argmax break toward the smallest class index, matching the
 * analysis side.
 */

import { Net, norm2 } from "./nets.js";
import { Dataset } from "./train.js";
import { DumpLayer, DumpTensors, writeDump } from "./dump.js";

export interface ExportSpec {
  modelId: string;
  /** Layer ids, or "auto" for the first-conv / deepest-conv convention. */
  layers: string[] | "auto";
  seed: number;
  hyperparams?: Record<string, string>;
  genGap?: number | null;
  mixupAccuracy?: number | null;
  /** Compute per-layer spectral norms by power iteration (needed for sn margins). */
  spectralNorms?: boolean;
  device?: "cpu";
  batchSize?: number; // accepted for interface parity; computation is per-sample anyway
}

/**
 * Shallow/deep layer convention: the first conv layer, and the 8th conv
 * layer when the net has more than 8, otherwise the deepest conv layer.
 * Nets without conv layers have no convention; callers must name layers.
 */
export function selectLayers(net: Net, selector: string[] | "auto"): string[] {
  if (selector !== "auto") {
    for (const id of selector) net.layerIndex(id);
    if (selector.length === 0) throw new Error("no layers selected");
    return selector;
  }
  const ids = net.layerIds();
  const convIds = ids.filter((_, i) => net.layers[i].kind === "conv");
  if (convIds.length === 0) {
    throw new Error("auto layer selection needs conv layers; pass explicit layer ids");
  }
  const shallow = convIds[0];
  const deep = convIds.length > 8 ? convIds[7] : convIds[convIds.length - 1];
  return shallow === deep ? [shallow] : [shallow, deep];
}

export interface ExportResult {
  path: string;
  kept: number;
  dropped: number;
}

export function exportDump(net: Net, data: Dataset, spec: ExportSpec, outPath: string): ExportResult {
  if (data.x.length === 0) throw new Error("empty dataset");
  if (data.numClasses !== net.numClasses) {
    throw new Error(`dataset has ${data.numClasses} classes, net emits ${net.numClasses}`);
  }
  const layerIds = selectLayers(net, spec.layers);
  const layerIdxs = layerIds.map((id) => net.layerIndex(id));
  if (layerIdxs.some((i) => i === net.layers.length - 1)) {
    throw new Error("the score layer itself cannot be a feature layer");
  }

  const keptRows: number[] = [];
  const scoreRows: Float64Array[] = [];
  const featRows: Float64Array[][] = layerIds.map(() => []);
  const gradRows: number[][] = layerIds.map(() => []);
  let dropped = 0;

  for (let i = 0; i < data.x.length; i++) {
    const trace = net.forward(data.x[i]);
    const scores = trace.acts[net.layers.length];
    let finite = scores.every(Number.isFinite);
    const feats: Float64Array[] = [];
    const norms: number[] = [];
    for (let l = 0; finite && l < layerIdxs.length; l++) {
      const phi = trace.acts[layerIdxs[l] + 1];
      const { grad } = net.marginGradient(trace, layerIdxs[l], data.y[i]);
      const norm = norm2(grad);
      if (!phi.every(Number.isFinite) || !Number.isFinite(norm)) {
        finite = false;
        break;
      }
      feats.push(phi);
      norms.push(norm);
    }
    if (!finite) {
      dropped++;
      console.warn(`sample ${i}: non-finite forward or gradient, dropped`);
      continue;
    }
    keptRows.push(i);
    scoreRows.push(scores);
    for (let l = 0; l < layerIdxs.length; l++) {
      featRows[l].push(feats[l]);
      gradRows[l].push(norms[l]);
    }
  }
  if (keptRows.length === 0) throw new Error("every sample was dropped as non-finite");

  const m = keptRows.length;
  const K = net.numClasses;
  const labels = new Int32Array(m);
  const flatScores = new Float32Array(m * K);
  for (let r = 0; r < m; r++) {
    labels[r] = data.y[keptRows[r]];
    for (let j = 0; j < K; j++) flatScores[r * K + j] = scoreRows[r][j];
  }

  const layers: DumpLayer[] = layerIds.map((layerId, l) => {
    const dim = net.layers[layerIdxs[l]].outDim;
    const features = new Float32Array(m * dim);
    for (let r = 0; r < m; r++) features.set(Float32Array.from(featRows[l][r]), r * dim);
    const norms = Float32Array.from(gradRows[l]);
    return {
      layerId,
      dim,
      features,
      gradNorms: norms,
      // ReLU nets: the margin is piecewise linear in the features, so the
      // sample's Jacobian difference IS the margin gradient
      jacNorms: Float32Array.from(norms),
    };
  });

  const dump: DumpTensors = {
    modelId: spec.modelId,
    numClasses: K,
    labels,
    scores: flatScores,
    layers,
    hyperparams: spec.hyperparams ?? {},
    mixupAccuracy: spec.mixupAccuracy ?? null,
    genGap: spec.genGap ?? null,
    weightSpectralNorms: spec.spectralNorms
      ? net.layers.map((_, i) => net.spectralNorm(i, 100, spec.seed))
      : null,
    droppedSamples: dropped,
  };
  writeDump(dump, outPath);
  return { path: outPath, kept: m, dropped };
}

/** Raw margins (score gap to the runner-up), one per kept sample, from the net itself. */
export function rawMargins(net: Net, data: Dataset): Float64Array {
  const out = new Float64Array(data.x.length);
  for (let i = 0; i < data.x.length; i++) {
    const scores = net.scores(data.x[i]);
    const y = data.y[i];
    out[i] = scores[y] - scores[net.runnerUp(scores, y)];
  }
  return out;
}

/**
 * Per-sample norm of the gradient of the NORMALIZED margin
 * rho / (||grad rho|| + eps): for piecewise-linear nets the normalizer is
 * locally constant, so the norm is g / (g + eps), always below 1 and close
 * to it whenever the raw gradient is healthy.
 */
export function gnJacobianNorms(gradNorms: ArrayLike<number>, epsilon = 1e-6): Float64Array {
  const out = new Float64Array(gradNorms.length);
  for (let i = 0; i < gradNorms.length; i++) {
    out[i] = gradNorms[i] / (gradNorms[i] + epsilon);
  }
  return out;
}
