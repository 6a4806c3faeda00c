/**
 * Hand-rolled dense / conv ReLU networks with manual backprop.
 *
 * Everything is per-sample: a sample is one flat Float64Array, conv
 * tensors in C-major layout (index = c*H*W + h*W + w), and gradients are
 * computed one sample at a time.  Slow and obviously correct beats fast
 * here; the nets are tiny and the finite-difference tests check every
 * backward path.
 */

import { Rng } from "./rng.js";

export function norm2(v: Float64Array): number {
  let s = 0;
  for (let i = 0; i < v.length; i++) s += v[i] * v[i];
  return Math.sqrt(s);
}

export interface DenseLayer {
  kind: "dense";
  inDim: number;
  outDim: number;
  relu: boolean;
  w: Float64Array; // [outDim * inDim], row-major by output unit
  b: Float64Array; // [outDim]
}

export interface ConvLayer {
  kind: "conv";
  inC: number;
  inH: number;
  inW: number;
  outC: number;
  kh: number;
  kw: number;
  relu: boolean;
  outH: number; // inH - kh + 1 (valid padding, stride 1)
  outW: number;
  inDim: number;
  outDim: number;
  w: Float64Array; // [outC * inC * kh * kw]
  b: Float64Array; // [outC]
}

export type Layer = DenseLayer | ConvLayer;

export function denseLayer(inDim: number, outDim: number, relu: boolean): DenseLayer {
  return {
    kind: "dense",
    inDim,
    outDim,
    relu,
    w: new Float64Array(outDim * inDim),
    b: new Float64Array(outDim),
  };
}

export function convLayer(
  inC: number,
  inH: number,
  inW: number,
  outC: number,
  kh: number,
  kw: number,
  relu: boolean,
): ConvLayer {
  if (kh > inH || kw > inW) {
    throw new Error(`conv kernel ${kh}x${kw} larger than input ${inH}x${inW}`);
  }
  const outH = inH - kh + 1;
  const outW = inW - kw + 1;
  return {
    kind: "conv",
    inC,
    inH,
    inW,
    outC,
    kh,
    kw,
    relu,
    outH,
    outW,
    inDim: inC * inH * inW,
    outDim: outC * outH * outW,
    w: new Float64Array(outC * inC * kh * kw),
    b: new Float64Array(outC),
  };
}

/** Linear part only (no bias, no ReLU); used by the spectral-norm power iteration. */
export function applyLinear(layer: Layer, x: Float64Array): Float64Array {
  const out = new Float64Array(layer.outDim);
  if (layer.kind === "dense") {
    for (let o = 0; o < layer.outDim; o++) {
      let s = 0;
      const row = o * layer.inDim;
      for (let i = 0; i < layer.inDim; i++) s += layer.w[row + i] * x[i];
      out[o] = s;
    }
    return out;
  }
  const { inC, inH, inW, outC, kh, kw, outH, outW } = layer;
  for (let oc = 0; oc < outC; oc++) {
    for (let oh = 0; oh < outH; oh++) {
      for (let ow = 0; ow < outW; ow++) {
        let s = 0;
        for (let ic = 0; ic < inC; ic++) {
          for (let dh = 0; dh < kh; dh++) {
            for (let dw = 0; dw < kw; dw++) {
              s +=
                layer.w[((oc * inC + ic) * kh + dh) * kw + dw] *
                x[ic * inH * inW + (oh + dh) * inW + (ow + dw)];
            }
          }
        }
        out[(oc * outH + oh) * outW + ow] = s;
      }
    }
  }
  return out;
}

/** Adjoint of the linear part: gradient w.r.t. the input given gradient w.r.t. pre-activation. */
export function applyAdjoint(layer: Layer, gPre: Float64Array): Float64Array {
  const gIn = new Float64Array(layer.inDim);
  if (layer.kind === "dense") {
    for (let o = 0; o < layer.outDim; o++) {
      const g = gPre[o];
      if (g === 0) continue;
      const row = o * layer.inDim;
      for (let i = 0; i < layer.inDim; i++) gIn[i] += layer.w[row + i] * g;
    }
    return gIn;
  }
  const { inC, inH, inW, outC, kh, kw, outH, outW } = layer;
  for (let oc = 0; oc < outC; oc++) {
    for (let oh = 0; oh < outH; oh++) {
      for (let ow = 0; ow < outW; ow++) {
        const g = gPre[(oc * outH + oh) * outW + ow];
        if (g === 0) continue;
        for (let ic = 0; ic < inC; ic++) {
          for (let dh = 0; dh < kh; dh++) {
            for (let dw = 0; dw < kw; dw++) {
              gIn[ic * inH * inW + (oh + dh) * inW + (ow + dw)] +=
                layer.w[((oc * inC + ic) * kh + dh) * kw + dw] * g;
            }
          }
        }
      }
    }
  }
  return gIn;
}

function forwardLayer(layer: Layer, x: Float64Array): { pre: Float64Array; out: Float64Array } {
  const pre = applyLinear(layer, x);
  if (layer.kind === "dense") {
    for (let o = 0; o < layer.outDim; o++) pre[o] += layer.b[o];
  } else {
    const plane = layer.outH * layer.outW;
    for (let oc = 0; oc < layer.outC; oc++) {
      for (let p = 0; p < plane; p++) pre[oc * plane + p] += layer.b[oc];
    }
  }
  if (!layer.relu) return { pre, out: pre };
  const out = new Float64Array(layer.outDim);
  for (let o = 0; o < layer.outDim; o++) out[o] = pre[o] > 0 ? pre[o] : 0;
  return { pre, out };
}

/** Gradient w.r.t. the layer input, given gradient w.r.t. the layer OUTPUT and the saved pre-activation. */
function backwardInput(layer: Layer, gOut: Float64Array, pre: Float64Array): Float64Array {
  let gPre = gOut;
  if (layer.relu) {
    gPre = new Float64Array(layer.outDim);
    for (let o = 0; o < layer.outDim; o++) gPre[o] = pre[o] > 0 ? gOut[o] : 0;
  }
  return applyAdjoint(layer, gPre);
}

/** Accumulate parameter gradients into gw/gb (same layouts as w/b). */
function backwardParams(
  layer: Layer,
  gOut: Float64Array,
  pre: Float64Array,
  x: Float64Array,
  gw: Float64Array,
  gb: Float64Array,
): void {
  const gPre = new Float64Array(layer.outDim);
  for (let o = 0; o < layer.outDim; o++) {
    gPre[o] = layer.relu && pre[o] <= 0 ? 0 : gOut[o];
  }
  if (layer.kind === "dense") {
    for (let o = 0; o < layer.outDim; o++) {
      const g = gPre[o];
      if (g === 0) continue;
      gb[o] += g;
      const row = o * layer.inDim;
      for (let i = 0; i < layer.inDim; i++) gw[row + i] += g * x[i];
    }
    return;
  }
  const { inC, inH, inW, outC, kh, kw, outH, outW } = layer;
  for (let oc = 0; oc < outC; oc++) {
    for (let oh = 0; oh < outH; oh++) {
      for (let ow = 0; ow < outW; ow++) {
        const g = gPre[(oc * outH + oh) * outW + ow];
        if (g === 0) continue;
        gb[oc] += g;
        for (let ic = 0; ic < inC; ic++) {
          for (let dh = 0; dh < kh; dh++) {
            for (let dw = 0; dw < kw; dw++) {
              gw[((oc * inC + ic) * kh + dh) * kw + dw] +=
                g * x[ic * inH * inW + (oh + dh) * inW + (ow + dw)];
            }
          }
        }
      }
    }
  }
}

export interface ForwardTrace {
  acts: Float64Array[]; // acts[0] = input, acts[i+1] = output of layer i
  pres: Float64Array[]; // pres[i] = pre-activation of layer i
}

export class Net {
  readonly layers: Layer[];

  constructor(layers: Layer[]) {
    for (let i = 1; i < layers.length; i++) {
      if (layers[i].inDim !== layers[i - 1].outDim) {
        throw new Error(
          `layer ${i} expects ${layers[i].inDim} inputs, layer ${i - 1} emits ${layers[i - 1].outDim}`,
        );
      }
    }
    if (layers.length === 0) throw new Error("empty network");
    this.layers = layers;
  }

  get inDim(): number {
    return this.layers[0].inDim;
  }

  get numClasses(): number {
    return this.layers[this.layers.length - 1].outDim;
  }

  /** "conv1", "dense2", ... 1-based by position, prefixed by kind. */
  layerIds(): string[] {
    return this.layers.map((layer, i) => `${layer.kind}${i + 1}`);
  }

  layerIndex(layerId: string): number {
    const idx = this.layerIds().indexOf(layerId);
    if (idx < 0) throw new Error(`no layer ${layerId}; have ${this.layerIds().join(", ")}`);
    return idx;
  }

  forward(x: Float64Array): ForwardTrace {
    const acts: Float64Array[] = [x];
    const pres: Float64Array[] = [];
    let cur = x;
    for (const layer of this.layers) {
      const { pre, out } = forwardLayer(layer, cur);
      pres.push(pre);
      acts.push(out);
      cur = out;
    }
    return { acts, pres };
  }

  scores(x: Float64Array): Float64Array {
    return this.forward(x).acts[this.layers.length];
  }

  /**
   * Gradient of seed . scores w.r.t. the output of layer layerIdx
   * (the post-activation features), reusing a forward trace for the masks.
   */
  featureGradient(trace: ForwardTrace, layerIdx: number, seed: Float64Array): Float64Array {
    let g = seed;
    for (let i = this.layers.length - 1; i > layerIdx; i--) {
      g = backwardInput(this.layers[i], g, trace.pres[i]);
    }
    return g;
  }

  /** Runner-up class: highest score among j != y, smallest index on ties. */
  runnerUp(scores: Float64Array, y: number): number {
    let best = -1;
    for (let j = 0; j < scores.length; j++) {
      if (j === y) continue;
      if (best < 0 || scores[j] > scores[best]) best = j;
    }
    return best;
  }

  /**
   * Per-sample margin gradient at a feature layer.
   *
   * The margin rho(phi) = f_y(phi) - f_ystar(phi) is differentiated by a
   * single backward pass with seed e_y - e_ystar.  For ReLU nets rho is
   * piecewise linear in phi, so this same vector is the local Jacobian
   * difference; its norm feeds both norm fields of the dump.
   */
  marginGradient(
    trace: ForwardTrace,
    layerIdx: number,
    y: number,
  ): { grad: Float64Array; yStar: number } {
    const scores = trace.acts[this.layers.length];
    const yStar = this.runnerUp(scores, y);
    const seed = new Float64Array(scores.length);
    seed[y] = 1;
    seed[yStar] = -1;
    return { grad: this.featureGradient(trace, layerIdx, seed), yStar };
  }

  /** Largest singular value of one layer's linear operator, by power iteration. */
  spectralNorm(layerIdx: number, iters = 100, seed = 0): number {
    const layer = this.layers[layerIdx];
    const rng = new Rng(seed, "spectral", layerIdx);
    let v = rng.fillGauss(new Float64Array(layer.inDim));
    let norm = norm2(v);
    if (norm === 0) {
      v[0] = 1;
      norm = 1;
    }
    for (let i = 0; i < layer.inDim; i++) v[i] /= norm;
    let sigma = 0;
    for (let it = 0; it < iters; it++) {
      const u = applyLinear(layer, v);
      sigma = norm2(u);
      if (sigma === 0) return 0;
      for (let i = 0; i < u.length; i++) u[i] /= sigma;
      v = applyAdjoint(layer, u);
      const vn = norm2(v);
      if (vn === 0) return sigma;
      for (let i = 0; i < v.length; i++) v[i] /= vn;
    }
    return sigma;
  }

  initHe(seed: number): void {
    this.layers.forEach((layer, i) => {
      const rng = new Rng(seed, "init", i);
      const fanIn = layer.kind === "dense" ? layer.inDim : layer.inC * layer.kh * layer.kw;
      rng.fillGauss(layer.w, Math.sqrt(2 / fanIn));
      layer.b.fill(0);
    });
  }

  toJSON(): NetCheckpoint {
    return {
      layers: this.layers.map((layer) =>
        layer.kind === "dense"
          ? { kind: "dense", in: layer.inDim, out: layer.outDim, relu: layer.relu }
          : {
              kind: "conv",
              inC: layer.inC,
              inH: layer.inH,
              inW: layer.inW,
              outC: layer.outC,
              kh: layer.kh,
              kw: layer.kw,
              relu: layer.relu,
            },
      ),
      params: Object.fromEntries(
        this.layers.flatMap((layer, i) => [
          [`w${i}`, Array.from(layer.w)],
          [`b${i}`, Array.from(layer.b)],
        ]),
      ),
    };
  }

  static fromJSON(doc: NetCheckpoint): Net {
    const layers = doc.layers.map((spec) => {
      if (spec.kind === "dense") return denseLayer(spec.in, spec.out, spec.relu);
      return convLayer(spec.inC, spec.inH, spec.inW, spec.outC, spec.kh, spec.kw, spec.relu);
    });
    const net = new Net(layers);
    net.layers.forEach((layer, i) => {
      const w = doc.params[`w${i}`];
      const b = doc.params[`b${i}`];
      if (!w || w.length !== layer.w.length || !b || b.length !== layer.b.length) {
        throw new Error(`checkpoint params for layer ${i} have wrong length`);
      }
      layer.w.set(w);
      layer.b.set(b);
    });
    return net;
  }
}

export interface DenseSpec {
  kind: "dense";
  in: number;
  out: number;
  relu: boolean;
}

export interface ConvSpec {
  kind: "conv";
  inC: number;
  inH: number;
  inW: number;
  outC: number;
  kh: number;
  kw: number;
  relu: boolean;
}

export interface NetCheckpoint {
  layers: Array<DenseSpec | ConvSpec>;
  params: Record<string, number[]>;
}

export { backwardInput, backwardParams };
