import { describe, expect, it } from "vitest";

import {
  Net,
  applyLinear,
  backwardParams,
  convLayer,
  denseLayer,
  norm2,
} from "../src/nets.js";
import { Rng } from "../src/rng.js";

function dot(a: Float64Array, b: Float64Array): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) s += a[i] * b[i];
  return s;
}

/** seed . scores as a function of the input, for finite differences. */
function scalarHead(net: Net, seed: Float64Array): (x: Float64Array) => number {
  return (x) => dot(net.scores(x), seed);
}

function numericalGrad(f: (x: Float64Array) => number, x: Float64Array, eps = 1e-5): Float64Array {
  const g = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    const saved = x[i];
    x[i] = saved + eps;
    const up = f(x);
    x[i] = saved - eps;
    const down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

function randomDenseNet(seed: number): Net {
  const net = new Net([denseLayer(6, 10, true), denseLayer(10, 8, true), denseLayer(8, 3, false)]);
  net.initHe(seed);
  return net;
}

function randomConvNet(seed: number): Net {
  const net = new Net([
    convLayer(1, 6, 6, 2, 3, 3, true), // -> 2 x 4 x 4
    convLayer(2, 4, 4, 3, 3, 3, true), // -> 3 x 2 x 2
    denseLayer(12, 3, false),
  ]);
  net.initHe(seed);
  return net;
}

describe("feature gradients against finite differences", () => {
  for (const [name, make] of [
    ["dense", randomDenseNet],
    ["conv", randomConvNet],
  ] as const) {
    it(`${name} net, every non-score layer`, () => {
      const net = make(11);
      const rng = new Rng(5, "fd", name);
      for (let layerIdx = 0; layerIdx < net.layers.length - 1; layerIdx++) {
        const x = rng.fillGauss(new Float64Array(net.inDim));
        const trace = net.forward(x);
        const phi = trace.acts[layerIdx + 1];
        const seed = rng.fillGauss(new Float64Array(net.numClasses));
        const got = net.featureGradient(trace, layerIdx, seed);

        // numerical: perturb the features and rerun only the layers above
        const head = new Net(net.layers.slice(layerIdx + 1));
        const want = numericalGrad(scalarHead(head, seed), Float64Array.from(phi));
        for (let i = 0; i < got.length; i++) {
          expect(Math.abs(got[i] - want[i])).toBeLessThan(1e-6);
        }
      }
    });
  }
});

describe("parameter gradients against finite differences", () => {
  it("dense and conv backwardParams", () => {
    for (const make of [randomDenseNet, randomConvNet]) {
      const net = make(3);
      const rng = new Rng(9, "params");
      const x = rng.fillGauss(new Float64Array(net.inDim));
      const seed = rng.fillGauss(new Float64Array(net.numClasses));
      const f = scalarHead(net, seed);

      // analytic: full backward pass accumulating per-layer grads
      const gws = net.layers.map((l) => new Float64Array(l.w.length));
      const gbs = net.layers.map((l) => new Float64Array(l.b.length));
      const trace = net.forward(x);
      let g: Float64Array = Float64Array.from(seed);
      for (let i = net.layers.length - 1; i >= 0; i--) {
        backwardParams(net.layers[i], g, trace.pres[i], trace.acts[i], gws[i], gbs[i]);
        if (i > 0) g = net.featureGradient(trace, i - 1, seed);
      }

      for (let li = 0; li < net.layers.length; li++) {
        const layer = net.layers[li];
        const probeW = [0, Math.floor(layer.w.length / 2), layer.w.length - 1];
        for (const j of probeW) {
          const saved = layer.w[j];
          const eps = 1e-5;
          layer.w[j] = saved + eps;
          const up = f(x);
          layer.w[j] = saved - eps;
          const down = f(x);
          layer.w[j] = saved;
          expect(Math.abs(gws[li][j] - (up - down) / (2 * eps))).toBeLessThan(1e-5);
        }
        const saved = layer.b[0];
        const eps = 1e-5;
        layer.b[0] = saved + eps;
        const up = f(x);
        layer.b[0] = saved - eps;
        const down = f(x);
        layer.b[0] = saved;
        expect(Math.abs(gbs[li][0] - (up - down) / (2 * eps))).toBeLessThan(1e-5);
      }
    }
  });
});

describe("runner-up selection", () => {
  it("takes the best non-true class, smallest index on ties", () => {
    const net = randomDenseNet(0);
    expect(net.runnerUp(Float64Array.from([1, 5, 5, 2]), 3)).toBe(1);
    expect(net.runnerUp(Float64Array.from([1, 5, 5, 2]), 1)).toBe(2);
    expect(net.runnerUp(Float64Array.from([9, 1, 1, 1]), 0)).toBe(1);
  });
});

describe("spectral norm", () => {
  it("diagonal dense layer gives max |entry|", () => {
    const layer = denseLayer(3, 3, false);
    layer.w.set([3, 0, 0, 0, -7, 0, 0, 0, 2]);
    const net = new Net([layer]);
    expect(net.spectralNorm(0)).toBeCloseTo(7, 9);
  });

  it("rank-one dense layer gives ||u|| * ||v||", () => {
    const rng = new Rng(4, "rank1");
    const u = rng.fillGauss(new Float64Array(5));
    const v = rng.fillGauss(new Float64Array(4));
    const layer = denseLayer(4, 5, false);
    for (let o = 0; o < 5; o++) {
      for (let i = 0; i < 4; i++) layer.w[o * 4 + i] = u[o] * v[i];
    }
    const net = new Net([layer]);
    expect(net.spectralNorm(0)).toBeCloseTo(norm2(u) * norm2(v), 7);
  });

  it("1x1 single-channel conv is |w| (operator is w * identity)", () => {
    const layer = convLayer(1, 4, 4, 1, 1, 1, false);
    layer.w[0] = -2.5;
    const net = new Net([layer]);
    expect(net.spectralNorm(0)).toBeCloseTo(2.5, 9);
  });
});

describe("checkpoint round trip", () => {
  it("fromJSON(toJSON) reproduces scores exactly", () => {
    const net = randomConvNet(8);
    const clone = Net.fromJSON(JSON.parse(JSON.stringify(net.toJSON())));
    const rng = new Rng(1, "ckpt");
    const x = rng.fillGauss(new Float64Array(net.inDim));
    expect(Array.from(clone.scores(x))).toEqual(Array.from(net.scores(x)));
  });

  it("rejects mismatched parameter lengths", () => {
    const doc = randomDenseNet(0).toJSON();
    doc.params.w0 = doc.params.w0.slice(1);
    expect(() => Net.fromJSON(doc)).toThrow(/wrong length/);
  });
});

describe("layer plumbing", () => {
  it("checks adjacent dims", () => {
    expect(() => new Net([denseLayer(4, 5, true), denseLayer(6, 2, false)])).toThrow(/expects 6/);
  });

  it("applyLinear of a conv matches a hand conv on a 2x2 kernel", () => {
    const layer = convLayer(1, 3, 3, 1, 2, 2, false);
    layer.w.set([1, 2, 3, 4]);
    const x = Float64Array.from([1, 0, 0, 0, 1, 0, 0, 0, 1]);
    // windows row-major: [[1,0],[0,1]] -> 1+4=5 ; [[0,0],[1,0]] -> 3 ; [[0,1],[0,0]] -> 2 ; [[1,0],[0,1]] -> 5
    expect(Array.from(applyLinear(layer, x))).toEqual([5, 3, 2, 5]);
  });

  it("layer ids are kind-prefixed positions", () => {
    const net = randomConvNet(0);
    expect(net.layerIds()).toEqual(["conv1", "conv2", "dense3"]);
    expect(net.layerIndex("conv2")).toBe(1);
    expect(() => net.layerIndex("pool9")).toThrow(/no layer/);
  });
});
