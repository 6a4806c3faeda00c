import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { crc32c } from "../src/crc32c.js";
import { DumpTensors, writeDump } from "../src/dump.js";

const scratch = fs.mkdtempSync(path.join(os.tmpdir(), "dumptest-"));
afterAll(() => fs.rmSync(scratch, { recursive: true, force: true }));

function tinyDump(): DumpTensors {
  return {
    modelId: "tiny",
    numClasses: 2,
    labels: Int32Array.from([0, 1, 0]),
    scores: Float32Array.from([1, -1, -0.5, 0.5, 2, 0]),
    layers: [
      {
        layerId: "dense1",
        dim: 2,
        features: Float32Array.from([1, 2, 3, 4, 5, 6]),
        gradNorms: Float32Array.from([1, 1, 1]),
        jacNorms: Float32Array.from([1, 1, 1]),
      },
    ],
    hyperparams: { lr: "0.1" },
    mixupAccuracy: 0.75,
    genGap: 0.2,
    weightSpectralNorms: [1.5, 2.0],
    droppedSamples: 0,
  };
}

describe("writeDump", () => {
  it("writes the manifest and correctly checksummed little-endian tensors", () => {
    const out = path.join(scratch, "basic");
    writeDump(tinyDump(), out);

    const manifest = JSON.parse(fs.readFileSync(path.join(out, "manifest.json"), "utf-8"));
    expect(manifest.format_version).toBe(1);
    expect(manifest.K).toBe(2);
    expect(manifest.m).toBe(3);
    expect(manifest.gradient_reference).toBe("feature_space");
    expect(manifest.mixup_accuracy).toBe(0.75);
    expect(manifest.gen_gap).toBe(0.2);
    expect(manifest.weight_spectral_norms).toEqual([1.5, 2.0]);
    expect(manifest.tensors.map((t: { role: string }) => t.role)).toEqual([
      "labels",
      "scores",
      "features",
      "grad_feature_norms",
      "jac_diff_norms",
    ]);

    for (const entry of manifest.tensors) {
      const payload = fs.readFileSync(path.join(out, entry.file));
      const count = entry.shape.reduce((a: number, b: number) => a * b, 1);
      expect(payload.length).toBe(count * 4);
      expect(crc32c(payload)).toBe(entry.crc32c);
    }

    // labels really are little-endian int32
    const labels = fs.readFileSync(path.join(out, "labels.bin"));
    expect(labels.readInt32LE(0)).toBe(0);
    expect(labels.readInt32LE(4)).toBe(1);
    expect(labels.readInt32LE(8)).toBe(0);

    const scores = fs.readFileSync(path.join(out, "scores.bin"));
    expect(scores.readFloatLE(0)).toBeCloseTo(1, 6);
    expect(scores.readFloatLE(4)).toBeCloseTo(-1, 6);
  });

  it("publishes atomically: no temp directory survives, overwrite works", () => {
    const out = path.join(scratch, "atomic");
    writeDump(tinyDump(), out);
    const second = tinyDump();
    second.modelId = "tiny-2";
    writeDump(second, out);
    const manifest = JSON.parse(fs.readFileSync(path.join(out, "manifest.json"), "utf-8"));
    expect(manifest.model_id).toBe("tiny-2");
    const leftovers = fs.readdirSync(scratch).filter((name) => name.includes(".tmp-"));
    expect(leftovers).toEqual([]);
  });

  it("rejects inconsistent shapes", () => {
    const bad = tinyDump();
    bad.scores = Float32Array.from([1, 2]);
    expect(() => writeDump(bad, path.join(scratch, "bad"))).toThrow(/scores length/);

    const badLayer = tinyDump();
    badLayer.layers[0].gradNorms = Float32Array.from([1]);
    expect(() => writeDump(badLayer, path.join(scratch, "bad2"))).toThrow(/length m=3/);
  });
});
