/**
 * Dump directory writer.
 *
 * Layout contract (shared with the analysis package, which verifies it on
 * load): manifest.json plus one raw little-endian tensor file per entry,
 * row-major, no header.  labels.bin is int32; scores, per-layer features
 * and the two gradient-norm vectors are float32.  The manifest carries
 * shape, dtype, file name and a CRC-32C for every tensor.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { crc32c } from "./crc32c.js";

export interface DumpLayer {
  layerId: string;
  dim: number;
  features: Float32Array; // m * dim
  gradNorms: Float32Array; // m
  jacNorms: Float32Array; // m
}

export interface DumpTensors {
  modelId: string;
  numClasses: number;
  labels: Int32Array;
  scores: Float32Array; // m * numClasses
  layers: DumpLayer[];
  hyperparams: Record<string, string>;
  mixupAccuracy: number | null;
  genGap: number | null;
  weightSpectralNorms: number[] | null;
  droppedSamples: number;
}

interface TensorEntry {
  name: string;
  role: string;
  shape: number[];
  dtype: "int32" | "float32";
  file: string;
  crc32c: number;
}

function encodeInt32(values: Int32Array): Uint8Array {
  const buf = new Uint8Array(values.length * 4);
  const view = new DataView(buf.buffer);
  for (let i = 0; i < values.length; i++) view.setInt32(i * 4, values[i], true);
  return buf;
}

function encodeFloat32(values: Float32Array): Uint8Array {
  const buf = new Uint8Array(values.length * 4);
  const view = new DataView(buf.buffer);
  for (let i = 0; i < values.length; i++) view.setFloat32(i * 4, values[i], true);
  return buf;
}

function sortedStringify(value: unknown, indent: string, level: number): string {
  if (value === null) return "null";
  if (Array.isArray(value)) {
    if (value.length === 0) return "[]";
    const inner = value.map((v) => indent.repeat(level + 1) + sortedStringify(v, indent, level + 1));
    return "[\n" + inner.join(",\n") + "\n" + indent.repeat(level) + "]";
  }
  if (typeof value === "object") {
    const keys = Object.keys(value as Record<string, unknown>).sort();
    if (keys.length === 0) return "{}";
    const inner = keys.map(
      (k) =>
        indent.repeat(level + 1) +
        JSON.stringify(k) +
        ": " +
        sortedStringify((value as Record<string, unknown>)[k], indent, level + 1),
    );
    return "{\n" + inner.join(",\n") + "\n" + indent.repeat(level) + "}";
  }
  return JSON.stringify(value);
}

/** Writes into a temp directory, then renames over the target (atomic publish). */
export function writeDump(dump: DumpTensors, outPath: string): void {
  const m = dump.labels.length;
  if (dump.scores.length !== m * dump.numClasses) {
    throw new Error(`scores length ${dump.scores.length} != m*K = ${m * dump.numClasses}`);
  }
  for (const layer of dump.layers) {
    if (layer.features.length !== m * layer.dim) {
      throw new Error(`features[${layer.layerId}] length != m*dim`);
    }
    if (layer.gradNorms.length !== m || layer.jacNorms.length !== m) {
      throw new Error(`norm vectors for ${layer.layerId} must have length m=${m}`);
    }
  }

  const tmp = `${outPath}.tmp-${process.pid}`;
  fs.rmSync(tmp, { recursive: true, force: true });
  fs.mkdirSync(tmp, { recursive: true });

  const table: TensorEntry[] = [];
  const emit = (
    name: string,
    role: string,
    shape: number[],
    dtype: "int32" | "float32",
    file: string,
    payload: Uint8Array,
  ) => {
    fs.writeFileSync(path.join(tmp, file), payload);
    table.push({ name, role, shape, dtype, file, crc32c: crc32c(payload) });
  };

  emit("labels", "labels", [m], "int32", "labels.bin", encodeInt32(dump.labels));
  emit("scores", "scores", [m, dump.numClasses], "float32", "scores.bin", encodeFloat32(dump.scores));
  dump.layers.forEach((layer, i) => {
    emit(layer.layerId, "features", [m, layer.dim], "float32", `features_${i}.bin`, encodeFloat32(layer.features));
    emit(layer.layerId, "grad_feature_norms", [m], "float32", `gradnorms_${i}.bin`, encodeFloat32(layer.gradNorms));
    emit(layer.layerId, "jac_diff_norms", [m], "float32", `jacnorms_${i}.bin`, encodeFloat32(layer.jacNorms));
  });

  const manifest = {
    format_version: 1,
    model_id: dump.modelId,
    K: dump.numClasses,
    m,
    gradient_reference: "feature_space",
    hyperparams: dump.hyperparams,
    tensors: table,
    mixup_accuracy: dump.mixupAccuracy,
    gen_gap: dump.genGap,
    weight_spectral_norms: dump.weightSpectralNorms,
    dropped_samples: dump.droppedSamples,
  };
  fs.writeFileSync(path.join(tmp, "manifest.json"), sortedStringify(manifest, "  ", 0) + "\n");

  fs.rmSync(outPath, { recursive: true, force: true });
  fs.renameSync(tmp, outPath);
}
