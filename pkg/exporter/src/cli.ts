#!/usr/bin/env node
/**
 * kvdump-export export --model ckpt.json --data data.json --layers auto --out dir
 *
 * The model is a "builtin" checkpoint: the JSON emitted by Net.toJSON
 * (layer specs plus flat parameter arrays).  Writes a dump directory the
 * analysis CLI accepts, prints a one-line JSON summary on stdout.
 */

import * as fs from "node:fs";
import { parseArgs } from "node:util";

import { Net, NetCheckpoint } from "./nets.js";
import { loadDataset } from "./data.js";
import { exportDump } from "./export.js";
import { mixupAccuracy } from "./mixup.js";

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`);
  console.error(
    "usage: kvdump-export export --model ckpt.json --data data.json " +
      "--layers auto|id1,id2 --out dir [--seed N] [--model-id ID] " +
      "[--gen-gap X] [--mixup] [--spectral]",
  );
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv[0] !== "export") usage(argv.length ? `unknown command ${argv[0]}` : undefined);
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        model: { type: "string" },
        data: { type: "string" },
        layers: { type: "string", default: "auto" },
        out: { type: "string" },
        seed: { type: "string", default: "0" },
        "model-id": { type: "string" },
        "gen-gap": { type: "string" },
        mixup: { type: "boolean", default: false },
        spectral: { type: "boolean", default: false },
      },
    });
  } catch (err) {
    usage((err as Error).message);
  }
  const opts = parsed.values;
  if (!opts.model || !opts.data || !opts.out) usage("--model, --data and --out are required");
  const seed = Number(opts.seed);
  if (!Number.isInteger(seed)) usage(`--seed must be an integer, got ${opts.seed}`);
  const genGap = opts["gen-gap"] === undefined ? null : Number(opts["gen-gap"]);
  if (genGap !== null && !(genGap >= 0 && genGap <= 1)) usage("--gen-gap must lie in [0, 1]");

  const checkpoint = JSON.parse(fs.readFileSync(opts.model, "utf-8")) as NetCheckpoint;
  const net = Net.fromJSON(checkpoint);
  const data = loadDataset(opts.data);

  const result = exportDump(
    net,
    data,
    {
      modelId: opts["model-id"] ?? opts.model.replace(/\.[^.]*$/, ""),
      layers: opts.layers === "auto" ? "auto" : opts.layers.split(","),
      seed,
      genGap,
      mixupAccuracy: opts.mixup ? mixupAccuracy(net, data, seed) : null,
      spectralNorms: opts.spectral,
    },
    opts.out,
  );
  console.log(JSON.stringify({ out: result.path, kept: result.kept, dropped: result.dropped }));
  return 0;
}

const entry = process.argv[1];
if (entry && (entry.endsWith("cli.js") || entry.endsWith("kvdump-export"))) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    process.exit(1);
  }
}
