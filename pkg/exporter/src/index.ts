export { Rng } from "./rng.js";
export { crc32c } from "./crc32c.js";
export {
  Net,
  denseLayer,
  convLayer,
  applyLinear,
  applyAdjoint,
  norm2,
  type Layer,
  type NetCheckpoint,
} from "./nets.js";
export { trainSgd, accuracy, softmax, type Dataset, type TrainOptions } from "./train.js";
export { mixupAccuracy, type MixupOptions } from "./mixup.js";
export { writeDump, type DumpTensors, type DumpLayer } from "./dump.js";
export {
  exportDump,
  selectLayers,
  rawMargins,
  gnJacobianNorms,
  type ExportSpec,
  type ExportResult,
} from "./export.js";
export { loadDataset, gaussianBlobs, blobImages } from "./data.js";
