"""Model-dump data model, on-disk format, and the subset-sampling rule.

A dump is a directory: ``manifest.json`` plus one raw tensor file per entry
in the manifest's tensor table.  Tensor files are headerless little-endian
row-major arrays (float32, or int32 for labels); shape and dtype live in the
manifest, and each file carries a CRC-32C checksum so silent truncation or
bit rot surfaces as :class:`~kvmargin.errors.CorruptionError` instead of a
wrong number.

In memory everything is widened to float64/int64; writing narrows back.
Since float32 -> float64 -> float32 is lossless, write(load(x)) reproduces x
byte for byte.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from ._kernels import crc32c
from .errors import CorruptionError, IoError, SampleSizeError, SchemaError
from .jsonio import dumps_canonical
from .rngutil import child_seed, stream

__all__ = [
    "FORMAT_VERSION",
    "FeatureLayer",
    "ModelDump",
    "load_dump",
    "write_dump",
    "subsample",
    "class_partition",
    "subsample_size",
]

FORMAT_VERSION = 1

_GRADIENT_REFERENCES = ("feature_space", "input_space")
_RESAMPLE_ATTEMPTS = 16


@dataclass
class FeatureLayer:
    """One representation layer: ``features`` is (m, d)."""

    layer_id: str
    features: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


@dataclass
class ModelDump:
    """Everything the toolkit needs about one trained model.

    ``labels`` (m,), ``scores`` (m, K), per-layer feature matrices, and the
    two per-sample norm vectors used for gradient normalization and the
    Lipschitz-hat estimate.  ``gradient_reference`` records which space the
    dumped gradient norms were taken in; the toolkit consumes the numbers as
    given and never re-differentiates.
    """

    model_id: str
    num_classes: int
    labels: np.ndarray
    scores: np.ndarray
    layers: list[FeatureLayer]
    grad_feature_norms: dict[str, np.ndarray]
    jac_diff_norms: dict[str, np.ndarray]
    gradient_reference: str = "feature_space"
    weight_spectral_norms: np.ndarray | None = None
    mixup_accuracy: float | None = None
    gen_gap: float | None = None
    hyperparams: dict[str, str] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def sample_count(self) -> int:
        return int(self.labels.shape[0])

    def layer(self, layer_id: str) -> FeatureLayer:
        for layer in self.layers:
            if layer.layer_id == layer_id:
                return layer
        raise SchemaError(f"unknown layer {layer_id!r}; dump has {[l.layer_id for l in self.layers]}")

    def layer_ids(self) -> list[str]:
        return [layer.layer_id for layer in self.layers]

    def class_counts(self) -> dict[int, int]:
        """Occurrences of each class index present in ``labels``."""
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def validate(self) -> None:
        """Check every structural invariant; SchemaError names the field."""
        if self.format_version != FORMAT_VERSION:
            raise SchemaError(f"format_version: expected {FORMAT_VERSION}, got {self.format_version}")
        if not isinstance(self.model_id, str) or not self.model_id:
            raise SchemaError("model_id: must be a non-empty string")
        if int(self.num_classes) < 2:
            raise SchemaError(f"num_classes: must be >= 2, got {self.num_classes}")
        m = self.sample_count
        if m < 1:
            raise SchemaError("labels: dump must contain at least one sample")
        if self.labels.ndim != 1 or not np.issubdtype(self.labels.dtype, np.integer):
            raise SchemaError("labels: expected an integer vector")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise SchemaError(
                f"labels: values must lie in [0, {self.num_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )
        if self.scores.shape != (m, self.num_classes):
            raise SchemaError(f"scores: expected shape {(m, self.num_classes)}, got {self.scores.shape}")
        if not np.isfinite(self.scores).all():
            raise SchemaError("scores: non-finite values")
        if self.gradient_reference not in _GRADIENT_REFERENCES:
            raise SchemaError(
                f"gradient_reference: expected one of {_GRADIENT_REFERENCES}, got {self.gradient_reference!r}"
            )
        seen = set()
        for layer in self.layers:
            lid = layer.layer_id
            if not isinstance(lid, str) or not lid:
                raise SchemaError("layers: layer_id must be a non-empty string")
            if lid in seen:
                raise SchemaError(f"layers: duplicate layer_id {lid!r}")
            seen.add(lid)
            feats = layer.features
            if feats.ndim != 2 or feats.shape[0] != m or feats.shape[1] < 1:
                raise SchemaError(f"features[{lid}]: expected shape ({m}, d>=1), got {feats.shape}")
            if not np.isfinite(feats).all():
                raise SchemaError(f"features[{lid}]: non-finite values")
            for role, table in (
                ("grad_feature_norms", self.grad_feature_norms),
                ("jac_diff_norms", self.jac_diff_norms),
            ):
                if lid not in table:
                    raise SchemaError(f"{role}[{lid}]: missing")
                vec = table[lid]
                if vec.shape != (m,):
                    raise SchemaError(f"{role}[{lid}]: expected shape ({m},), got {vec.shape}")
                if not np.isfinite(vec).all() or (vec < 0).any():
                    raise SchemaError(f"{role}[{lid}]: entries must be finite and nonnegative")
        for role, table in (
            ("grad_feature_norms", self.grad_feature_norms),
            ("jac_diff_norms", self.jac_diff_norms),
        ):
            extra = set(table) - seen
            if extra:
                raise SchemaError(f"{role}: entries for unknown layers {sorted(extra)}")
        for name, value in (("mixup_accuracy", self.mixup_accuracy), ("gen_gap", self.gen_gap)):
            if value is not None and not (0.0 <= float(value) <= 1.0):
                raise SchemaError(f"{name}: must lie in [0, 1], got {value}")
        if self.weight_spectral_norms is not None:
            wsn = np.asarray(self.weight_spectral_norms, dtype=np.float64)
            if wsn.ndim != 1 or not np.isfinite(wsn).all() or (wsn < 0).any():
                raise SchemaError("weight_spectral_norms: expected finite nonnegative vector")
        for key, value in self.hyperparams.items():
            if not isinstance(key, str) or not isinstance(value, str):
                raise SchemaError(f"hyperparams: keys and values must be strings, got {key!r}: {value!r}")


def _coerce(dump: ModelDump) -> ModelDump:
    """Widen tensors to the in-memory dtypes before validation."""
    dump.labels = np.asarray(dump.labels, dtype=np.int64)
    dump.scores = np.asarray(dump.scores, dtype=np.float64)
    for layer in dump.layers:
        layer.features = np.asarray(layer.features, dtype=np.float64)
    dump.grad_feature_norms = {k: np.asarray(v, dtype=np.float64) for k, v in dump.grad_feature_norms.items()}
    dump.jac_diff_norms = {k: np.asarray(v, dtype=np.float64) for k, v in dump.jac_diff_norms.items()}
    if dump.weight_spectral_norms is not None:
        dump.weight_spectral_norms = np.asarray(dump.weight_spectral_norms, dtype=np.float64)
    return dump


# ---------------------------------------------------------------------------
# on-disk format


def _tensor_entries(dump: ModelDump):
    """The tensor table in canonical order: labels, scores, then per layer."""
    yield "labels", "labels", dump.labels, np.int32, "labels.bin"
    yield "scores", "scores", dump.scores, np.float32, "scores.bin"
    for idx, layer in enumerate(dump.layers):
        yield layer.layer_id, "features", layer.features, np.float32, f"features_{idx}.bin"
        yield layer.layer_id, "grad_feature_norms", dump.grad_feature_norms[
            layer.layer_id
        ], np.float32, f"gradnorms_{idx}.bin"
        yield layer.layer_id, "jac_diff_norms", dump.jac_diff_norms[
            layer.layer_id
        ], np.float32, f"jacnorms_{idx}.bin"


def write_dump(dump: ModelDump, path: str | os.PathLike) -> None:
    """Serialize a validated dump to ``path`` (created if needed)."""
    dump = _coerce(dump)
    dump.validate()
    os.makedirs(path, exist_ok=True)
    table = []
    for name, role, array, disk_dtype, filename in _tensor_entries(dump):
        raw = np.ascontiguousarray(array, dtype=disk_dtype)
        if raw.dtype.byteorder == ">":  # pragma: no cover - big-endian hosts only
            raw = raw.byteswap()
        payload = raw.tobytes()
        with open(os.path.join(path, filename), "wb") as fh:
            fh.write(payload)
        table.append(
            {
                "name": name,
                "role": role,
                "shape": list(array.shape),
                "dtype": np.dtype(disk_dtype).name,
                "file": filename,
                "crc32c": crc32c(payload),
            }
        )
    manifest = {
        "format_version": dump.format_version,
        "model_id": dump.model_id,
        "K": int(dump.num_classes),
        "m": dump.sample_count,
        "gradient_reference": dump.gradient_reference,
        "hyperparams": dict(dump.hyperparams),
        "tensors": table,
        "mixup_accuracy": dump.mixup_accuracy,
        "gen_gap": dump.gen_gap,
        "weight_spectral_norms": None
        if dump.weight_spectral_norms is None
        else list(dump.weight_spectral_norms),
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(manifest))


def _read_tensor(path: str, entry: dict) -> np.ndarray:
    for key in ("name", "role", "shape", "dtype", "file", "crc32c"):
        if key not in entry:
            raise SchemaError(f"tensors: entry missing key {key!r}")
    filename = os.path.join(path, entry["file"])
    if not os.path.isfile(filename):
        raise IoError(f"missing tensor file {entry['file']!r}")
    dtype = np.dtype(entry["dtype"]).newbyteorder("<")
    shape = tuple(int(s) for s in entry["shape"])
    expected = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
    with open(filename, "rb") as fh:
        payload = fh.read()
    if len(payload) != expected:
        raise CorruptionError(
            f"{entry['file']}: expected {expected} bytes for shape {shape} {dtype.name}, got {len(payload)}"
        )
    if crc32c(payload) != int(entry["crc32c"]):
        raise CorruptionError(f"{entry['file']}: CRC-32C mismatch")
    return np.frombuffer(payload, dtype=dtype).reshape(shape)


def load_dump(path: str | os.PathLike) -> ModelDump:
    """Read, checksum-verify, and fully validate a dump directory."""
    path = os.fspath(path)
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise IoError(f"no manifest.json under {path!r}")
    import json

    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"manifest.json: invalid JSON ({exc})") from exc
    for key in ("format_version", "model_id", "K", "m", "gradient_reference", "hyperparams", "tensors"):
        if key not in manifest:
            raise SchemaError(f"manifest.json: missing key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"format_version: expected {FORMAT_VERSION}, got {manifest['format_version']}")

    labels = scores = None
    layers: list[FeatureLayer] = []
    grad_norms: dict[str, np.ndarray] = {}
    jac_norms: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        array = _read_tensor(path, entry)
        role = entry["role"]
        if role == "labels":
            labels = array
        elif role == "scores":
            scores = array
        elif role == "features":
            layers.append(FeatureLayer(layer_id=entry["name"], features=array))
        elif role == "grad_feature_norms":
            grad_norms[entry["name"]] = array
        elif role == "jac_diff_norms":
            jac_norms[entry["name"]] = array
        else:
            raise SchemaError(f"tensors: unknown role {role!r}")
    if labels is None:
        raise SchemaError("tensors: no labels entry")
    if scores is None:
        raise SchemaError("tensors: no scores entry")

    wsn = manifest.get("weight_spectral_norms")
    dump = ModelDump(
        model_id=manifest["model_id"],
        num_classes=int(manifest["K"]),
        labels=labels,
        scores=scores,
        layers=layers,
        grad_feature_norms=grad_norms,
        jac_diff_norms=jac_norms,
        gradient_reference=manifest["gradient_reference"],
        weight_spectral_norms=None if wsn is None else np.asarray(wsn, dtype=np.float64),
        mixup_accuracy=manifest.get("mixup_accuracy"),
        gen_gap=manifest.get("gen_gap"),
        hyperparams=dict(manifest["hyperparams"]),
        format_version=int(manifest["format_version"]),
    )
    dump = _coerce(dump)
    if dump.sample_count != int(manifest["m"]):
        raise SchemaError(f"m: manifest says {manifest['m']}, labels have {dump.sample_count}")
    dump.validate()
    return dump


# ---------------------------------------------------------------------------
# sampling


def subsample_size(num_classes: int, sample_count: int) -> int:
    """The evaluation subset size: min(200 * K, m)."""
    return min(200 * int(num_classes), int(sample_count))


def _slice_rows(dump: ModelDump, rows: np.ndarray) -> ModelDump:
    return ModelDump(
        model_id=dump.model_id,
        num_classes=dump.num_classes,
        labels=dump.labels[rows],
        scores=dump.scores[rows],
        layers=[FeatureLayer(l.layer_id, l.features[rows]) for l in dump.layers],
        grad_feature_norms={k: v[rows] for k, v in dump.grad_feature_norms.items()},
        jac_diff_norms={k: v[rows] for k, v in dump.jac_diff_norms.items()},
        gradient_reference=dump.gradient_reference,
        weight_spectral_norms=dump.weight_spectral_norms,
        mixup_accuracy=dump.mixup_accuracy,
        gen_gap=dump.gen_gap,
        hyperparams=dict(dump.hyperparams),
        format_version=dump.format_version,
    )


def _stratified_rows(dump: ModelDump, size: int, rng: np.random.Generator) -> np.ndarray:
    """Per-class proportional allocation, largest remainders, >= 2 where possible."""
    m = dump.sample_count
    counts = dump.class_counts()
    classes = sorted(counts)
    quotas = {c: size * counts[c] / m for c in classes}
    alloc = {c: min(counts[c], max(2, int(quotas[c]))) if counts[c] >= 2 else counts[c] for c in classes}
    total = sum(alloc.values())
    remainders = sorted(classes, key=lambda c: (quotas[c] - int(quotas[c]), c), reverse=True)
    idx = 0
    while total < size and idx < 4 * len(classes):
        c = remainders[idx % len(classes)]
        if alloc[c] < counts[c]:
            alloc[c] += 1
            total += 1
        idx += 1
    while total > size:
        # trim the most over-allocated classes, never below 2
        c = max(classes, key=lambda c: (alloc[c] - quotas[c], c))
        if alloc[c] <= min(2, counts[c]):
            break
        alloc[c] -= 1
        total -= 1
    chosen = []
    for c in classes:
        rows_c = np.flatnonzero(dump.labels == c)
        take = rng.choice(rows_c.size, size=alloc[c], replace=False)
        chosen.append(rows_c[take])
    return np.sort(np.concatenate(chosen))


def subsample(dump: ModelDump, seed: int, *, stratified: bool = False) -> ModelDump:
    """Uniform without-replacement row sample of size min(200K, m).

    Plain mode matches the evaluation protocol: classes land where they may.
    If that leaves a class with a single row (it had at least two before),
    the draw is retried with the next derived seed, up to 16 attempts.
    ``stratified`` switches to proportional per-class allocation instead.
    """
    m = dump.sample_count
    size = subsample_size(dump.num_classes, m)
    if size == m:
        return _slice_rows(dump, np.arange(m))
    before = dump.class_counts()
    if stratified:
        rng = stream(seed, "stratified")
        return _slice_rows(dump, _stratified_rows(dump, size, rng))
    for attempt in range(_RESAMPLE_ATTEMPTS):
        rng = stream(child_seed(seed, attempt), "subsample")
        rows = np.sort(rng.choice(m, size=size, replace=False))
        sub = dump.labels[rows]
        values, counts = np.unique(sub, return_counts=True)
        after = dict(zip(values.tolist(), counts.tolist()))
        depleted = [c for c, n0 in before.items() if n0 >= 2 and after.get(c, 0) < 2]
        if not depleted:
            return _slice_rows(dump, rows)
    raise SampleSizeError(
        f"subsampling to {size} rows kept depleting a class below 2 samples "
        f"after {_RESAMPLE_ATTEMPTS} attempts"
    )


def class_partition(dump: ModelDump, layer_id: str) -> dict[int, np.ndarray]:
    """Feature rows grouped by label, original order kept within groups."""
    features = dump.layer(layer_id).features
    out: dict[int, np.ndarray] = {}
    for c in sorted(int(v) for v in np.unique(dump.labels)):
        out[c] = features[dump.labels == c]
    return out


def class_indices(dump: ModelDump) -> dict[int, np.ndarray]:
    """Row indices per present class, ascending."""
    return {int(c): np.flatnonzero(dump.labels == c) for c in np.unique(dump.labels)}
