"""Command-line surface: validate dumps, measure margins, rank collections.

Exit-code contract: 0 success, 1 data or validation failure, 2 usage error,
3 internal assertion failure (including failed synth checks).  Reports go
to stdout as canonical JSON (sorted keys, 17-significant-digit floats) so a
fixed seed produces byte-identical output; timing and warnings go to
stderr.  Batch work runs on a thread pool capped by KV_MARGIN_THREADS
(default 4) and results always follow input order.
"""

import functools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .errors import KvmError, SchemaError
from .ingest import FORMAT_VERSION, ModelDump, load_dump, subsample
from .jsonio import csv_cell, dumps_canonical
from .margins import (
    MARGIN_KINDS,
    MarginDistribution,
    gn_margin_distribution,
    kv_gn_margin_distribution,
    kv_margin_distribution,
    raw_margin_distribution,
    sn_margin_distribution,
    summarize,
    tv_gn_margin_distribution,
)
from .rngutil import child_seed
from .scoring import ModelPoint, cmi_score, kendall_tau, mixup_combine
from .synthgen import SYNTH_CHECKS

__all__ = ["main"]

_STATISTICS = ("median", "mean", "quantile")


def _max_workers() -> int:
    raw = os.environ.get("KV_MARGIN_THREADS", "")
    if not raw:
        return 4
    try:
        return max(1, int(raw))
    except ValueError:
        raise click.UsageError(f"KV_MARGIN_THREADS must be an integer, got {raw!r}")


def _guarded(fn):
    """Map exceptions to the exit-code contract; the callback returns a code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        started = time.perf_counter()
        try:
            code = fn(*args, **kwargs)
        except click.ClickException:
            raise
        except KvmError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            raise SystemExit(1)
        except Exception as exc:
            click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
            raise SystemExit(3)
        click.echo(f"{fn.__name__}: {time.perf_counter() - started:.3f}s", err=True)
        raise SystemExit(code)

    return wrapper


def _emit(report: dict) -> None:
    click.echo(dumps_canonical(report), nl=False)


@click.group()
def main():
    """Optimal-transport margin measures for model feature dumps."""


# ---------------------------------------------------------------------------
# validate


@main.command("validate")
@click.argument("paths", nargs=-1, type=click.Path())
@_guarded
def cmd_validate(paths):
    """Load and fully check one or more dump directories."""
    if not paths:
        raise click.UsageError("at least one dump path is required")

    def probe(path: str) -> dict:
        try:
            dump = load_dump(path)
        except KvmError as exc:
            return {
                "path": path,
                "valid": False,
                "error": {"type": type(exc).__name__, "message": str(exc)},
            }
        return {
            "path": path,
            "valid": True,
            "model_id": dump.model_id,
            "samples": dump.sample_count,
            "classes": dump.num_classes,
            "layers": dump.layer_ids(),
        }

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        results = list(pool.map(probe, paths))
    _emit(
        {
            "command": "validate",
            "format_version": FORMAT_VERSION,
            "dumps": results,
        }
    )
    return 0 if all(r["valid"] for r in results) else 1


# ---------------------------------------------------------------------------
# measure


def _distribution(dump: ModelDump, kind: str, layer_id: str, seed: int) -> MarginDistribution:
    if kind == "raw":
        return raw_margin_distribution(dump)
    if kind == "sn":
        if dump.weight_spectral_norms is None:
            raise SchemaError("sn margins need weight_spectral_norms in the dump")
        complexity = float(dump.weight_spectral_norms.prod())
        return sn_margin_distribution(dump, complexity)
    if kind == "gn":
        return gn_margin_distribution(dump, layer_id)
    if kind == "tv_gn":
        return tv_gn_margin_distribution(dump, layer_id)
    if kind == "kv":
        return kv_margin_distribution(dump, layer_id, child_seed(seed, "kv", layer_id))
    return kv_gn_margin_distribution(dump, layer_id, child_seed(seed, "kv_gn", layer_id))


def _measure_rows(dump: ModelDump, kinds, layers, statistic: str, q, seed: int) -> list[dict]:
    rows = []
    for kind in kinds:
        targets = [""] if kind in ("raw", "sn") else layers
        for layer_id in targets:
            dist = _distribution(dump, kind, layer_id, seed)
            rows.append(
                {
                    "kind": kind,
                    "layer": layer_id,
                    "statistic": statistic,
                    "value": summarize(dist, statistic, q=q),
                    "count": int(dist.values.size),
                    "params": dist.params,
                }
            )
    return rows


@main.command("measure")
@click.argument("path", type=click.Path())
@click.option("--layers", default="", help="Comma-separated layer ids (default: all in the dump).")
@click.option("--kinds", default="raw", help=f"Comma-separated kinds from {', '.join(MARGIN_KINDS)}.")
@click.option("--statistic", type=click.Choice(_STATISTICS), default="median")
@click.option("--q", type=float, default=None, help="Level for --statistic=quantile.")
@click.option("--seed", type=int, default=0)
@click.option("--subsample", "do_subsample", is_flag=True, help="Apply the min(200K, m) row subsample.")
@click.option("--stratified", is_flag=True, help="Proportional per-class subsample allocation.")
@click.option("--json", "fmt", flag_value="json", default=True, help="JSON report (default).")
@click.option("--csv", "fmt", flag_value="csv", help="CSV scalar table instead of JSON.")
@_guarded
def cmd_measure(path, layers, kinds, statistic, q, seed, do_subsample, stratified, fmt):
    """Compute margin summaries for one dump."""
    kinds = tuple(k.strip() for k in kinds.split(",") if k.strip())
    bad = [k for k in kinds if k not in MARGIN_KINDS]
    if bad or not kinds:
        raise click.UsageError(f"--kinds must name kinds from {MARGIN_KINDS}, got {bad or kinds}")
    if statistic == "quantile" and q is None:
        raise click.UsageError("--statistic=quantile requires --q")
    if stratified and not do_subsample:
        raise click.UsageError("--stratified only applies together with --subsample")

    dump = load_dump(path)
    if do_subsample:
        dump = subsample(dump, child_seed(seed, "subsample"), stratified=stratified)
    layer_list = [l.strip() for l in layers.split(",") if l.strip()] or dump.layer_ids()
    rows = _measure_rows(dump, kinds, layer_list, statistic, q, seed)

    if fmt == "csv":
        lines = ["kind,layer,statistic,value,count"]
        for row in rows:
            cells = [row["kind"], row["layer"], row["statistic"], row["value"], row["count"]]
            lines.append(",".join(csv_cell(c) for c in cells))
        click.echo("\n".join(lines))
    else:
        _emit(
            {
                "command": "measure",
                "format_version": FORMAT_VERSION,
                "model_id": dump.model_id,
                "seed": seed,
                "statistic": statistic if q is None else f"{statistic}:{q}",
                "subsample": {
                    "applied": bool(do_subsample),
                    "stratified": bool(stratified),
                    "rows": dump.sample_count,
                },
                "measures": rows,
            }
        )
    return 0


# ---------------------------------------------------------------------------
# rank


def _collection_dirs(collection_dir: str) -> list[Path]:
    root = Path(collection_dir)
    if not root.is_dir():
        raise click.UsageError(f"{collection_dir} is not a directory")
    found = sorted(p for p in root.iterdir() if (p / "manifest.json").is_file())
    if not found:
        raise click.UsageError(f"{collection_dir} holds no dump directories (manifest.json)")
    return found


@main.command("rank")
@click.argument("collection_dir", type=click.Path())
@click.option("--measure-kind", type=click.Choice(MARGIN_KINDS), default="kv_gn")
@click.option("--layer", default="", help="Layer id (default: each dump's first layer).")
@click.option("--statistic", type=click.Choice(_STATISTICS), default="median")
@click.option("--q", type=float, default=None, help="Level for --statistic=quantile.")
@click.option("--mixup", "use_mixup", is_flag=True, help="Geometric-mean mixup combination.")
@click.option("--clamp", is_flag=True, help="Clamp negative measures to 0 before --mixup.")
@click.option("--max-subset-size", type=int, default=2)
@click.option("--seed", type=int, default=0)
@_guarded
def cmd_rank(collection_dir, measure_kind, layer, statistic, q, use_mixup, clamp, max_subset_size, seed):
    """Score how well a measure predicts generalization across a collection."""
    if statistic == "quantile" and q is None:
        raise click.UsageError("--statistic=quantile requires --q")
    if max_subset_size < 0:
        raise click.UsageError(f"--max-subset-size must be >= 0, got {max_subset_size}")
    dirs = _collection_dirs(collection_dir)

    def measure_one(path: Path) -> tuple[ModelDump, float]:
        dump = load_dump(path)
        layer_id = layer or (dump.layer_ids()[0] if dump.layer_ids() else "")
        dist = _distribution(dump, measure_kind, layer_id, seed)
        return dump, summarize(dist, statistic, q=q)

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        measured = list(pool.map(measure_one, dirs))

    missing_gap = [d.model_id for d, _ in measured if d.gen_gap is None]
    if missing_gap:
        raise SchemaError(f"dumps missing gen_gap: {missing_gap}")
    if use_mixup:
        missing_mix = [d.model_id for d, _ in measured if d.mixup_accuracy is None]
        if missing_mix:
            raise SchemaError(f"dumps missing mixup_accuracy: {missing_mix}")

    points = []
    for dump, value in measured:
        if use_mixup:
            if clamp:
                value = max(value, 0.0)
            value = mixup_combine(value, dump.mixup_accuracy)
        points.append(
            ModelPoint(
                model_id=dump.model_id,
                measure=value,
                gen_gap=dump.gen_gap,
                hyperparams=dump.hyperparams,
                mixup_accuracy=dump.mixup_accuracy,
            )
        )

    report = cmi_score(points, max_subset_size=max_subset_size)
    tau = kendall_tau(points)
    _emit(
        {
            "command": "rank",
            "format_version": FORMAT_VERSION,
            "seed": seed,
            "measure_kind": measure_kind,
            "layer": layer,
            "statistic": statistic if q is None else f"{statistic}:{q}",
            "mixup": bool(use_mixup),
            "models": [
                {"model_id": p.model_id, "measure": p.measure, "gen_gap": p.gen_gap}
                for p in points
            ],
            "subsets": [
                {
                    "subset": list(subset),
                    "mi": score.mi,
                    "entropy": score.entropy,
                    "normalized": score.normalized,
                }
                for subset, score in sorted(report.per_subset.items())
            ],
            "min_subset": list(report.min_subset),
            "cmi_score": report.score,
            "kendall_tau": tau,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# synth


@main.command("synth")
@click.option("--check", "check_name", required=True, type=click.Choice(sorted(SYNTH_CHECKS)))
@click.option("--seed", type=int, default=0)
@_guarded
def cmd_synth(check_name, seed):
    """Run one named invariant suite on synthetic measures."""
    results = SYNTH_CHECKS[check_name](seed)
    passed = all(r.passed for r in results)
    _emit(
        {
            "command": "synth",
            "format_version": FORMAT_VERSION,
            "check": check_name,
            "seed": seed,
            "passed": passed,
            "assertions": [
                {"name": r.name, "passed": r.passed, "details": r.details} for r in results
            ],
        }
    )
    return 0 if passed else 3
