"""Collection-level predictive-quality scores for per-model measures.

The conditional-mutual-information score follows the PGDL evaluation
semantics: for every conditioning subset U of hyperparameter axes (|U| <= 2,
including the empty set), models are grouped into cells sharing their
values on U, and within each cell every unordered model pair with both a
measure difference and a gap difference contributes the sign pair
(sign(dm), sign(dg)).  Pairs are counted in both orientations, which makes
the plug-in distribution symmetric; per cell the conditional entropy of the
gap sign is then exactly log 2 and the mutual information reduces to
log 2 - H_b(fraction concordant).  Cells are weighted by their valid-pair
counts, normalized = I/H, and the score is 100 times the minimum over
subsets.  The estimator is a declared artifact convention (the protocol
only names the metric); degenerate cases pin it down: any strictly
monotone or strictly anti-monotone measure scores 100, independent noise
scores near 0.
"""

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, SchemaError

__all__ = [
    "ModelPoint",
    "SubsetScore",
    "CmiReport",
    "cmi_score",
    "kendall_tau",
    "mixup_combine",
]


@dataclass
class ModelPoint:
    """One model in a collection: its measure, gap, and hyperparameters."""

    model_id: str
    measure: float
    gen_gap: float
    hyperparams: dict[str, str]
    mixup_accuracy: float | None = None


@dataclass
class SubsetScore:
    mi: float
    entropy: float
    normalized: float


@dataclass
class CmiReport:
    per_subset: dict[tuple[str, ...], SubsetScore]
    min_subset: tuple[str, ...]
    score: float


def _validate_points(points: list[ModelPoint], need_axes: bool) -> list[str]:
    if len(points) < 2:
        raise InsufficientDataError(f"need at least 2 models, got {len(points)}")
    axes = sorted(points[0].hyperparams)
    for p in points:
        if not math.isfinite(p.gen_gap) or not math.isfinite(p.measure):
            raise SchemaError(f"model {p.model_id!r}: measure and gen_gap must be finite")
        if sorted(p.hyperparams) != axes:
            raise SchemaError(
                f"model {p.model_id!r} hyperparameter axes {sorted(p.hyperparams)} "
                f"differ from {axes}"
            )
    if need_axes and not axes:
        raise SchemaError("CMI conditioning needs at least one hyperparameter axis")
    return axes


def _binary_entropy(q: float) -> float:
    if q <= 0.0 or q >= 1.0:
        return 0.0
    return -(q * math.log(q) + (1.0 - q) * math.log(1.0 - q))


def _subset_score(points: list[ModelPoint], subset: tuple[str, ...]) -> SubsetScore | None:
    """Pooled sign-pair plug-in over the cells of one conditioning subset.

    Returns None when no cell holds two or more comparable pairs.
    """
    cells: dict[tuple[str, ...], list[ModelPoint]] = {}
    for p in points:
        key = tuple(p.hyperparams[a] for a in subset)
        cells.setdefault(key, []).append(p)

    cell_pairs: list[tuple[int, int]] = []  # (valid pairs, concordant pairs)
    for members in cells.values():
        valid = 0
        concordant = 0
        for a, b in itertools.combinations(members, 2):
            dm = a.measure - b.measure
            dg = a.gen_gap - b.gen_gap
            if dm == 0.0 or dg == 0.0:
                continue
            valid += 1
            if (dm > 0) == (dg > 0):
                concordant += 1
        if valid:
            cell_pairs.append((valid, concordant))

    if not any(valid >= 2 for valid, _ in cell_pairs):
        return None
    total = sum(valid for valid, _ in cell_pairs)
    mi = 0.0
    entropy = 0.0
    log2 = math.log(2.0)
    for valid, concordant in cell_pairs:
        weight = valid / total
        q = concordant / valid
        mi += weight * (log2 - _binary_entropy(q))
        entropy += weight * log2
    return SubsetScore(mi=mi, entropy=entropy, normalized=mi / entropy)


def cmi_score(points: list[ModelPoint], max_subset_size: int = 2) -> CmiReport:
    """Score a model collection: 100 x min over conditioning subsets of I/H."""
    axes = _validate_points(points, need_axes=True)
    report: dict[tuple[str, ...], SubsetScore] = {}
    for size in range(0, min(max_subset_size, len(axes)) + 1):
        for subset in itertools.combinations(axes, size):
            scored = _subset_score(points, subset)
            if scored is None:
                warnings.warn(
                    f"conditioning subset {subset!r} skipped: no cell holds 2 comparable pairs",
                    RuntimeWarning,
                    stacklevel=2,
                )
                continue
            report[subset] = scored
    if not report:
        raise InsufficientDataError("no conditioning subset had enough comparable pairs")
    min_subset = min(report, key=lambda s: (report[s].normalized, len(s), s))
    return CmiReport(
        per_subset=report,
        min_subset=min_subset,
        score=100.0 * report[min_subset].normalized,
    )


def kendall_tau(points: list[ModelPoint]) -> float:
    """(concordant - discordant) / comparable over (measure, gap) pairs."""
    _validate_points(points, need_axes=False)
    measures = np.array([p.measure for p in points])
    gaps = np.array([p.gen_gap for p in points])
    i, j = np.triu_indices(len(points), k=1)
    dm = measures[i] - measures[j]
    dg = gaps[i] - gaps[j]
    comparable = (dm != 0) & (dg != 0)
    if not comparable.any():
        raise InsufficientDataError("no comparable (measure, gap) pairs: all tied")
    signs = np.sign(dm[comparable]) * np.sign(dg[comparable])
    return float(signs.sum() / comparable.sum())


def mixup_combine(measure: float, mixup_accuracy: float) -> float:
    """Geometric mean of a nonnegative measure and a mixup accuracy."""
    if not math.isfinite(measure) or measure < 0:
        raise DomainError(f"measure must be finite and >= 0, got {measure}")
    if not 0.0 <= mixup_accuracy <= 1.0:
        raise DomainError(f"mixup accuracy must lie in [0, 1], got {mixup_accuracy}")
    return math.sqrt(measure * mixup_accuracy)
