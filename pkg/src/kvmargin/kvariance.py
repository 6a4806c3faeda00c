"""Empirical Wasserstein-1 k-variance of feature distributions.

The estimator: draw two disjoint uniformly random size-k subsets of the m
feature rows, take the exact W1 between the two uniform empirical measures,
average over n repeats.  Disjoint without-replacement halves at
k = floor(m_c / 2) are the finite-sample analogue of two independent
size-k draws from the class-conditional measure; sampling with replacement
(where the same row can appear on both sides and cancel at zero cost) is
available behind the ``sampling`` flag for comparison but is not the
default.

Randomness: one root seed, per-repeat streams derived by spawn keys, so an
estimate never depends on evaluation order and class estimates never
interact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, SampleSizeError
from .ingest import ModelDump
from .rngutil import child_seed, stream
from .transport import PointCloud, w1_exact

__all__ = [
    "KVarianceEstimate",
    "VarianceCheck",
    "canonical_rows",
    "k_variance",
    "class_k_variances",
    "estimator_variance_check",
]

SAMPLING_MODES = ("disjoint", "iid")


@dataclass
class KVarianceEstimate:
    """One k-variance estimate: ``value`` is the mean of ``repeats``."""

    class_id: int
    k: int
    n: int
    value: float
    repeats: np.ndarray
    seed: int


@dataclass
class VarianceCheck:
    """Sample variance of repeated estimates next to the 4*Var/(nk) bound."""

    empirical_variance: float
    bound: float


def _as_features(features) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    if not np.isfinite(feats).all():
        raise DataError("features contain non-finite values")
    return feats


def k_variance(
    features,
    k: int,
    n: int = 1,
    seed: int = 0,
    *,
    class_id: int = -1,
    sampling: str = "disjoint",
) -> KVarianceEstimate:
    """Estimate Var_k of the empirical measure on the given feature rows."""
    if k < 1 or n < 1:
        raise ValueError(f"k and n must be >= 1, got k={k}, n={n}")
    if sampling not in SAMPLING_MODES:
        raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")
    feats = _as_features(features)
    m = feats.shape[0]
    if m < 2 * k:
        raise SampleSizeError(f"need m >= 2k rows for disjoint splits, got m={m}, k={k}")

    repeats = np.empty(n)
    for j in range(n):
        rng = stream(seed, j)
        if sampling == "disjoint":
            perm = rng.permutation(m)
            left, right = perm[:k], perm[k : 2 * k]
        else:
            left = rng.integers(0, m, size=k)
            right = rng.integers(0, m, size=k)
        plan = w1_exact(PointCloud(feats[left]), PointCloud(feats[right]))
        repeats[j] = plan.cost
    return KVarianceEstimate(
        class_id=class_id,
        k=int(k),
        n=int(n),
        value=float(repeats.mean()),
        repeats=repeats,
        seed=int(seed),
    )


def canonical_rows(feats: np.ndarray) -> np.ndarray:
    """Lexicographic row order: estimates depend on the feature multiset only.

    Without this, two dumps holding the same class sample in different row
    order would draw different splits from the same seed and report slightly
    different normalizers.
    """
    order = np.lexsort(feats.T[::-1])
    return feats[order]


def class_k_variances(
    dump: ModelDump,
    layer_id: str,
    seed: int,
    *,
    n: int = 1,
    k_override: int | None = None,
    sampling: str = "disjoint",
) -> dict[int, KVarianceEstimate]:
    """Per-class estimates at the operating point k = floor(m_c / 2), n = 1."""
    features = dump.layer(layer_id).features
    out: dict[int, KVarianceEstimate] = {}
    for c in sorted(int(v) for v in np.unique(dump.labels)):
        rows = features[dump.labels == c]
        m_c = rows.shape[0]
        if m_c < 2:
            raise SampleSizeError(f"class {c} has {m_c} sample(s); k-variance needs at least 2")
        k_c = (m_c // 2) if k_override is None else int(k_override)
        est = k_variance(
            canonical_rows(rows),
            k_c,
            n,
            child_seed(seed, c),
            class_id=c,
            sampling=sampling,
        )
        out[c] = est
    return out


def estimator_variance_check(
    features, k: int, n: int, trials: int, seed: int
) -> VarianceCheck:
    """Compare the spread of repeated estimates against 4*Var(phi)/(nk).

    The bound is on the variance over data draws; resampling subsets from a
    fixed sample can only concentrate harder, so the check is one-sided.
    """
    if trials < 2:
        raise SampleSizeError(f"need at least 2 trials to estimate a variance, got {trials}")
    feats = _as_features(features)
    if feats.shape[0] < 2 * k:
        raise SampleSizeError(f"need m >= 2k rows, got m={feats.shape[0]}, k={k}")
    estimates = np.array(
        [k_variance(feats, k, n, child_seed(seed, "trial", t)).value for t in range(trials)]
    )
    centered = feats - feats.mean(axis=0)
    feature_variance = float((centered**2).sum(axis=1).mean())
    return VarianceCheck(
        empirical_variance=float(estimates.var(ddof=1)),
        bound=4.0 * feature_variance / (n * k),
    )
