"""Margin variants, their normalizers, and distribution summaries.

Raw margin: rho = f_y - max_{y' != y} f_{y'}; zero or negative means the
sample is misclassified (ties count against the model).  On top of that:

* ``gn``: rho / (||grad rho|| + epsilon), gradient norms supplied per sample
  by the dump (the toolkit never differentiates anything);
* ``kv``: rho divided by the prior-weighted sum of per-class k-variance
  times the per-class Lipschitz estimate;
* ``kv_gn``: the gn numerator with the Lipschitz factor pinned to 1, since
  the normalized scorer's Jacobian norm is itself bounded by 1;
* ``tv_gn``: gn numerator over sqrt(Var ||phi||^2), a total-variance
  baseline;
* ``sn``: rho over a spectral-complexity product, the spectral-norm
  baseline.

A zero denominator always raises DegenerateNormalizerError rather than
producing infinities: degenerate features are a data problem the caller
must see, not a large margin.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClassCountError,
    DataError,
    DegenerateNormalizerError,
    DimensionError,
    LabelError,
    SampleSizeError,
    SchemaError,
)
from .ingest import ModelDump
from .kvariance import class_k_variances

__all__ = [
    "DEFAULT_EPSILON",
    "MarginDistribution",
    "NormalizerReport",
    "margin",
    "raw_margins",
    "gn_margin",
    "lipschitz_hat",
    "normalizer",
    "raw_margin_distribution",
    "gn_margin_distribution",
    "kv_margin_distribution",
    "kv_gn_margin_distribution",
    "tv_gn_margin_distribution",
    "sn_margin_distribution",
    "spectral_norm",
    "summarize",
]

DEFAULT_EPSILON = 1e-6

MARGIN_KINDS = ("raw", "gn", "kv", "kv_gn", "sn", "tv_gn")


@dataclass
class MarginDistribution:
    """Per-sample margin values of one kind, with the normalization inputs."""

    kind: str
    layer_id: str
    values: np.ndarray
    params: dict = field(default_factory=dict)


@dataclass
class NormalizerReport:
    """The kv denominator and everything that went into it."""

    per_class_kvariance: dict[int, float]
    per_class_lipschitz: dict[int, float]
    class_priors: dict[int, float]
    denominator: float


def margin(scores, y: int) -> float:
    """rho = f_y - max over the other classes, for one score vector."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise ClassCountError(f"need a score vector with K >= 2, got shape {scores.shape}")
    if not np.isfinite(scores).all():
        raise DataError("scores contain non-finite values")
    if not 0 <= int(y) < scores.shape[0]:
        raise LabelError(f"label {y} outside [0, {scores.shape[0]})")
    rest = np.delete(scores, int(y))
    return float(scores[int(y)] - rest.max())


def raw_margins(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized rho over a whole dump; same semantics as :func:`margin`."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ClassCountError(f"scores must be (m, K>=2), got {scores.shape}")
    if not np.isfinite(scores).all():
        raise DataError("scores contain non-finite values")
    if labels.shape != (scores.shape[0],):
        raise DimensionError(f"labels shape {labels.shape} does not match {scores.shape[0]} rows")
    if labels.min() < 0 or labels.max() >= scores.shape[1]:
        raise LabelError("labels outside [0, K)")
    rows = np.arange(scores.shape[0])
    true_scores = scores[rows, labels]
    masked = scores.copy()
    masked[rows, labels] = -np.inf
    return true_scores - masked.max(axis=1)


def runner_up(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """y* per sample: argmax over the other classes, smallest index on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    masked = scores.copy()
    masked[np.arange(scores.shape[0]), labels] = -np.inf
    return masked.argmax(axis=1)


def gn_margin(raw_margin: float, grad_norm: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Gradient-normalized margin: raw / (grad_norm + epsilon)."""
    if grad_norm < 0:
        raise DataError(f"gradient norm must be nonnegative, got {grad_norm}")
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    return float(raw_margin) / (float(grad_norm) + epsilon)


def lipschitz_hat(jac_diff_norms) -> float:
    """Empirical Lipschitz estimate: max per-sample Jacobian-difference norm."""
    norms = np.asarray(jac_diff_norms, dtype=np.float64)
    if norms.size == 0:
        raise SampleSizeError("Lipschitz estimate over an empty class")
    if not np.isfinite(norms).all() or (norms < 0).any():
        raise DataError("Jacobian-difference norms must be finite and nonnegative")
    return float(norms.max())


def normalizer(kvars: dict, lips: dict, priors: dict) -> NormalizerReport:
    """Assemble the kv denominator: sum over classes of prior * kvar * lip."""
    if set(kvars) != set(lips) or set(kvars) != set(priors):
        raise SchemaError(
            f"class key sets differ: kvars={sorted(kvars)}, lips={sorted(lips)}, priors={sorted(priors)}"
        )
    prior_total = 0.0
    for c in priors:
        for name, table in (("kvariance", kvars), ("lipschitz", lips), ("prior", priors)):
            v = float(table[c])
            if not np.isfinite(v) or v < 0:
                raise DataError(f"{name}[{c}] must be finite and nonnegative, got {v}")
        prior_total += float(priors[c])
    if abs(prior_total - 1.0) > 1e-9:
        raise SchemaError(f"priors must sum to 1 within 1e-9, got {prior_total!r}")

    denominator = 0.0
    for c in sorted(kvars):
        denominator += float(priors[c]) * float(kvars[c]) * float(lips[c])
    if denominator <= 0.0:
        raise DegenerateNormalizerError(
            "normalizer denominator is zero (all classes have zero k-variance or Lipschitz estimate)"
        )
    return NormalizerReport(
        per_class_kvariance={c: float(kvars[c]) for c in sorted(kvars)},
        per_class_lipschitz={c: float(lips[c]) for c in sorted(lips)},
        class_priors={c: float(priors[c]) for c in sorted(priors)},
        denominator=denominator,
    )


def _class_tables(dump: ModelDump, layer_id: str, seed: int, n: int, k_override, lips_one: bool):
    """kvars/lips/priors keyed by present class, plus the estimates."""
    estimates = class_k_variances(dump, layer_id, seed, n=n, k_override=k_override)
    counts = dump.class_counts()
    m = dump.sample_count
    kvars = {c: est.value for c, est in estimates.items()}
    if lips_one:
        lips = {c: 1.0 for c in estimates}
    else:
        jac = dump.jac_diff_norms[layer_id]
        lips = {c: lipschitz_hat(jac[dump.labels == c]) for c in estimates}
    priors = {c: counts[c] / m for c in estimates}
    return kvars, lips, priors, estimates


def _normalizer_params(report: NormalizerReport, estimates, seed: int) -> dict:
    return {
        "denominator": report.denominator,
        "seed": int(seed),
        "per_class_kvariance": {str(c): v for c, v in report.per_class_kvariance.items()},
        "per_class_lipschitz": {str(c): v for c, v in report.per_class_lipschitz.items()},
        "class_priors": {str(c): v for c, v in report.class_priors.items()},
        "per_class_k": {str(c): est.k for c, est in estimates.items()},
        "n_repeats": {str(c): est.n for c, est in estimates.items()},
    }


def raw_margin_distribution(dump: ModelDump) -> MarginDistribution:
    """Unnormalized margins; layer-independent, so layer_id is empty."""
    return MarginDistribution(
        kind="raw", layer_id="", values=raw_margins(dump.scores, dump.labels), params={}
    )


def gn_margin_distribution(
    dump: ModelDump, layer_id: str, epsilon: float = DEFAULT_EPSILON
) -> MarginDistribution:
    """Gradient-normalized margins using the layer's dumped gradient norms."""
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    dump.layer(layer_id)  # existence check
    grads = dump.grad_feature_norms[layer_id]
    values = raw_margins(dump.scores, dump.labels) / (grads + epsilon)
    return MarginDistribution(kind="gn", layer_id=layer_id, values=values, params={"epsilon": epsilon})


def kv_margin_distribution(
    dump: ModelDump,
    layer_id: str,
    seed: int,
    *,
    n: int = 1,
    k_override: int | None = None,
) -> MarginDistribution:
    """Raw margins over the k-variance x Lipschitz denominator."""
    kvars, lips, priors, estimates = _class_tables(dump, layer_id, seed, n, k_override, lips_one=False)
    report = normalizer(kvars, lips, priors)
    values = raw_margins(dump.scores, dump.labels) / report.denominator
    return MarginDistribution(
        kind="kv",
        layer_id=layer_id,
        values=values,
        params=_normalizer_params(report, estimates, seed),
    )


def kv_gn_margin_distribution(
    dump: ModelDump,
    layer_id: str,
    seed: int,
    *,
    epsilon: float = DEFAULT_EPSILON,
    n: int = 1,
    k_override: int | None = None,
) -> MarginDistribution:
    """GN margins over the k-variance denominator with Lipschitz pinned at 1.

    The normalized scorer's Jacobian norm is ||grad rho|| / (||grad rho|| +
    epsilon) <= 1, and tightly so away from critical points, which is what
    justifies dropping the per-class Lipschitz factor here.
    """
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    kvars, lips, priors, estimates = _class_tables(dump, layer_id, seed, n, k_override, lips_one=True)
    report = normalizer(kvars, lips, priors)
    grads = dump.grad_feature_norms[layer_id]
    values = raw_margins(dump.scores, dump.labels) / (grads + epsilon) / report.denominator
    params = _normalizer_params(report, estimates, seed)
    params["epsilon"] = epsilon
    return MarginDistribution(kind="kv_gn", layer_id=layer_id, values=values, params=params)


def tv_gn_margin_distribution(
    dump: ModelDump, layer_id: str, epsilon: float = DEFAULT_EPSILON
) -> MarginDistribution:
    """GN margins over sqrt(Var ||phi||^2) (total-variance baseline)."""
    gn = gn_margin_distribution(dump, layer_id, epsilon)
    sq_norms = (dump.layer(layer_id).features ** 2).sum(axis=1)
    variance = float(np.mean((sq_norms - sq_norms.mean()) ** 2))
    if variance <= 0.0:
        raise DegenerateNormalizerError("variance of squared feature norms is zero")
    denom = float(np.sqrt(variance))
    return MarginDistribution(
        kind="tv_gn",
        layer_id=layer_id,
        values=gn.values / denom,
        params={"denominator": denom, "epsilon": epsilon},
    )


def sn_margin_distribution(dump: ModelDump, spectral_complexity: float) -> MarginDistribution:
    """Raw margins over a spectral-complexity constant (spectral baseline)."""
    if not np.isfinite(spectral_complexity) or spectral_complexity <= 0:
        raise DegenerateNormalizerError(
            f"spectral complexity must be positive, got {spectral_complexity}"
        )
    values = raw_margins(dump.scores, dump.labels) / float(spectral_complexity)
    return MarginDistribution(
        kind="sn", layer_id="", values=values, params={"spectral_complexity": float(spectral_complexity)}
    )


def spectral_norm(w) -> float:
    """Largest singular value by power iteration on w^T w.

    Fixed pseudo-random start vector (seeded, deterministic) so a start
    exactly orthogonal to the top singular direction cannot be constructed
    by adversarial inputs; relative tolerance 1e-6, at most 1000 sweeps.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
        raise DimensionError(f"expected a matrix, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise DataError("matrix contains non-finite values")
    gram = w.T @ w
    v = np.random.default_rng(0xA5).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma_sq = 0.0
    for _ in range(1000):
        gv = gram @ v
        norm = np.linalg.norm(gv)
        if norm == 0.0:
            return 0.0
        v = gv / norm
        prev, sigma_sq = sigma_sq, float(v @ (gram @ v))
        if abs(sigma_sq - prev) <= 1e-6 * max(abs(sigma_sq), 1e-300):
            break
    return float(np.sqrt(max(sigma_sq, 0.0)))


def summarize(dist: MarginDistribution, statistic: str = "median", q: float | None = None) -> float:
    """One scalar from a margin distribution.

    ``median`` averages the middle pair on even lengths; ``quantile`` uses
    the lower-value convention (no interpolation), so results reproduce
    bit-for-bit from sorted values alone.
    """
    values = np.asarray(dist.values, dtype=np.float64)
    if values.size == 0:
        raise SampleSizeError("cannot summarize an empty margin distribution")
    if statistic == "median":
        return float(np.median(values))
    if statistic == "mean":
        return float(values.mean())
    if statistic == "quantile":
        if q is None or not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile statistic needs q in [0, 1], got {q}")
        return float(np.quantile(values, q, method="lower"))
    raise ValueError(f"unknown statistic {statistic!r} (median, mean, quantile)")
