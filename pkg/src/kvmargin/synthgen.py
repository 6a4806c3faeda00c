"""Synthetic measure generators, rate fitting, and the named check suites.

Two generator families cover the concentration properties: clusterable
measures (uniform mixtures of small balls, which admit the parametric
24*sqrt(n_clusters/m) rate) and low-dimensional measures (uniform cubes
rotation-embedded into a larger ambient space, whose k-variance decays like
m**(-1/d) in the intrinsic dimension).  ``make_synthetic_dump`` builds full
model dumps around linear scorers so margins, gradient norms, and Lipschitz
constants are all closed-form.

The ``check_*`` functions are self-contained assertion suites over these
generators (run by the CLI's synth command): clusterable concentration with
the explicit constant, rate-exponent separation between intrinsic
dimensions, the Efron-Stein variance bound on the split estimator, and
margin-forced transport separation on 1-D toys.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, DomainError, GeometryError, SchemaError
from .ingest import FeatureLayer, ModelDump
from .kvariance import estimator_variance_check, k_variance
from .margins import spectral_norm
from .rngutil import child_seed, stream

__all__ = [
    "NOISE_KINDS",
    "RateSeries",
    "SynthSpec",
    "CheckResult",
    "SYNTH_CHECKS",
    "cluster_centers",
    "gen_clusterable",
    "gen_low_dim",
    "rate_fit",
    "make_synthetic_dump",
    "variance_curve",
    "check_prop8",
    "check_rates",
    "check_efron_stein",
    "check_separation",
]

NOISE_KINDS = ("gauss", "ball", "pair")
_REJECTION_BUDGET = 10_000


@dataclass
class RateSeries:
    """Log-log rate fit: values[i] ~ exp(intercept) * sizes[i]**slope."""

    sizes: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float


@dataclass
class SynthSpec:
    """Linear-scorer dump recipe.

    Class c draws ``m_per_class`` feature rows around ``class_means[c]``;
    scores are ``weights @ feature``.  Noise lives in the row span of
    ``noise_directions`` (orthonormal rows; identity when omitted), scaled
    by ``spread``:

        gauss   spread * standard normal coordinates
        ball    uniform in the spread-radius ball
        pair    alternating +/- spread along a single direction
                (m_per_class must be even; exact two-point class marginals)

    Choosing directions orthogonal to every scorer weight changes features
    without moving any score, which is how the fixed-margin fixtures are
    built.
    """

    weights: np.ndarray
    class_means: np.ndarray
    m_per_class: int
    noise: str = "gauss"
    spread: float = 0.0
    noise_directions: np.ndarray | None = None
    model_id: str = "synthetic"
    layer_id: str = "feat"
    gen_gap: float | None = None
    mixup_accuracy: float | None = None
    hyperparams: dict[str, str] = field(default_factory=dict)


@dataclass
class CheckResult:
    """One assertion from a named check suite."""

    name: str
    passed: bool
    details: dict[str, float]


def gen_clusterable(n_clusters: int, delta: float, dim: int, m: int, seed: int) -> np.ndarray:
    """Sample m points from a uniform mixture of n_clusters delta-balls.

    Centers are rejection-sampled uniformly in the unit cube until all
    pairwise distances reach 4*delta, so the balls are well separated;
    GeometryError after 10^4 rejected candidates.  The centers depend only
    on (seed, n_clusters, delta, dim), so calls with different m sample the
    same measure.
    """
    if n_clusters < 1:
        raise DomainError(f"n_clusters must be >= 1, got {n_clusters}")
    if not (math.isfinite(delta) and delta > 0):
        raise DomainError(f"delta must be positive, got {delta}")
    if dim < 1 or m < 1:
        raise DomainError(f"dim and m must be >= 1, got dim={dim}, m={m}")

    centers = cluster_centers(n_clusters, delta, dim, seed)
    sample_rng = stream(seed, "samples")
    assignment = sample_rng.integers(0, n_clusters, size=m)
    return centers[assignment] + _ball_noise(sample_rng, m, dim, delta)


def cluster_centers(n_clusters: int, delta: float, dim: int, seed: int) -> np.ndarray:
    """The ball centers gen_clusterable samples around for this seed."""
    center_rng = stream(seed, "centers")
    centers = np.empty((n_clusters, dim))
    placed = 0
    rejections = 0
    while placed < n_clusters:
        candidate = center_rng.uniform(size=dim)
        if placed and (np.linalg.norm(centers[:placed] - candidate, axis=1) < 4 * delta).any():
            rejections += 1
            if rejections >= _REJECTION_BUDGET:
                raise GeometryError(
                    f"could not pack {n_clusters} centers with separation {4 * delta} "
                    f"in [0,1]^{dim} after {_REJECTION_BUDGET} rejections"
                )
            continue
        centers[placed] = candidate
        placed += 1
    return centers


def _ball_noise(rng: np.random.Generator, m: int, dim: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal((m, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.uniform(size=(m, 1)) ** (1.0 / dim)
    return directions / norms * radii


def gen_low_dim(ambient_dim: int, intrinsic_dim: int, m: int, seed: int) -> np.ndarray:
    """Uniform cube in intrinsic_dim coordinates, rotated into ambient_dim.

    The rotation is a seeded Haar orthogonal matrix (QR of a Gaussian with
    sign-fixed diagonal) drawn independently of m, so different sample
    counts share one embedded measure.  Rotation preserves all pairwise
    distances, so transport statistics see only the intrinsic geometry.
    """
    if intrinsic_dim < 1 or ambient_dim < intrinsic_dim:
        raise DimensionError(
            f"need 1 <= intrinsic_dim <= ambient_dim, got {intrinsic_dim} and {ambient_dim}"
        )
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    gauss = stream(seed, "rotation").standard_normal((ambient_dim, ambient_dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    cube = stream(seed, "samples").uniform(size=(m, intrinsic_dim))
    return cube @ q[:, :intrinsic_dim].T


def rate_fit(sizes, values) -> RateSeries:
    """Least-squares exponent of log(value) against log(size)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if sizes.ndim != 1 or sizes.shape != values.shape:
        raise DomainError(
            f"sizes and values must be matching vectors, got {sizes.shape} and {values.shape}"
        )
    if sizes.size < 3:
        raise DomainError(f"rate fit needs at least 3 points, got {sizes.size}")
    if (sizes <= 0).any() or (np.diff(sizes) <= 0).any():
        raise DomainError("sizes must be positive and strictly increasing")
    if not np.isfinite(values).all() or (values <= 0).any():
        raise DomainError("rate fit needs finite positive values")
    slope, intercept = np.polyfit(np.log(sizes), np.log(values), 1)
    return RateSeries(
        sizes=sizes.astype(np.int64),
        values=values,
        slope=float(slope),
        intercept=float(intercept),
    )


def _validate_spec(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    weights = np.asarray(spec.weights, dtype=np.float64)
    means = np.asarray(spec.class_means, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] < 2:
        raise SchemaError(f"weights: expected (K >= 2, d) matrix, got shape {weights.shape}")
    if means.shape != weights.shape:
        raise SchemaError(
            f"class_means: expected shape {weights.shape} matching weights, got {means.shape}"
        )
    if not (np.isfinite(weights).all() and np.isfinite(means).all()):
        raise SchemaError("weights and class_means must be finite")
    if spec.m_per_class < 1:
        raise SchemaError(f"m_per_class: must be >= 1, got {spec.m_per_class}")
    if spec.noise not in NOISE_KINDS:
        raise SchemaError(f"noise: must be one of {NOISE_KINDS}, got {spec.noise!r}")
    if not (math.isfinite(spec.spread) and spec.spread >= 0):
        raise SchemaError(f"spread: must be finite and >= 0, got {spec.spread}")

    d = weights.shape[1]
    if spec.noise_directions is None:
        directions = np.eye(d)
    else:
        directions = np.asarray(spec.noise_directions, dtype=np.float64)
        if directions.ndim != 2 or directions.shape[1] != d or directions.shape[0] < 1:
            raise SchemaError(
                f"noise_directions: expected (q >= 1, {d}) matrix, got shape {directions.shape}"
            )
        gram = directions @ directions.T
        if not np.allclose(gram, np.eye(directions.shape[0]), atol=1e-9):
            raise SchemaError("noise_directions: rows must be orthonormal")
    if spec.noise == "pair":
        if directions.shape[0] != 1:
            raise SchemaError(
                f"pair noise needs exactly one direction, got {directions.shape[0]}"
            )
        if spec.m_per_class % 2:
            raise SchemaError(f"pair noise needs even m_per_class, got {spec.m_per_class}")
    return weights, means, directions


def make_synthetic_dump(spec: SynthSpec, seed: int) -> ModelDump:
    """Build a validated dump with linear scorers f_y(z) = weights[y] . z.

    Gradient and Jacobian-difference norms are the exact closed forms
    ||w_y - w_{y*}|| with y* the runner-up class; weight_spectral_norms
    holds the scorer matrix norm, so every margin kind downstream of the
    dump is computable.
    """
    weights, means, directions = _validate_spec(spec)
    num_classes, _ = weights.shape
    q = directions.shape[0]
    m_c = spec.m_per_class

    blocks = []
    for c in range(num_classes):
        rng = stream(seed, "class", c)
        if spec.noise == "gauss":
            z = rng.standard_normal((m_c, q))
        elif spec.noise == "ball":
            z = _ball_noise(rng, m_c, q, 1.0)
        else:
            z = np.where(np.arange(m_c)[:, None] % 2 == 0, 1.0, -1.0)
        blocks.append(means[c] + spec.spread * (z @ directions))

    features = np.vstack(blocks)
    labels = np.repeat(np.arange(num_classes), m_c)
    scores = features @ weights.T

    masked = scores.copy()
    masked[np.arange(labels.size), labels] = -np.inf
    runner_up = masked.argmax(axis=1)
    norms = np.linalg.norm(weights[labels] - weights[runner_up], axis=1)

    dump = ModelDump(
        model_id=spec.model_id,
        num_classes=num_classes,
        labels=labels,
        scores=scores,
        layers=[FeatureLayer(spec.layer_id, features)],
        grad_feature_norms={spec.layer_id: norms},
        jac_diff_norms={spec.layer_id: norms.copy()},
        weight_spectral_norms=np.array([spectral_norm(weights)]),
        gen_gap=spec.gen_gap,
        mixup_accuracy=spec.mixup_accuracy,
        hyperparams=dict(spec.hyperparams),
    )
    dump.validate()
    return dump


def variance_curve(sampler, sizes, repeats: int, seed: int) -> list[float]:
    """Averaged two-sample transport distance at each size.

    ``sampler(total_rows, seed)`` must return i.i.d. rows of one fixed
    measure.  Each size m draws 2*m*repeats rows in a single call and
    consumes them as disjoint chunks, one independent split estimate per
    chunk; the same sampler seed is reused across sizes so every point on
    the curve measures the same distribution.
    """
    if repeats < 1:
        raise DomainError(f"repeats must be >= 1, got {repeats}")
    sampler_seed = child_seed(seed, "sampler")
    curve = []
    for m in sizes:
        rows = sampler(2 * int(m) * repeats, sampler_seed)
        if rows.shape[0] != 2 * int(m) * repeats:
            raise DataError(
                f"sampler returned {rows.shape[0]} rows, expected {2 * int(m) * repeats}"
            )
        estimates = [
            k_variance(
                rows[2 * int(m) * r : 2 * int(m) * (r + 1)],
                int(m),
                1,
                child_seed(seed, "rep", int(m), r),
            ).value
            for r in range(repeats)
        ]
        curve.append(float(np.mean(estimates)))
    return curve


# ---------------------------------------------------------------------------
# named check suites (CLI: kvmargin synth --check=<name>)


def check_prop8(seed: int = 0) -> list[CheckResult]:
    """Clusterable concentration: averaged Var_m <= 24*sqrt(n_clusters/m).

    n_clusters=10 balls of radius 0.001 in dimension 16, m in
    {16, 64, 256, 1024}, 32 split repeats per size; also asserts the fitted
    exponent sits in the parametric band [-0.65, -0.35].
    """
    n_clusters, delta, dim = 10, 0.001, 16
    sizes = (16, 64, 256, 1024)
    repeats = 32

    def sampler(total, sampler_seed):
        return gen_clusterable(n_clusters, delta, dim, total, sampler_seed)

    curve = variance_curve(sampler, sizes, repeats, child_seed(seed, "prop8"))
    results = []
    for m, value in zip(sizes, curve):
        bound = 24.0 * math.sqrt(n_clusters / m)
        results.append(
            CheckResult(
                name=f"var_bound_m{m}",
                passed=bool(value <= bound),
                details={"m": float(m), "averaged_var": value, "bound": bound},
            )
        )
    fit = rate_fit(sizes, curve)
    results.append(
        CheckResult(
            name="slope_band",
            passed=bool(-0.65 <= fit.slope <= -0.35),
            details={"slope": fit.slope, "low": -0.65, "high": -0.35},
        )
    )
    return results


def check_rates(seed: int = 0) -> list[CheckResult]:
    """Rate separation: intrinsic dimension 2 decays faster than 8.

    Slopes fitted over m in {2^6 .. 2^12} with 32 repeats per size on
    16-dimensional embeddings; requires a gap of at least 0.1 in the
    exponent.
    """
    sizes = tuple(2**e for e in range(6, 13))
    repeats = 32
    slopes = {}
    for intrinsic in (2, 8):

        def sampler(total, sampler_seed, intrinsic=intrinsic):
            return gen_low_dim(16, intrinsic, total, sampler_seed)

        curve = variance_curve(sampler, sizes, repeats, child_seed(seed, "lowdim", intrinsic))
        slopes[intrinsic] = rate_fit(sizes, curve).slope
    return [
        CheckResult(
            name="slope_separation",
            passed=bool(slopes[2] <= slopes[8] - 0.1),
            details={"slope_d2": slopes[2], "slope_d8": slopes[8], "required_gap": 0.1},
        )
    ]


def check_efron_stein(seed: int = 0) -> list[CheckResult]:
    """Split-estimator variance against the 4*Var/(n*k) bound.

    Standard Gaussian features in R^4, a fixed pool of m=512 rows, k=64,
    n=1, 200 re-split trials; empirical variance must stay within 1.1x the
    bound.
    """
    features = stream(seed, "features").standard_normal((512, 4))
    check = estimator_variance_check(features, k=64, n=1, trials=200, seed=child_seed(seed, "trials"))
    return [
        CheckResult(
            name="variance_bound",
            passed=bool(check.empirical_variance <= 1.1 * check.bound),
            details={
                "empirical_variance": check.empirical_variance,
                "bound": check.bound,
                "slack_factor": 1.1,
            },
        )
    ]


def check_separation(seed: int = 0) -> list[CheckResult]:
    """Margin-forced transport separation on the 1-D linear toys.

    The noiseless two-class toy is exactly tight: W1 = 2 = gamma/L at
    gamma=2, L=1 with zero pairwise loss.  Jittered versions must satisfy
    the lower bound up to a 0.1*gamma/L sampling allowance.
    """
    from .bounds import separation_check  # local: bounds imports kvariance too

    toy_spec = SynthSpec(
        weights=np.array([[-1.0], [1.0]]),
        class_means=np.array([[-1.0], [1.0]]),
        m_per_class=128,
    )
    toy = make_synthetic_dump(toy_spec, seed=child_seed(seed, "toy"))
    lipschitz = float(np.linalg.norm(toy_spec.weights[0] - toy_spec.weights[1]) / 2.0)
    report = separation_check(toy, "feat", 0, 1, gamma=2.0, lipschitz_L=lipschitz)
    results = [
        CheckResult(
            name="toy_tightness",
            passed=bool(
                abs(report.w1_distance - 2.0) <= 1e-9
                and report.pairwise_loss == 0.0
                and abs(report.lower_bound - 2.0) <= 1e-9
                and not report.violated
            ),
            details={
                "w1": report.w1_distance,
                "lower_bound": report.lower_bound,
                "pairwise_loss": report.pairwise_loss,
            },
        )
    ]
    jitter_spec = SynthSpec(
        weights=np.array([[-1.0], [1.0]]),
        class_means=np.array([[-1.0], [1.0]]),
        m_per_class=256,
        noise="ball",
        spread=0.2,
    )
    allowance = 0.1 * 2.0 / lipschitz
    for trial in range(5):
        dump = make_synthetic_dump(jitter_spec, seed=child_seed(seed, "jitter", trial))
        rep = separation_check(dump, "feat", 0, 1, gamma=2.0, lipschitz_L=lipschitz)
        results.append(
            CheckResult(
                name=f"jitter_trial{trial}",
                passed=bool(rep.w1_distance >= rep.lower_bound - allowance),
                details={
                    "w1": rep.w1_distance,
                    "lower_bound": rep.lower_bound,
                    "allowance": allowance,
                },
            )
        )
    return results


SYNTH_CHECKS = {
    "prop8": check_prop8,
    "rates": check_rates,
    "efron_stein": check_efron_stein,
    "separation": check_separation,
}
