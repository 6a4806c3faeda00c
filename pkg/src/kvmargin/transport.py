"""Exact Wasserstein-1 distances between discrete point clouds.

Two solver routes, chosen automatically by :func:`w1_exact`:

* uniform weights on equally sized supports reduce to a minimum-cost
  assignment (the optimal coupling is a permutation), solved by a
  Jonker-Volgenant shortest-augmenting-path kernel;
* everything else goes through a dense transportation simplex.

Both are exact linear-programming solves, not entropic approximations, and
both are deterministic: ties in pivot and augmentation order are broken by
smallest index.  One-dimensional inputs additionally get a closed-form
quantile-coupling route in :func:`w1_1d`, and :func:`brute_force_w1`
enumerates permutations outright so the optimizers can be checked against
something that cannot be subtly wrong.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DataError, DimensionError, SizeError

__all__ = [
    "FEASIBILITY_TOL",
    "OPTIMALITY_TOL",
    "PointCloud",
    "TransportPlan",
    "cost_matrix",
    "w1_exact",
    "w1_1d",
    "brute_force_w1",
]

FEASIBILITY_TOL = 1e-7
OPTIMALITY_TOL = 1e-9

_BRUTE_FORCE_MAX = 8
_SIMPLEX_ITER_CAP = 20_000
_SIMPLEX_ITER_PER_NODE = 200


@dataclass
class PointCloud:
    """A finitely supported measure: ``points`` (n, d) with ``weights`` (n,).

    Weights default to uniform.  Construction coerces to float64 and
    validates: finite entries, nonnegative weights summing to 1 within 1e-9.
    Duplicate points and zero-weight atoms are legal.
    """

    points: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DimensionError(f"points must be (n, d) with n, d >= 1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise DataError("points contain non-finite values")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (pts.shape[0],):
                raise DimensionError(
                    f"weights shape {w.shape} does not match {pts.shape[0]} points"
                )
            if not np.isfinite(w).all():
                raise DataError("weights contain non-finite values")
            if (w < 0).any():
                raise DataError("weights must be nonnegative")
            total = float(w.sum())
            if abs(total - 1.0) > 1e-9:
                raise DataError(f"weights must sum to 1 within 1e-9, got {total!r}")
        self.points = pts
        self.weights = w

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self) -> bool:
        """True when every atom carries exactly 1/n (the assignment case)."""
        return bool(np.all(self.weights == 1.0 / self.size))


@dataclass
class TransportPlan:
    """An optimal coupling: ``coupling[i, j]`` is mass moved a_i -> b_j."""

    coupling: np.ndarray
    cost: float


def cost_matrix(a: PointCloud, b: PointCloud) -> np.ndarray:
    """Euclidean ground-cost matrix, entry (i, j) = ||a_i - b_j||_2."""
    if a.dim != b.dim:
        raise DimensionError(f"ambient dimensions differ: {a.dim} vs {b.dim}")
    return _kernels.pairwise_euclidean(a.points, b.points)


def _assignment_plan(cost: np.ndarray, n: int) -> TransportPlan:
    """Permutation coupling for the uniform equal-size case."""
    col4row = _kernels.lsap_min_cost(cost)
    coupling = np.zeros_like(cost)
    rows = np.arange(n)
    coupling[rows, col4row] = 1.0 / n
    total = float(cost[rows, col4row].sum() / n)
    return TransportPlan(coupling=coupling, cost=total)


def _simplex_plan(cost: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> TransportPlan:
    n, m = cost.shape
    cap = _SIMPLEX_ITER_CAP + _SIMPLEX_ITER_PER_NODE * (n + m)
    flow, status = _kernels.transport_simplex(cost, wa, wb, cap)
    if status != 0:
        raise RuntimeError(
            f"transport simplex failed to converge within {cap} pivots "
            f"on a {n}x{m} instance; this is a solver bug, not a data error"
        )
    return TransportPlan(coupling=flow, cost=float((flow * cost).sum()))


def w1_exact(a: PointCloud, b: PointCloud) -> TransportPlan:
    """Exact W1 between two clouds, with the optimal coupling.

    Zero-weight atoms are dropped before solving and restored as empty
    rows/columns of the returned coupling, so its shape always matches the
    input supports.
    """
    if a.dim != b.dim:
        raise DimensionError(f"ambient dimensions differ: {a.dim} vs {b.dim}")

    keep_a = np.flatnonzero(a.weights > 0.0)
    keep_b = np.flatnonzero(b.weights > 0.0)
    full_shape = (a.size, b.size)
    sub_a = a if keep_a.size == a.size else PointCloud(a.points[keep_a], _renormalized(a.weights[keep_a]))
    sub_b = b if keep_b.size == b.size else PointCloud(b.points[keep_b], _renormalized(b.weights[keep_b]))

    cost = cost_matrix(sub_a, sub_b)
    if sub_a.size == sub_b.size and sub_a.is_uniform() and sub_b.is_uniform():
        plan = _assignment_plan(cost, sub_a.size)
    else:
        plan = _simplex_plan(cost, sub_a.weights, sub_b.weights)

    if keep_a.size == a.size and keep_b.size == b.size:
        return plan
    coupling = np.zeros(full_shape)
    coupling[np.ix_(keep_a, keep_b)] = plan.coupling
    return TransportPlan(coupling=coupling, cost=plan.cost)


def _renormalized(w: np.ndarray) -> np.ndarray:
    """Rescale surviving weights so the cloud constructor accepts them."""
    total = w.sum()
    if total <= 0.0:
        raise DataError("all weights are zero")
    return w / total


def w1_1d(a: PointCloud, b: PointCloud) -> float:
    """W1 on the line via the quantile coupling (no LP solve)."""
    if a.dim != 1 or b.dim != 1:
        raise DimensionError(f"w1_1d requires 1-D clouds, got dims {a.dim} and {b.dim}")
    ia = np.argsort(a.points[:, 0], kind="stable")
    ib = np.argsort(b.points[:, 0], kind="stable")
    return float(
        _kernels.w1_coupled_1d(
            a.points[ia, 0], a.weights[ia], b.points[ib, 0], b.weights[ib]
        )
    )


def brute_force_w1(a: PointCloud, b: PointCloud) -> float:
    """Reference W1 by permutation enumeration (uniform, equal, support <= 8).

    Kept intentionally naive and independent of the solver code paths: the
    only shared ingredient is numpy's vector norm.
    """
    if a.dim != b.dim:
        raise DimensionError(f"ambient dimensions differ: {a.dim} vs {b.dim}")
    n = a.size
    if n != b.size:
        raise SizeError(f"brute force needs equal supports, got {n} and {b.size}")
    if n > _BRUTE_FORCE_MAX:
        raise SizeError(f"brute force enumeration capped at {_BRUTE_FORCE_MAX} points, got {n}")
    if not (a.is_uniform() and b.is_uniform()):
        raise DataError("brute force enumeration requires uniform weights")

    best = np.inf
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i, j in enumerate(perm):
            total += float(np.linalg.norm(a.points[i] - b.points[j]))
        if total < best:
            best = total
    return best / n
