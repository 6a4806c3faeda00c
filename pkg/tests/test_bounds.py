"""Generalization-bound assembly and class-separation tests."""

import numpy as np
import pytest

from kvmargin.bounds import (
    BoundReport,
    corollary_bound,
    feature_diameter,
    margin_loss,
    pairwise_margin_loss,
    separation_check,
)
from kvmargin.errors import DataError, DomainError, LabelError, SampleSizeError
from kvmargin.margins import MarginDistribution
from tests.test_margins import linear_dump


def one_d_toy(m_per_class=8, jitter=0.0, seed=0):
    """Classes at -1/+1 on the line, scorers f_0(z) = -z, f_1(z) = z.

    With zero jitter every margin is exactly 2 and the class clouds sit at
    W1 distance 2; the scorers are 1-Lipschitz.
    """
    rng = np.random.default_rng(seed)
    z0 = -1.0 + jitter * rng.uniform(-1, 1, size=m_per_class)
    z1 = 1.0 + jitter * rng.uniform(-1, 1, size=m_per_class)
    feats = np.concatenate([z0, z1])[:, None]
    labels = np.array([0] * m_per_class + [1] * m_per_class)
    weights = np.array([[-1.0], [1.0]])
    return linear_dump(feats, labels, weights)


# ---------------------------------------------------------------------------
# margin loss


def test_margin_loss_examples():
    dist = MarginDistribution("raw", "", np.array([1.0, 2.0, 3.0]))
    assert margin_loss(dist, 0.0) == 0.0
    assert margin_loss(dist, 2.0) == pytest.approx(2 / 3)
    assert margin_loss(dist, 100.0) == 1.0


def test_margin_loss_monotone_step():
    rng = np.random.default_rng(0)
    dist = MarginDistribution("raw", "", rng.normal(size=50))
    gammas = np.linspace(-3, 3, 41)
    losses = [margin_loss(dist, g) for g in gammas]
    assert all(0.0 <= v <= 1.0 for v in losses)
    assert all(b >= a for a, b in zip(losses, losses[1:]))


def test_margin_loss_empty():
    with pytest.raises(SampleSizeError):
        margin_loss(MarginDistribution("raw", "", np.array([])), 0.0)


# ---------------------------------------------------------------------------
# diameter


def test_feature_diameter_basics():
    assert feature_diameter(np.array([[1.0, 2.0]])) == (0.0, True)
    value, exact = feature_diameter(np.array([[0.0], [3.0]]))
    assert value == 3.0 and exact


def test_feature_diameter_exact_matches_scan():
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(100, 4))
    value, exact = feature_diameter(feats)
    assert exact
    best = max(
        np.linalg.norm(feats[i] - feats[j]) for i in range(100) for j in range(i + 1, 100)
    )
    assert value == pytest.approx(best, rel=1e-12)


def test_feature_diameter_upper_mode_dominates():
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(5000, 3))
    upper, exact_flag = feature_diameter(feats)
    assert not exact_flag
    exact, _ = feature_diameter(feats[:4096])
    assert upper >= exact - 1e-12
    # and on a shared subset where both modes run, upper >= exact everywhere
    sub = feats[:500]
    dev = np.linalg.norm(sub - sub.mean(axis=0), axis=1)
    assert 2 * dev.max() >= feature_diameter(sub).value - 1e-12


def test_feature_diameter_errors():
    with pytest.raises(DataError):
        feature_diameter(np.array([[np.nan]]))


# ---------------------------------------------------------------------------
# corollary bound


def gaussian_dump(m_per_class=64, mu=1.0, d=3, seed=0):
    rng = np.random.default_rng(seed)
    f0 = rng.normal(size=(m_per_class, d)) + np.eye(d)[0] * mu
    f1 = rng.normal(size=(m_per_class, d)) - np.eye(d)[0] * mu
    feats = np.vstack([f0, f1])
    labels = np.array([0] * m_per_class + [1] * m_per_class)
    weights = np.vstack([np.eye(d)[0], -np.eye(d)[0]])
    return linear_dump(feats, labels, weights)


def test_corollary_bound_terms_and_total():
    dump = gaussian_dump()
    rep = corollary_bound(dump, "feat", gamma=1.0, delta=0.1, seed=3)
    assert isinstance(rep, BoundReport)
    for term in (rep.margin_loss, rep.kvariance_term, rep.diameter_term, rep.concentration_term):
        assert term >= 0.0
    assert 0.0 <= rep.margin_loss <= 1.0
    assert rep.total == pytest.approx(
        rep.margin_loss + rep.kvariance_term + rep.diameter_term + rep.concentration_term,
        abs=1e-12,
    )
    assert rep.B_estimate > 0
    assert rep.concentration_term == pytest.approx(
        np.sqrt(np.log(2 / 0.1) / (2 * dump.sample_count))
    )


def test_corollary_bound_gamma_limit():
    dump = gaussian_dump()
    rep = corollary_bound(dump, "feat", gamma=1e9, delta=0.25, seed=1)
    assert rep.margin_loss == 1.0
    assert rep.kvariance_term < 1e-6
    assert rep.diameter_term < 1e-6
    assert rep.total == pytest.approx(1.0 + rep.concentration_term, abs=1e-6)


def test_corollary_bound_kvariance_term_decreases_in_gamma():
    dump = gaussian_dump()
    reps = [corollary_bound(dump, "feat", g, 0.1, seed=2) for g in (0.5, 1.0, 2.0, 8.0)]
    kvs = [r.kvariance_term for r in reps]
    assert all(b <= a + 1e-15 for a, b in zip(kvs, kvs[1:]))


def test_corollary_bound_point_mass_classes():
    feats = np.array([[-1.0, 0.0]] * 8 + [[1.0, 0.0]] * 8)
    labels = np.array([0] * 8 + [1] * 8)
    dump = linear_dump(feats, labels, np.array([[-1.0, 0.0], [1.0, 0.0]]))
    rep = corollary_bound(dump, "feat", gamma=5.0, delta=0.1)
    assert rep.kvariance_term == 0.0
    assert rep.margin_loss == 1.0  # margins are exactly 2 <= 5


def test_corollary_bound_concentration_depends_only_on_m_delta():
    d1 = gaussian_dump(seed=4)
    d2 = gaussian_dump(seed=5, mu=3.0)
    r1 = corollary_bound(d1, "feat", 1.0, 0.2, seed=0)
    r2 = corollary_bound(d2, "feat", 2.5, 0.2, seed=9)
    assert r1.concentration_term == r2.concentration_term


def test_corollary_bound_gn_variant():
    dump = gaussian_dump()
    rep = corollary_bound(dump, "feat", gamma=0.5, delta=0.1, seed=0, margin_kind="gn")
    assert rep.total > 0
    # lips pinned at 1: kvariance_term = mean class kvar / gamma
    from kvmargin.kvariance import class_k_variances

    ests = class_k_variances(dump, "feat", seed=0)
    expect = sum(0.5 * e.value for e in ests.values()) / 0.5
    assert rep.kvariance_term == pytest.approx(expect, rel=1e-12)


def test_corollary_bound_n_splits():
    dump = gaussian_dump(m_per_class=32)
    rep = corollary_bound(dump, "feat", 1.0, 0.1, n_splits=4, seed=6)
    assert rep.total > 0
    with pytest.raises(SampleSizeError):
        corollary_bound(dump, "feat", 1.0, 0.1, n_splits=17, seed=6)


def test_corollary_bound_domain_errors():
    dump = gaussian_dump(m_per_class=8)
    with pytest.raises(DomainError):
        corollary_bound(dump, "feat", 1.0, 0.0)
    with pytest.raises(DomainError):
        corollary_bound(dump, "feat", 1.0, 1.0)
    with pytest.raises(DomainError):
        corollary_bound(dump, "feat", -1.0, 0.1)
    with pytest.raises(DomainError):
        corollary_bound(dump, "feat", 1.0, 0.1, n_splits=0)


# ---------------------------------------------------------------------------
# pairwise loss + separation


def test_pairwise_loss_separated_toy_is_zero():
    dump = one_d_toy()
    assert pairwise_margin_loss(dump, "feat", 0, 1, gamma=2.0) == 0.0


def test_pairwise_loss_identical_scores_equals_gamma():
    feats = np.ones((10, 2))
    labels = np.array([0] * 5 + [1] * 5)
    dump = linear_dump(feats, labels, np.zeros((2, 2)))
    assert pairwise_margin_loss(dump, "feat", 0, 1, gamma=1.3) == pytest.approx(1.3)


def test_pairwise_loss_matches_scalar_loop():
    rng = np.random.default_rng(3)
    dump = linear_dump(rng.normal(size=(20, 2)), rng.integers(0, 3, size=20), rng.normal(size=(3, 2)))
    gamma = 0.7
    y, y2 = 0, 2
    total_y = [
        max(gamma - (dump.scores[i, y] - dump.scores[i, y2]), 0.0)
        for i in range(20)
        if dump.labels[i] == y
    ]
    total_y2 = [
        max(gamma - (dump.scores[i, y2] - dump.scores[i, y]), 0.0)
        for i in range(20)
        if dump.labels[i] == y2
    ]
    want = 0.5 * (np.mean(total_y) + np.mean(total_y2))
    assert pairwise_margin_loss(dump, "feat", y, y2, gamma) == pytest.approx(want, abs=1e-12)


def test_pairwise_loss_missing_class():
    dump = one_d_toy()
    with pytest.raises(LabelError):
        pairwise_margin_loss(dump, "feat", 0, 5, 1.0)


def test_separation_toy_tight():
    dump = one_d_toy()
    rep = separation_check(dump, "feat", 0, 1, gamma=2.0, lipschitz_L=1.0)
    assert rep.w1_distance == pytest.approx(2.0, abs=1e-9)
    assert rep.pairwise_loss == 0.0
    assert rep.lower_bound == pytest.approx(2.0, abs=1e-12)
    assert not rep.violated
    assert rep.class_pair == (0, 1)


def test_separation_overlapping_classes():
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(16, 1))
    feats = np.vstack([feats, feats])  # identical clouds
    labels = np.array([0] * 16 + [1] * 16)
    dump = linear_dump(feats, labels, np.array([[1.0], [1.0]]))
    rep = separation_check(dump, "feat", 0, 1, gamma=0.5, lipschitz_L=1.0)
    assert rep.w1_distance == pytest.approx(0.0, abs=1e-9)
    assert rep.lower_bound <= 1e-12  # R_gamma = gamma for symmetric scores
    assert not rep.violated


def test_separation_scale_invariance_of_lower_bound():
    dump = one_d_toy(jitter=0.3, seed=5)
    r1 = separation_check(dump, "feat", 0, 1, gamma=1.0, lipschitz_L=1.0)
    scaled = one_d_toy(jitter=0.3, seed=5)
    scaled.scores = scaled.scores * 2.0
    r2 = separation_check(scaled, "feat", 0, 1, gamma=2.0, lipschitz_L=2.0)
    assert r2.lower_bound == pytest.approx(r1.lower_bound, rel=1e-12)
    assert r2.w1_distance == pytest.approx(r1.w1_distance, abs=1e-12)


def test_separation_inequality_on_jittered_family():
    # linear 1-Lipschitz scorers: W1 >= (gamma - loss)/L up to sampling noise
    for seed in range(5):
        dump = one_d_toy(m_per_class=256, jitter=0.2, seed=seed)
        gamma = 2.0
        rep = separation_check(dump, "feat", 0, 1, gamma=gamma, lipschitz_L=1.0, seed=seed)
        assert rep.w1_distance >= rep.lower_bound - 0.1 * gamma / 1.0


def test_separation_rejects_bad_lipschitz():
    with pytest.raises(DomainError):
        separation_check(one_d_toy(), "feat", 0, 1, 1.0, 0.0)
