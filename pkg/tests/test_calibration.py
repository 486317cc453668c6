import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from caus.calibration import (
    INFINITE_RADIUS,
    CalibratedRadius,
    calibrate,
    empirical_coverage,
    holdout_coverage,
    order_rank,
    radius_from_scores,
    score_samples,
    union_score,
)
from caus.errors import DimensionMismatch, RankUnattainable
from caus.gmm import ConditionalComponent, ConditionalGmm, condition, sample_conditional
from caus.synth import true_model

from .conftest import gaussian, random_conditional


def test_score_identity_covariance():
    assert union_score(gaussian([0.0, 0.0], np.eye(2)), [3.0, 4.0]) == pytest.approx(25.0, abs=1e-12)


def test_score_zero_at_each_center():
    model = random_conditional(np.random.default_rng(1), 3, 2)
    for c in model.components:
        assert union_score(model, c.mean) == pytest.approx(0.0, abs=1e-12)


def test_score_matches_explicit_inverse():
    rng = np.random.default_rng(2)
    model = random_conditional(rng, 2, 2)
    pts = rng.normal(scale=4.0, size=(20, 2))
    oracle = np.min([[(p - c.mean) @ np.linalg.inv(c.covariance) @ (p - c.mean) for c in model.components]
                     for p in pts], axis=1)
    assert np.allclose(union_score(model, pts), oracle, rtol=0, atol=1e-9)


def test_score_single_component_is_mahalanobis():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    model = gaussian([1.0, -1.0], cov)
    p = np.array([0.3, 2.0])
    assert union_score(model, p) == model.components[0].mahalanobis(p)[0]


def test_score_dimension_check():
    with pytest.raises(DimensionMismatch):
        union_score(gaussian([0.0, 0.0], np.eye(2)), [1.0, 2.0, 3.0])


def test_rank_at_reference_values():
    assert order_rank(0.05, 10000) == 9501
    assert calibrate(gaussian([0.0], [[1.0]]), 10000, 0.05, 0).kappa == 9501


def test_rank_smallest_case():
    r = calibrate(gaussian([0.0], [[1.0]]), 1, 0.5, 3)
    assert r.kappa == 1
    only = union_score(gaussian([0.0], [[1.0]]), sample_conditional(gaussian([0.0], [[1.0]]), 1, 3))
    assert r.gamma == only[0]


def test_rank_unattainable():
    with pytest.raises(RankUnattainable):
        calibrate(gaussian([0.0], [[1.0]]), 10, 0.01, 0)
    with pytest.raises(ValueError):
        order_rank(0.0, 10)


@given(st.floats(0.001, 0.999), st.integers(1, 10**6))
def test_rank_formula(eps, n):
    from fractions import Fraction

    k = order_rank(eps, n)
    exact = (1 - Fraction(eps)) * (n + 1)
    assert k - 1 < exact <= k


def test_gamma_chi_square_one_dimension():
    r = calibrate(gaussian([0.0], [[1.0]]), 100_000, 0.05, 0)
    assert abs(r.gamma - stats.chi2.ppf(0.95, 1)) < 0.15


def test_coverage_sentinels():
    model = gaussian([0.0, 0.0], np.eye(2))
    assert empirical_coverage(model, INFINITE_RADIUS, 100, 1) == 1.0
    assert empirical_coverage(model, 0.0, 1000, 1) == 0.0


def test_coverage_at_reference_values():
    cond = condition(true_model(), [65.0, 50.0])
    r = calibrate(cond, 10000, 0.05, 11)
    assert 0.94 <= empirical_coverage(cond, r, 10000, 12) <= 0.97


@given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_gamma_monotone_in_epsilon(seed, e1, e2):
    scores = score_samples(random_conditional(np.random.default_rng(seed), 2, 2), 500, seed).scores
    lo, hi = sorted((e1, e2))
    assert radius_from_scores(scores, lo).gamma >= radius_from_scores(scores, hi).gamma


def test_conformal_validity_marginal():
    rng = np.random.default_rng(77)
    model = random_conditional(rng, 2, 2)
    cover = [empirical_coverage(model, calibrate(model, 500, 0.1, 2 * r), 200, 2 * r + 1) for r in range(200)]
    assert np.mean(cover) >= 0.9


@given(st.integers(0, 10_000))
def test_scores_affine_invariant(seed):
    rng = np.random.default_rng(seed)
    model = random_conditional(rng, 2, 2)
    a = rng.normal(size=(2, 2)) + 3 * np.eye(2)
    b = rng.normal(size=2)
    mapped = ConditionalGmm(tuple(
        ConditionalComponent(c.weight, a @ c.mean + b, a @ c.covariance @ a.T) for c in model.components
    ))
    pts = rng.normal(scale=3.0, size=(10, 2))
    before = union_score(model, pts)
    after = union_score(mapped, pts @ a.T + b)
    assert np.allclose(before, after, rtol=1e-8, atol=1e-8)


def test_calibration_deterministic_and_serializable():
    model = random_conditional(np.random.default_rng(3), 2, 2)
    a = calibrate(model, 2000, 0.1, 5, period=3)
    b = calibrate(model, 2000, 0.1, 5, period=3)
    assert a == b
    assert CalibratedRadius.from_dict(a.to_dict()) == a
    assert set(a.to_dict()) >= {"period", "epsilon", "n_samples", "kappa", "gamma", "seed"}


def test_score_histogram_counts():
    scores = score_samples(gaussian([0.0], [[1.0]]), 1000, 0)
    lines = scores.histogram_csv(bins=10).strip().splitlines()
    assert lines[0] == "score,count"
    assert sum(int(line.split(",")[1]) for line in lines[1:]) == 1000


def test_holdout_coverage_is_a_fraction():
    model = gaussian([0.0], [[1.0]])
    r = calibrate(model, 1000, 0.1, 0)
    obs = np.array([[0.0], [10.0]])
    assert holdout_coverage(model, r, obs) == 0.5
    assert math.isfinite(r.gamma)
