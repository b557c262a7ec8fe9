import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from eqpac.errors import NotIdempotent
from eqpac.measures import (
    DiscreteMeasure, GaussianMeasure, conditional_residual_gaussian, kl_decompose_discrete, kl_decompose_gaussian, kl_discrete, kl_gaussian,
    pushforward_discrete, pushforward_gaussian,
)

HALF = np.full((2, 2), 0.5)


def test_two_point_kl_by_hand():
    nu = DiscreteMeasure(("a", "b"), [0.5, 0.5])
    mu = DiscreteMeasure(("a", "b"), [0.25, 0.75])
    expected = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
    assert kl_discrete(nu, mu) == pytest.approx(expected, abs=1e-15)
    dec = kl_decompose_discrete(nu, mu, {"a": "a", "b": "b"})
    assert dec.pushforward_kl == pytest.approx(expected, abs=1e-15)
    assert abs(dec.residual) <= 1e-15


def test_constant_map_moves_everything_into_the_residual():
    nu = DiscreteMeasure((0, 1, 2), [0.2, 0.3, 0.5])
    mu = DiscreteMeasure((0, 1, 2), [0.4, 0.4, 0.2])
    dec = kl_decompose_discrete(nu, mu, lambda s: "point")
    assert dec.pushforward_kl == 0.0
    assert dec.residual == pytest.approx(dec.total, abs=1e-15)


def test_missing_support_gives_infinite_kl():
    nu = DiscreteMeasure((0, 1), [0.5, 0.5])
    mu = DiscreteMeasure((0,), [1.0])
    assert math.isinf(kl_discrete(nu, mu))
    assert kl_discrete(mu, nu) == pytest.approx(math.log(2))


def test_discrete_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure((0, 1), [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure((0, 0), [0.5, 0.5])


def test_pushforward_discrete_merges_atoms():
    m = DiscreteMeasure((0, 1, 2, 3), [0.1, 0.2, 0.3, 0.4])
    assert pushforward_discrete(lambda s: s % 2, m).as_dict() == pytest.approx({0: 0.4, 1: 0.6})


def test_gaussian_pushforward_of_the_swap_average():
    image = pushforward_gaussian(HALF, GaussianMeasure([1.0, 0.0], np.eye(2)))
    np.testing.assert_allclose(image.mean, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(image.covariance, HALF, atol=1e-15)


def test_zero_map_gives_a_point_mass():
    image = pushforward_gaussian(np.zeros((2, 2)), GaussianMeasure([3.0, -1.0], np.eye(2)))
    np.testing.assert_array_equal(image.mean, [0.0, 0.0])
    np.testing.assert_array_equal(image.covariance, np.zeros((2, 2)))
    assert kl_gaussian(image, image) == 0.0


def test_swap_average_split():
    nu = GaussianMeasure([1.0, 0.0], np.eye(2))
    mu = GaussianMeasure([0.0, 0.0], np.eye(2))
    dec = kl_decompose_gaussian(nu, mu, HALF)
    assert abs(dec.total - 0.5) <= 1e-12
    assert abs(dec.pushforward_kl - 0.25) <= 1e-12
    assert abs(dec.residual - 0.25) <= 1e-12
    assert dec.cross_check == pytest.approx(0.25, abs=1e-12)


def test_non_idempotent_map_is_rejected():
    nu = GaussianMeasure([1.0, 0.0], np.eye(2))
    with pytest.raises(NotIdempotent):
        kl_decompose_gaussian(nu, nu, [[1.0, 1.0], [0.0, 1.0]])


def test_singular_support_rules():
    flat = GaussianMeasure([0.0, 0.0], np.diag([1.0, 0.0]))
    shifted_inside = GaussianMeasure([0.5, 0.0], np.diag([2.0, 0.0]))
    shifted_outside = GaussianMeasure([0.0, 1e-3], np.diag([1.0, 0.0]))
    other_line = GaussianMeasure([0.0, 0.0], np.diag([0.0, 1.0]))
    expected = 0.5 * (2.0 + 0.25 - 1.0 - math.log(2.0))
    assert kl_gaussian(shifted_inside, flat) == pytest.approx(expected, abs=1e-14)
    assert math.isinf(kl_gaussian(shifted_outside, flat))
    assert math.isinf(kl_gaussian(other_line, flat))
    assert math.isinf(kl_gaussian(GaussianMeasure([0.0, 0.0], np.eye(2)), flat))


def test_gaussian_validation_and_csv():
    with pytest.raises(ValueError):
        GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        GaussianMeasure([0.0], [[-1.0]])
    m = GaussianMeasure([0.1, 0.2], [[1.0, 0.3], [0.3, 2.0]])
    back = GaussianMeasure.from_csv(m.to_csv())
    np.testing.assert_array_equal(back.mean, m.mean)
    np.testing.assert_array_equal(back.covariance, m.covariance)


def test_full_rank_kl_matches_log_density_average():
    rng = np.random.default_rng(5)
    for _ in range(3):
        L = rng.standard_normal((3, 3))
        M = rng.standard_normal((3, 3))
        nu = GaussianMeasure(rng.standard_normal(3), L @ L.T + 0.5 * np.eye(3))
        mu = GaussianMeasure(rng.standard_normal(3), M @ M.T + 0.5 * np.eye(3))
        draws = nu.sample(400_000, rng)
        ratio = (multivariate_normal(nu.mean, nu.covariance).logpdf(draws)
                 - multivariate_normal(mu.mean, mu.covariance).logpdf(draws))
        se = ratio.std() / math.sqrt(len(ratio))
        assert abs(kl_gaussian(nu, mu) - ratio.mean()) <= 4 * se


def random_projector(rng, p):
    rank = int(rng.integers(0, p + 1))
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    U = Q[:, :rank]
    return U @ U.T


def random_spd(rng, p):
    L = rng.standard_normal((p, p))
    return L @ L.T + 0.1 * np.eye(p)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_gaussian_split_identity(seed, p):
    rng = np.random.default_rng(seed)
    nu = GaussianMeasure(rng.standard_normal(p), random_spd(rng, p))
    mu = GaussianMeasure(rng.standard_normal(p), random_spd(rng, p))
    dec = kl_decompose_gaussian(nu, mu, random_projector(rng, p))
    assert dec.defect <= 1e-9
    assert dec.residual >= -1e-12
    assert dec.pushforward_kl <= dec.total + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_direct_residual_matches_subtraction_for_oblique_projectors(seed, p):
    rng = np.random.default_rng(seed)
    nu = GaussianMeasure(rng.standard_normal(p), random_spd(rng, p))
    mu = GaussianMeasure(rng.standard_normal(p), random_spd(rng, p))
    # B P B^-1 is idempotent but generally not symmetric
    B = rng.standard_normal((p, p)) + 3 * np.eye(p)
    A = B @ random_projector(rng, p) @ np.linalg.inv(B)
    direct = conditional_residual_gaussian(nu, mu, A)
    total = kl_gaussian(nu, mu)
    push = kl_gaussian(pushforward_gaussian(A, nu), pushforward_gaussian(A, mu))
    assert direct >= -1e-12
    assert direct == pytest.approx(total - push, abs=1e-7 * max(1.0, total))


def test_singular_covariance_falls_back_to_subtraction():
    nu = GaussianMeasure([0.0, 0.0], np.diag([1.0, 0.0]))
    assert conditional_residual_gaussian(nu, nu, np.eye(2)) is None
    dec = kl_decompose_gaussian(nu, nu, np.diag([1.0, 0.0]))
    assert dec.residual == 0.0 and dec.cross_check is None


weights = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8)


@settings(max_examples=200, deadline=None)
@given(weights, st.data())
def test_discrete_chain_rule(raw, data):
    size = len(raw)
    mu_w = np.array(raw) / sum(raw)
    nu_raw = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=size, max_size=size)))
    if nu_raw.sum() == 0:
        nu_raw[0] = 1.0
    nu_w = nu_raw / nu_raw.sum()
    images = data.draw(st.lists(st.integers(0, 3), min_size=size, max_size=size))
    nu, mu = DiscreteMeasure(tuple(range(size)), nu_w), DiscreteMeasure(tuple(range(size)), mu_w)
    dec = kl_decompose_discrete(nu, mu, dict(enumerate(images)))
    assert dec.pushforward_kl <= dec.total + 1e-12
    assert dec.residual >= -1e-12
    assert abs(dec.total - dec.pushforward_kl - dec.residual) <= 1e-9
