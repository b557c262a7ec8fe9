import numpy as np
import pytest
from sklearn.base import clone

from eqpac.averaging import build_parameter_projection
from eqpac.data import builtin_scenario
from eqpac.estimators import PacBayesRegressor
from eqpac.families import LinearFamily


@pytest.fixture(scope="module")
def swap_splits():
    spec = builtin_scenario("swap-toy")
    rng = np.random.default_rng(0)
    return spec, spec.sample(100, rng), spec.sample(300, rng)


def test_fit_predict_certify(swap_splits):
    spec, prior_ds, train = swap_splits
    family = LinearFamily(2)
    projection = build_parameter_projection(family, spec.resolver, spec.kernel)
    model = PacBayesRegressor(family=family, steps=200, projection=projection, random_state=3)
    model.fit(train.X, train.y, prior_data=(prior_ds.X, prior_ds.y))
    assert model.predict(train.X).shape == (len(train),)
    assert model.sample_predict(train.X, n_models=5, seed=1).shape == (5, len(train))
    plain, improved = model.certify(train.X, train.y, empirical="exact")
    assert plain.variant == "mcallester" and improved.variant == "improved"
    assert improved.complexity_term <= plain.complexity_term + 1e-12
    assert 0.0 < model.score(train.X, train.y) <= 1.0


def test_params_round_trip_through_clone():
    model = PacBayesRegressor(family=LinearFamily(2), delta=0.1, steps=10)
    copy = clone(model)
    assert copy.get_params()["delta"] == 0.1 and copy.get_params()["steps"] == 10


def test_fit_requires_family_and_prior_data(swap_splits):
    spec, prior_ds, train = swap_splits
    with pytest.raises(ValueError):
        PacBayesRegressor().fit(train.X, train.y, prior_data=(prior_ds.X, prior_ds.y))
    with pytest.raises(ValueError):
        PacBayesRegressor(family=LinearFamily(2)).fit(train.X, train.y)


def test_same_random_state_same_posterior(swap_splits):
    spec, prior_ds, train = swap_splits
    fits = [PacBayesRegressor(family=LinearFamily(2), steps=100, random_state=5)
            .fit(train.X, train.y, prior_data=(prior_ds.X, prior_ds.y)) for _ in range(2)]
    np.testing.assert_array_equal(fits[0].posterior_.measure.mean, fits[1].posterior_.measure.mean)
