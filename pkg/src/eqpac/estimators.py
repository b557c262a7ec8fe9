"""scikit-learn style wrapper around prior construction and posterior optimization."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bounds import (
    DEFAULT_DELTA, DEFAULT_PRIOR_STD, BoundSettings, OptimizerSettings, build_prior, improved_bound,
    mcallester_bound, optimize_posterior,
)
from .families import predict
from .risk import LossFn


class PacBayesRegressor(RegressorMixin, BaseEstimator):
    """Gaussian posterior over a parameter-linear family, fit against the bound.

    ``fit(X, y, prior_data=(X_prior, y_prior))`` centres the prior on the
    prior split and then optimizes the posterior on ``(X, y)``.  ``predict``
    uses the posterior mean; ``sample_predict`` draws posterior members.
    When ``projection`` is given, ``certify`` also reports the projected
    bound.
    """

    def __init__(self, family=None, loss="squared-clipped", prior_std=DEFAULT_PRIOR_STD, delta=DEFAULT_DELTA,
                 steps=2000, lr=1e-2, draws=8, eval_every=50, random_state=0, projection=None):
        self.family = family
        self.loss = loss
        self.prior_std = prior_std
        self.delta = delta
        self.steps = steps
        self.lr = lr
        self.draws = draws
        self.eval_every = eval_every
        self.random_state = random_state
        self.projection = projection

    def fit(self, X, y, prior_data=None):
        if self.family is None:
            raise ValueError("PacBayesRegressor needs a parameter-linear family")
        X, y = check_X_y(X, y, y_numeric=True)
        if prior_data is None:
            raise ValueError("fit needs prior_data=(X_prior, y_prior), disjoint from the training sample")
        Xp, yp = check_X_y(*prior_data, y_numeric=True)
        loss = LossFn(self.loss)
        self.prior_ = build_prior(Xp, yp, self.family, loss, self.prior_std)
        opt = OptimizerSettings(self.steps, self.lr, self.draws, self.eval_every, self.random_state)
        self.posterior_ = optimize_posterior(self.prior_, X, y, loss, self.delta, opt)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "posterior_")
        X = check_array(X)
        return predict(self.family, self.posterior_.measure.mean, X)

    def sample_predict(self, X, n_models: int = 1, seed=None):
        """Predictions ``(n_models, n)`` of independent posterior draws."""
        check_is_fitted(self, "posterior_")
        X = check_array(X)
        params = self.posterior_.measure.sample(n_models, np.random.default_rng(seed))
        return predict(self.family, params, X)

    def certify(self, X, y, n_models: int = 256, seed=None, empirical: str = "monte-carlo"):
        """Bound reports on ``(X, y)``: the plain one and, with a projection, the projected one."""
        check_is_fitted(self, "posterior_")
        X, y = check_X_y(X, y, y_numeric=True)
        settings = BoundSettings(self.delta, empirical, n_models, seed)
        loss = LossFn(self.loss)
        reports = [mcallester_bound(self.posterior_, self.prior_, X, y, loss, settings)]
        if self.projection is not None:
            reports.append(improved_bound(self.posterior_, self.prior_, self.projection, X, y, loss, settings))
        return reports
